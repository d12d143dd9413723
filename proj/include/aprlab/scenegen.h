#pragma once

#include "aprlab/apr_head.h"
#include "aprlab/geo_solver.h"
#include "aprlab/io.h"
#include "aprlab/pose.h"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace aprlab {

struct Landmark {
  Vector3d position;
  double appearance = 0.0;  // seed in [0, 1) that shapes the landmark's look
};

struct Scene {
  std::vector<Landmark> landmarks;
  Eigen::AlignedBox3d extent;
  std::uint64_t seed = 0;
};

/// Landmarks drawn uniformly inside the box.
Scene make_scene(const Eigen::AlignedBox3d& box, int landmark_count, std::uint64_t seed);
/// Validates and recomputes the extent.
Scene scene_from_landmarks(std::vector<Landmark> landmarks, std::uint64_t seed);

/// Header `landmark_count seed`, then rows `X Y Z appearance_seed`.
void write_scene(std::ostream& out, const Scene& scene);
Scene read_scene(std::istream& in);
Scene load_scene_file(const std::filesystem::path& path);
void save_scene_file(const std::filesystem::path& path, const Scene& scene);

enum class TrajectoryTag { kTraining, kTest };

struct Trajectory {
  std::vector<PoseRecord> poses;
  TrajectoryTag tag = TrajectoryTag::kTraining;

  std::vector<Vector3d> positions() const;
  std::vector<Posed> pose_list() const;
};

std::string to_string(TrajectoryTag tag);
/// Pose-record file with a leading `# tag` comment.
void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory load_trajectory(const std::filesystem::path& path);

/// Camera orientation convention: z forward, x right, y down, with the world
/// z axis as up.
Vector4d look_direction_quaternion(const Vector3d& forward);

struct FixedOrientation {
  Vector4d quaternion;
};
struct LookAt {
  Vector3d target;
};
using OrientationRule = std::variant<FixedOrientation, LookAt>;

Posed make_pose(const Vector3d& position, const OrientationRule& rule);

struct TrajectoryNaming {
  std::string prefix = "img";
  int first_index = 0;
  TrajectoryTag tag = TrajectoryTag::kTraining;
};

/// Positions origin + i * spacing * normalize(direction), i = 0 .. count - 1.
Trajectory line_trajectory(const Vector3d& origin, const Vector3d& direction, int count,
                           double spacing, const OrientationRule& rule,
                           const TrajectoryNaming& naming = {});

/// Ellipse in the horizontal plane through `center`.
Trajectory planar_loop_trajectory(const Vector3d& center, const Vector2d& radii, int count,
                                  const OrientationRule& rule,
                                  const TrajectoryNaming& naming = {});

/// `line_count` copies of a line, offset horizontally perpendicular to the
/// direction by multiples of `line_spacing`.
Trajectory parallel_lines_trajectory(const Vector3d& origin, const Vector3d& direction,
                                     int line_count, double line_spacing, int poses_per_line,
                                     double pose_spacing, const OrientationRule& rule,
                                     const TrajectoryNaming& naming = {});

struct PlaneFrame {
  Vector3d anchor, normal, u, v;  // u, v span the plane; normal has z >= 0
};

/// Best-fit plane of the points with u along the principal direction.
/// Collinear points use the plane through the line whose normal is closest to
/// vertical; a single point uses the horizontal plane. Throws on a vertical
/// line.
PlaneFrame dominant_plane(std::span<const Vector3d> points);

/// Extra training poses on a regular grid in the plane of the training
/// positions. Only grid points within max_distance of a training position are
/// kept, and each copies the orientation of its nearest training pose.
Trajectory grid_augment(const Trajectory& training, double spacing, double max_distance,
                        const std::string& prefix = "grid");

struct AppearanceModel {
  int height = 96;
  int width = 128;
  double focal = 100.0;            // pixels
  double splat_radius = 6.0;       // pixels at the reference depth
  double reference_depth = 6.0;    // meters
  double falloff_depth = 12.0;     // intensity halves at this depth
  int embedding_dim = 512;
  std::uint64_t embedding_seed = 0;
  int feature_rows = 4;
  int feature_cols = 6;
  int appearance_channels = 4;

  void validate() const;
  Intrinsics intrinsics() const;
};

/// Landmarks splatted as radially decaying blobs; occlusion is ignored.
MatrixXd render_image(const Scene& scene, const AppearanceModel& model, const Posed& pose,
                      const Intrinsics& intr);

/// Synthetic embedding: a seeded random projection of visibility-weighted
/// landmark features pooled over a coarse image grid and normalized to unit
/// sum, clamped at zero.
Embedding render_embedding(const Scene& scene, const AppearanceModel& model, const Posed& pose);

struct CorrespondenceOptions {
  double pixel_noise_sigma = 0.0;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;
  /// Outlier pixels are redrawn until they are at least this far from the
  /// true projection.
  double min_outlier_offset = 10.0;
  /// When set, only landmarks flagged true are used.
  std::optional<std::vector<bool>> allowed_landmarks;
};

struct CorrespondenceSet {
  std::vector<Correspondence> matches;
  std::vector<bool> outlier;
};

CorrespondenceSet make_correspondences(const Scene& scene, const Posed& pose,
                                       const Intrinsics& intr,
                                       const CorrespondenceOptions& options);

/// Landmarks projecting inside the image of at least one of the poses.
std::vector<bool> visible_landmarks(const Scene& scene, std::span<const Posed> poses,
                                    const Intrinsics& intr);

}  // namespace aprlab
