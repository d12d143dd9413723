#pragma once

#include "aprlab/pose.h"
#include "aprlab/types.h"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aprlab {

/// Pinhole intrinsics. The sensor spans [0, 2 cx) x [0, 2 cy).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Intrinsics() = default;
  Intrinsics(double fx_, double fy_, double cx_, double cy_);

  double width() const { return 2.0 * cx; }
  double height() const { return 2.0 * cy; }
  bool contains(const Vector2d& px) const {
    return px.x() >= 0 && px.y() >= 0 && px.x() < width() && px.y() < height();
  }
};

struct Correspondence {
  Vector2d pixel;
  Vector3d point;
};

struct Projection {
  Vector2d pixel = Vector2d::Zero();
  double depth = 0.0;
  bool behind = true;  // depth <= 1e-9
};

/// Maps world point X to the image of camera pose (c, q) through R(q) (X - c).
Projection project(const Posed& pose, const Intrinsics& intr, const Vector3d& point);

/// Unit viewing ray in camera coordinates.
Vector3d bearing(const Intrinsics& intr, const Vector2d& pixel);

/// All real solutions of the three-point absolute pose problem (Grunert).
/// Throws when the 3D points are collinear or two rays coincide.
std::vector<Posed> p3p_solve(const Correspondence& c1, const Correspondence& c2,
                             const Correspondence& c3, const Intrinsics& intr);

struct RansacConfig {
  double inlier_threshold = 4.0;  // pixels
  double confidence = 0.9999;
  int max_iterations = 10000;
  std::uint64_t seed = 0;
  int min_inliers = 4;
};

struct RansacResult {
  Posed pose;
  std::vector<std::size_t> inliers;
  int iterations = 0;
};

/// Thrown when no hypothesis gathers enough inliers.
class LocalizationFailed : public Error {
public:
  LocalizationFailed() : Error("localization failed") {}
};

RansacResult ransac_pnp(std::span<const Correspondence> matches, const Intrinsics& intr,
                        const RansacConfig& cfg);

/// Inliers of a pose under a reprojection threshold; behind-camera points never count.
std::vector<std::size_t> inliers_for(const Posed& pose, std::span<const Correspondence> matches,
                                     const Intrinsics& intr, double threshold);

/// 2m residual vector and its 2m x 6 Jacobian with respect to the local
/// update (d_c, omega): c' = c + d_c, R' = exp([omega]_x) R.
struct ReprojectionLinearization {
  VectorXd residuals;
  Eigen::Matrix<double, Eigen::Dynamic, 6> jacobian;
};

ReprojectionLinearization linearize_reprojection(const Posed& pose,
                                                 std::span<const Correspondence> matches,
                                                 const Intrinsics& intr);
/// Sum of squared reprojection errors; infinite if a point is behind the camera.
double reprojection_cost(const Posed& pose, std::span<const Correspondence> matches,
                         const Intrinsics& intr);
Posed apply_pose_update(const Posed& pose, const Eigen::Matrix<double, 6, 1>& delta);

struct RefineOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
};

struct RefineResult {
  Posed pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
};

/// Levenberg-Marquardt on the total squared reprojection error.
RefineResult refine_pose(const Posed& init, std::span<const Correspondence> matches,
                         const Intrinsics& intr, const RefineOptions& options = {});

/// One block per image: header `image_id count fx fy cx cy`, then rows `u v X Y Z`.
struct CorrespondenceBlock {
  std::string image_id;
  Intrinsics intrinsics;
  std::vector<Correspondence> matches;
};

void write_correspondences(std::ostream& out, std::span<const CorrespondenceBlock> blocks);
std::vector<CorrespondenceBlock> read_correspondences(std::istream& in);

}  // namespace aprlab
