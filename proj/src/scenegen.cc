#include "aprlab/scenegen.h"

#include "aprlab/subspace_fit.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace aprlab {
namespace {

constexpr double kTwoPi = 6.28318530717958647692;

std::string make_id(const std::string& prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return prefix + "_" + buf;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

Scene scene_from_landmarks(std::vector<Landmark> landmarks, std::uint64_t seed) {
  if (landmarks.empty()) throw Error("scene needs at least one landmark");
  Scene scene;
  scene.seed = seed;
  scene.extent.setEmpty();
  for (const auto& l : landmarks) {
    if (!l.position.allFinite() || !std::isfinite(l.appearance)) {
      throw Error("scene landmarks must be finite");
    }
    scene.extent.extend(l.position);
  }
  scene.landmarks = std::move(landmarks);
  return scene;
}

Scene make_scene(const Eigen::AlignedBox3d& box, int landmark_count, std::uint64_t seed) {
  if (landmark_count < 1) throw Error("scene needs at least one landmark");
  if (box.isEmpty()) throw Error("scene box is empty");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Landmark> landmarks;
  landmarks.reserve(static_cast<std::size_t>(landmark_count));
  const Vector3d size = box.sizes();
  for (int i = 0; i < landmark_count; ++i) {
    Vector3d p;
    for (int k = 0; k < 3; ++k) p[k] = box.min()[k] + size[k] * unit(rng);
    landmarks.push_back({p, unit(rng)});
  }
  return scene_from_landmarks(std::move(landmarks), seed);
}

void write_scene(std::ostream& out, const Scene& scene) {
  out << scene.landmarks.size() << ' ' << scene.seed << '\n';
  for (const auto& l : scene.landmarks) {
    out << format_number(l.position.x()) << ' ' << format_number(l.position.y()) << ' '
        << format_number(l.position.z()) << ' ' << format_number(l.appearance) << '\n';
  }
}

Scene read_scene(std::istream& in) {
  std::string line;
  if (!detail::next_data_line(in, line)) throw Error("scene file: missing header");
  std::istringstream header(line);
  long count = 0;
  std::uint64_t seed = 0;
  if (!(header >> count >> seed) || count < 1) {
    throw Error("scene file: header must be `landmark_count seed`");
  }
  std::vector<Landmark> landmarks;
  for (long i = 0; i < count; ++i) {
    if (!detail::next_data_line(in, line)) throw Error("scene file: truncated");
    std::istringstream ss(line);
    std::string tok[4];
    if (!(ss >> tok[0] >> tok[1] >> tok[2] >> tok[3])) throw Error("scene file: short row");
    landmarks.push_back({Vector3d(detail::parse_number(tok[0]), detail::parse_number(tok[1]),
                                  detail::parse_number(tok[2])),
                         detail::parse_number(tok[3])});
  }
  return scene_from_landmarks(std::move(landmarks), seed);
}

Scene load_scene_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_scene(in);
}

void save_scene_file(const std::filesystem::path& path, const Scene& scene) {
  auto out = detail::open_output(path);
  write_scene(out, scene);
}

std::vector<Vector3d> Trajectory::positions() const {
  std::vector<Vector3d> out;
  out.reserve(poses.size());
  for (const auto& r : poses) out.push_back(r.pose.position());
  return out;
}

std::vector<Posed> Trajectory::pose_list() const {
  std::vector<Posed> out;
  out.reserve(poses.size());
  for (const auto& r : poses) out.push_back(r.pose);
  return out;
}

std::string to_string(TrajectoryTag tag) {
  return tag == TrajectoryTag::kTraining ? "training" : "test";
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  save_pose_file(path, trajectory.poses, "trajectory " + to_string(trajectory.tag));
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  Trajectory t;
  {
    auto in = detail::open_input(path);
    std::string first;
    std::getline(in, first);
    if (first.find("trajectory test") != std::string::npos) t.tag = TrajectoryTag::kTest;
  }
  t.poses = load_pose_file(path);
  return t;
}

Vector4d look_direction_quaternion(const Vector3d& forward) {
  const Vector3d z = forward.normalized();
  const Vector3d up(0, 0, 1);
  const Vector3d right = z.cross(up);
  if (!(forward.norm() > 0) || right.norm() < 1e-9) {
    throw Error("look direction must be nonzero and not vertical");
  }
  const Vector3d x = right.normalized();
  const Vector3d y = z.cross(x);
  Matrix3d R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  const Eigen::Quaterniond q(R);
  return Vector4d(q.w(), q.x(), q.y(), q.z());
}

Posed make_pose(const Vector3d& position, const OrientationRule& rule) {
  if (const auto* fixed = std::get_if<FixedOrientation>(&rule)) {
    return Posed(position, fixed->quaternion);
  }
  const auto& look = std::get<LookAt>(rule);
  return Posed(position, look_direction_quaternion(look.target - position));
}

Trajectory line_trajectory(const Vector3d& origin, const Vector3d& direction, int count,
                           double spacing, const OrientationRule& rule,
                           const TrajectoryNaming& naming) {
  if (count < 2) throw Error("line_trajectory: count must be at least 2");
  if (!(spacing > 0)) throw Error("line_trajectory: spacing must be positive");
  if (!(direction.norm() > 0)) throw Error("line_trajectory: zero direction");
  const Vector3d d = direction.normalized();
  Trajectory t;
  t.tag = naming.tag;
  for (int i = 0; i < count; ++i) {
    t.poses.push_back({make_id(naming.prefix, naming.first_index + i),
                       make_pose(origin + (i * spacing) * d, rule)});
  }
  return t;
}

Trajectory planar_loop_trajectory(const Vector3d& center, const Vector2d& radii, int count,
                                  const OrientationRule& rule, const TrajectoryNaming& naming) {
  if (count < 3) throw Error("planar_loop_trajectory: count must be at least 3");
  if (!(radii.x() > 0) || !(radii.y() > 0)) {
    throw Error("planar_loop_trajectory: radii must be positive");
  }
  Trajectory t;
  t.tag = naming.tag;
  for (int i = 0; i < count; ++i) {
    const double phi = kTwoPi * i / count;
    const Vector3d p = center + Vector3d(radii.x() * std::cos(phi), radii.y() * std::sin(phi), 0);
    t.poses.push_back({make_id(naming.prefix, naming.first_index + i), make_pose(p, rule)});
  }
  return t;
}

Trajectory parallel_lines_trajectory(const Vector3d& origin, const Vector3d& direction,
                                     int line_count, double line_spacing, int poses_per_line,
                                     double pose_spacing, const OrientationRule& rule,
                                     const TrajectoryNaming& naming) {
  if (line_count < 1) throw Error("parallel_lines_trajectory: line_count must be at least 1");
  if (!(line_spacing > 0)) throw Error("parallel_lines_trajectory: line spacing must be positive");
  if (!(direction.norm() > 0)) throw Error("parallel_lines_trajectory: zero direction");
  const Vector3d side = Vector3d::UnitZ().cross(direction.normalized());
  if (side.norm() < 1e-9) throw Error("parallel_lines_trajectory: direction must not be vertical");
  Trajectory t;
  t.tag = naming.tag;
  for (int l = 0; l < line_count; ++l) {
    TrajectoryNaming line_naming = naming;
    line_naming.first_index = naming.first_index + l * poses_per_line;
    auto line = line_trajectory(origin + (l * line_spacing) * side.normalized(), direction,
                                poses_per_line, pose_spacing, rule, line_naming);
    t.poses.insert(t.poses.end(), line.poses.begin(), line.poses.end());
  }
  return t;
}

PlaneFrame dominant_plane(std::span<const Vector3d> points) {
  if (points.empty()) throw Error("dominant_plane: no points");
  Vector3d centroid = Vector3d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Matrix3d scatter = Matrix3d::Zero();
  for (const auto& p : points) scatter += (p - centroid) * (p - centroid).transpose();
  scatter /= static_cast<double>(points.size());
  const Eigen::SelfAdjointEigenSolver<Matrix3d> eig(scatter);
  const Vector3d ev = eig.eigenvalues();
  const double tol = 1e-24 + 1e-12 * ev[2];

  PlaneFrame f;
  f.anchor = centroid;
  if (ev[1] > tol) {
    const PlaneFit<double> plane = fit_plane<double>(points, 0.0);
    f.normal = plane.normal;
    detail::PrincipalAxes<double> axes{centroid, ev, eig.eigenvectors()};
    f.u = detail::select_axis(axes, 2);
    f.u = (f.u - f.u.dot(f.normal) * f.normal).normalized();
  } else if (ev[2] > tol) {
    f.u = detail::canonical_sign<double>(eig.eigenvectors().col(2).normalized());
    const Vector3d up = Vector3d::UnitZ();
    f.normal = up - up.dot(f.u) * f.u;
    if (f.normal.norm() < 1e-6) throw Error("degenerate plane fit");
    f.normal.normalize();
  } else {
    f.normal = Vector3d::UnitZ();
    f.u = Vector3d::UnitX();
  }
  if (f.normal.z() < 0 || (f.normal.z() == 0 && f.normal != detail::canonical_sign(f.normal))) {
    f.normal = -f.normal;
  }
  f.v = f.normal.cross(f.u);
  return f;
}

Trajectory grid_augment(const Trajectory& training, double spacing, double max_distance,
                        const std::string& prefix) {
  if (training.poses.empty()) throw Error("grid_augment: empty training trajectory");
  if (!(spacing > 0)) throw Error("grid_augment: spacing must be positive");
  if (!(max_distance >= 0)) throw Error("grid_augment: max_distance must be nonnegative");
  const std::vector<Vector3d> positions = training.positions();
  const PlaneFrame f = dominant_plane(positions);

  double s_min = std::numeric_limits<double>::infinity(), s_max = -s_min;
  double t_min = s_min, t_max = -s_min;
  for (const auto& p : positions) {
    const double s = (p - f.anchor).dot(f.u);
    const double t = (p - f.anchor).dot(f.v);
    s_min = std::min(s_min, s);
    s_max = std::max(s_max, s);
    t_min = std::min(t_min, t);
    t_max = std::max(t_max, t);
  }
  const long i0 = static_cast<long>(std::floor((s_min - max_distance) / spacing));
  const long i1 = static_cast<long>(std::ceil((s_max + max_distance) / spacing));
  const long j0 = static_cast<long>(std::floor((t_min - max_distance) / spacing));
  const long j1 = static_cast<long>(std::ceil((t_max + max_distance) / spacing));
  if (static_cast<double>(i1 - i0 + 1) * static_cast<double>(j1 - j0 + 1) > 5e7) {
    throw Error("grid_augment: grid too large");
  }

  Trajectory out;
  out.tag = TrajectoryTag::kTraining;
  int next = 0;
  for (long i = i0; i <= i1; ++i) {
    for (long j = j0; j <= j1; ++j) {
      const Vector3d g = f.anchor + (static_cast<double>(i) * spacing) * f.u +
                         (static_cast<double>(j) * spacing) * f.v;
      double best = std::numeric_limits<double>::infinity();
      std::size_t nearest = 0;
      for (std::size_t k = 0; k < positions.size(); ++k) {
        const double d = (positions[k] - g).norm();
        if (d < best) {
          best = d;
          nearest = k;
        }
      }
      if (best > max_distance + 1e-9 || best < spacing / 100.0) continue;
      out.poses.push_back({make_id(prefix, next++),
                           Posed(g, training.poses[nearest].pose.orientation())});
    }
  }
  return out;
}

void AppearanceModel::validate() const {
  if (height < 32 || width < 32) throw Error("appearance model: image must be at least 32x32");
  if (embedding_dim < 4) throw Error("appearance model: embedding dimension must be at least 4");
  if (!(focal > 0) || !(splat_radius > 0) || !(reference_depth > 0) || !(falloff_depth > 0)) {
    throw Error("appearance model: rendering parameters must be positive");
  }
  if (feature_rows < 1 || feature_cols < 1 || appearance_channels < 1) {
    throw Error("appearance model: feature grid must be non-empty");
  }
}

Intrinsics AppearanceModel::intrinsics() const {
  return Intrinsics(focal, focal, 0.5 * width, 0.5 * height);
}

MatrixXd render_image(const Scene& scene, const AppearanceModel& model, const Posed& pose,
                      const Intrinsics& intr) {
  model.validate();
  MatrixXd image = MatrixXd::Zero(model.height, model.width);
  for (const auto& l : scene.landmarks) {
    const Projection p = project(pose, intr, l.position);
    if (p.behind || p.depth < 0.1) continue;
    const double sigma = std::clamp(model.splat_radius * model.reference_depth / p.depth, 0.8, 10.0);
    const double reach = 3.0 * sigma;
    const double u = p.pixel.x(), v = p.pixel.y();
    if (u < -reach || v < -reach || u > model.width + reach || v > model.height + reach) continue;
    const double depth_ratio = p.depth / model.falloff_depth;
    const double amplitude = (0.4 + 0.6 * l.appearance) / (1.0 + depth_ratio * depth_ratio);
    const double ring = kTwoPi / (sigma * (1.5 + 2.0 * l.appearance));
    const int c0 = std::max(0, static_cast<int>(std::floor(u - reach)));
    const int c1 = std::min(model.width - 1, static_cast<int>(std::ceil(u + reach)));
    const int r0 = std::max(0, static_cast<int>(std::floor(v - reach)));
    const int r1 = std::min(model.height - 1, static_cast<int>(std::ceil(v + reach)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double dist = std::hypot(c - u, r - v);
        if (dist > reach) continue;
        image(r, c) += amplitude * std::exp(-0.5 * dist * dist / (sigma * sigma)) *
                       (0.65 + 0.35 * std::cos(ring * dist));
      }
    }
  }
  return image;
}

Embedding render_embedding(const Scene& scene, const AppearanceModel& model, const Posed& pose) {
  model.validate();
  const Intrinsics intr = model.intrinsics();
  const int cells = model.feature_rows * model.feature_cols;
  const int channels = model.appearance_channels;
  VectorXd pooled = VectorXd::Zero(cells * channels);
  const double cell_w = static_cast<double>(model.width) / model.feature_cols;
  const double cell_h = static_cast<double>(model.height) / model.feature_rows;
  const double kernel_sigma = 0.6 * std::max(cell_w, cell_h);
  const double margin_u = 0.1 * model.width, margin_v = 0.1 * model.height;

  for (const auto& l : scene.landmarks) {
    const Projection p = project(pose, intr, l.position);
    if (p.behind || p.depth <= 0.2) continue;
    const double depth_ratio = p.depth / model.falloff_depth;
    const double w_depth = smoothstep((p.depth - 0.2) / 0.5) / (1.0 + depth_ratio * depth_ratio);
    const double u = p.pixel.x(), v = p.pixel.y();
    const double w_image = smoothstep((u + margin_u) / margin_u) *
                           smoothstep((model.width + margin_u - u) / margin_u) *
                           smoothstep((v + margin_v) / margin_v) *
                           smoothstep((model.height + margin_v - v) / margin_v);
    const double w = w_depth * w_image;
    if (w <= 0) continue;
    for (int r = 0; r < model.feature_rows; ++r) {
      for (int c = 0; c < model.feature_cols; ++c) {
        const double du = u - (c + 0.5) * cell_w, dv = v - (r + 0.5) * cell_h;
        const double k = w * std::exp(-0.5 * (du * du + dv * dv) / (kernel_sigma * kernel_sigma));
        const int cell = r * model.feature_cols + c;
        for (int ch = 0; ch < channels; ++ch) {
          const double code =
              0.5 + 0.5 * std::cos(kTwoPi * (l.appearance * (ch + 1) * 1.618 + 0.37 * ch));
          pooled[cell * channels + ch] += k * code;
        }
      }
    }
  }

  std::mt19937_64 rng(model.embedding_seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(pooled.size())));
  MatrixXd projection(model.embedding_dim, pooled.size());
  for (Eigen::Index i = 0; i < projection.rows(); ++i) {
    for (Eigen::Index j = 0; j < projection.cols(); ++j) projection(i, j) = normal(rng);
  }
  // scale-free pooled feature: only the spatial layout of appearance remains
  const double total = pooled.sum();
  if (total > 0) pooled /= total;
  return (projection * pooled).cwiseMax(0.0);
}

std::vector<bool> visible_landmarks(const Scene& scene, std::span<const Posed> poses,
                                    const Intrinsics& intr) {
  std::vector<bool> out(scene.landmarks.size(), false);
  for (const auto& pose : poses) {
    for (std::size_t i = 0; i < scene.landmarks.size(); ++i) {
      if (out[i]) continue;
      const Projection p = project(pose, intr, scene.landmarks[i].position);
      if (!p.behind && intr.contains(p.pixel)) out[i] = true;
    }
  }
  return out;
}

CorrespondenceSet make_correspondences(const Scene& scene, const Posed& pose,
                                       const Intrinsics& intr,
                                       const CorrespondenceOptions& options) {
  if (!(options.outlier_fraction >= 0 && options.outlier_fraction <= 1)) {
    throw Error("make_correspondences: outlier fraction must be in [0, 1]");
  }
  if (!(options.pixel_noise_sigma >= 0)) {
    throw Error("make_correspondences: noise sigma must be nonnegative");
  }
  if (options.allowed_landmarks && options.allowed_landmarks->size() != scene.landmarks.size()) {
    throw Error("make_correspondences: landmark mask size mismatch");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  CorrespondenceSet out;
  std::vector<Vector2d> truth;
  for (std::size_t i = 0; i < scene.landmarks.size(); ++i) {
    if (options.allowed_landmarks && !(*options.allowed_landmarks)[i]) continue;
    const Projection p = project(pose, intr, scene.landmarks[i].position);
    if (p.behind || !intr.contains(p.pixel)) continue;
    Vector2d px = p.pixel;
    if (options.pixel_noise_sigma > 0) {
      px.x() += options.pixel_noise_sigma * noise(rng);
      px.y() += options.pixel_noise_sigma * noise(rng);
    }
    truth.push_back(p.pixel);
    out.matches.push_back({px, scene.landmarks[i].position});
  }
  out.outlier.assign(out.matches.size(), false);

  const auto n_out = static_cast<std::size_t>(
      std::llround(options.outlier_fraction * static_cast<double>(out.matches.size())));
  std::vector<std::size_t> order(out.matches.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> ux(0.0, intr.width()), uy(0.0, intr.height());
  for (std::size_t k = 0; k < n_out; ++k) {
    const std::size_t i = order[k];
    Vector2d px;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      px = Vector2d(ux(rng), uy(rng));
      if ((px - truth[i]).norm() >= options.min_outlier_offset) break;
    }
    out.matches[i].pixel = px;
    out.outlier[i] = true;
  }
  return out;
}

}  // namespace aprlab
