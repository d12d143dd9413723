#include "aprlab/geo_solver.h"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace aprlab {

Posed apply_pose_update(const Posed& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  const Vector3d omega = delta.tail<3>();
  const double angle = omega.norm();
  Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
  if (angle > 0) dq = Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
  return Posed(pose.position() + delta.head<3>(), dq * pose.quaternion());
}

double reprojection_cost(const Posed& pose, std::span<const Correspondence> matches,
                         const Intrinsics& intr) {
  double cost = 0;
  for (const auto& m : matches) {
    const Projection p = project(pose, intr, m.point);
    if (p.behind) return std::numeric_limits<double>::infinity();
    cost += (p.pixel - m.pixel).squaredNorm();
  }
  return cost;
}

ReprojectionLinearization linearize_reprojection(const Posed& pose,
                                                 std::span<const Correspondence> matches,
                                                 const Intrinsics& intr) {
  const Eigen::Index m = static_cast<Eigen::Index>(matches.size());
  ReprojectionLinearization lin;
  lin.residuals.resize(2 * m);
  lin.jacobian.resize(2 * m, 6);
  const Matrix3d R = pose.rotation();
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& match = matches[static_cast<std::size_t>(i)];
    const Vector3d Y = R * (match.point - pose.position());
    if (Y.z() <= 1e-9) throw Error("linearize_reprojection: point behind camera");
    const double iz = 1.0 / Y.z();
    lin.residuals[2 * i] = intr.fx * Y.x() * iz + intr.cx - match.pixel.x();
    lin.residuals[2 * i + 1] = intr.fy * Y.y() * iz + intr.cy - match.pixel.y();

    Eigen::Matrix<double, 2, 3> dpi;
    dpi << intr.fx * iz, 0, -intr.fx * Y.x() * iz * iz, 0, intr.fy * iz,
        -intr.fy * Y.y() * iz * iz;
    Matrix3d skew;
    skew << 0, -Y.z(), Y.y(), Y.z(), 0, -Y.x(), -Y.y(), Y.x(), 0;
    // dY/dc = -R, dY/domega = -[Y]_x
    lin.jacobian.block<2, 3>(2 * i, 0) = -dpi * R;
    lin.jacobian.block<2, 3>(2 * i, 3) = -dpi * skew;
  }
  return lin;
}

RefineResult refine_pose(const Posed& init, std::span<const Correspondence> matches,
                         const Intrinsics& intr, const RefineOptions& options) {
  if (matches.size() < 4) throw Error("refine_pose: need at least four correspondences");
  RefineResult result;
  result.pose = init;
  result.initial_cost = reprojection_cost(init, matches, intr);
  if (!std::isfinite(result.initial_cost)) throw Error("refine_pose: non-finite cost");
  double cost = result.initial_cost;
  double lambda = 1e-3;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const auto lin = linearize_reprojection(result.pose, matches, intr);
    const Eigen::Matrix<double, 6, 1> g = lin.jacobian.transpose() * lin.residuals;
    if (g.norm() < options.gradient_tolerance || cost == 0) break;
    const Eigen::Matrix<double, 6, 6> H = lin.jacobian.transpose() * lin.jacobian;
    result.iterations = iter + 1;

    bool accepted = false;
    bool stalled = false;
    while (lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> damped = H;
      damped.diagonal() += lambda * H.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 6, 1> delta = -damped.ldlt().solve(g);
      if (!delta.allFinite()) {
        lambda *= 10;
        continue;
      }
      const Posed candidate = apply_pose_update(result.pose, delta);
      const double new_cost = reprojection_cost(candidate, matches, intr);
      if (new_cost < cost) {
        result.pose = candidate;
        const double old_cost = cost;
        cost = new_cost;
        lambda = std::max(lambda / 10, 1e-12);
        accepted = true;
        stalled = old_cost - new_cost <= 1e-16 * old_cost;
        break;
      }
      lambda *= 10;
    }
    if (!accepted || stalled) break;
  }
  result.final_cost = cost;
  return result;
}

}  // namespace aprlab
