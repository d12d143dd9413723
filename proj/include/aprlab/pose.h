#pragma once

#include "aprlab/types.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>

namespace aprlab {

/// Quaternion stored as (w, x, y, z). Canonical form has unit norm and lies in
/// the hemisphere w > 0, or w == 0 with the first nonzero imaginary entry > 0.
template <typename Scalar>
Vector4<Scalar> canonical_quaternion(const Vector4<Scalar>& q) {
  const Scalar n2 = q.squaredNorm();
  if (!(n2 > Scalar(0)) || !std::isfinite(n2)) {
    throw Error("quaternion must be finite and nonzero");
  }
  Vector4<Scalar> out = q;
  // Normalizing an already-unit quaternion is skipped so that canonicalization
  // is idempotent bit for bit.
  if (std::abs(n2 - Scalar(1)) > Scalar(8) * std::numeric_limits<Scalar>::epsilon()) {
    out /= std::sqrt(n2);
  }
  bool flip = out[0] < Scalar(0);
  if (out[0] == Scalar(0)) {
    for (int i = 1; i < 4; ++i) {
      if (out[i] != Scalar(0)) {
        flip = out[i] < Scalar(0);
        break;
      }
    }
  }
  if (flip) out = -out;
  // -0.0 and 0.0 compare equal but print differently
  for (int i = 0; i < 4; ++i) {
    if (out[i] == Scalar(0)) out[i] = Scalar(0);
  }
  return out;
}

template <typename Scalar>
class Pose {
public:
  Pose() : position_(Vector3<Scalar>::Zero()), orientation_(Scalar(1), 0, 0, 0) {}

  /// orientation is (w, x, y, z); it is normalized and canonicalized.
  Pose(const Vector3<Scalar>& position, const Vector4<Scalar>& orientation)
      : position_(position), orientation_(canonical_quaternion(orientation)) {
    if (!position_.allFinite()) throw Error("pose position must be finite");
  }

  Pose(const Vector3<Scalar>& position, const Eigen::Quaternion<Scalar>& q)
      : Pose(position, Vector4<Scalar>(q.w(), q.x(), q.y(), q.z())) {}

  static Pose identity() { return Pose(); }

  const Vector3<Scalar>& position() const { return position_; }
  const Vector4<Scalar>& orientation() const { return orientation_; }

  Eigen::Quaternion<Scalar> quaternion() const {
    return Eigen::Quaternion<Scalar>(orientation_[0], orientation_[1], orientation_[2],
                                     orientation_[3]);
  }

  /// Camera-from-world rotation; a world point X maps to R * (X - c).
  Eigen::Matrix<Scalar, 3, 3> rotation() const { return quaternion().toRotationMatrix(); }

  Vector7<Scalar> stacked() const {
    Vector7<Scalar> v;
    v << position_, orientation_;
    return v;
  }

  bool operator==(const Pose& other) const {
    return position_ == other.position_ && orientation_ == other.orientation_;
  }

private:
  Vector3<Scalar> position_;
  Vector4<Scalar> orientation_;
};

using Posed = Pose<double>;

struct PoseError {
  double position_err = 0.0;     // meters
  double orientation_err = 0.0;  // degrees
};

template <typename Scalar>
Scalar position_error(const Pose<Scalar>& estimate, const Pose<Scalar>& truth) {
  return (estimate.position() - truth.position()).norm();
}

/// Angle of the relative rotation in degrees. Equal to 2 acos(|<q1, q2>|) but
/// evaluated through atan2, which keeps full precision near zero.
template <typename Scalar>
Scalar orientation_error(const Pose<Scalar>& estimate, const Pose<Scalar>& truth) {
  const Vector4<Scalar>& a = estimate.orientation();
  const Vector4<Scalar>& b = truth.orientation();
  // relative rotation conj(a) * b; its vector part has norm sin(theta / 2)
  const Scalar w = a.dot(b);
  const Vector3<Scalar> va = a.template tail<3>();
  const Vector3<Scalar> vb = b.template tail<3>();
  const Vector3<Scalar> v = a[0] * vb - b[0] * va - va.cross(vb);
  const Scalar half = std::atan2(v.norm(), std::abs(w));
  return Scalar(2) * half * Scalar(kRadToDeg);
}

template <typename Scalar>
PoseError pose_error(const Pose<Scalar>& estimate, const Pose<Scalar>& truth) {
  return {static_cast<double>(position_error(estimate, truth)),
          static_cast<double>(orientation_error(estimate, truth))};
}

namespace detail {
inline double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return (lower + upper) / 2.0;
}
}  // namespace detail

/// Position and orientation medians, computed independently. Even counts use
/// the mean of the two middle values.
inline std::pair<double, double> median_errors(std::span<const PoseError> errors) {
  if (errors.empty()) throw Error("no samples");
  std::vector<double> pos, rot;
  pos.reserve(errors.size());
  rot.reserve(errors.size());
  for (const PoseError& e : errors) {
    pos.push_back(e.position_err);
    rot.push_back(e.orientation_err);
  }
  return {detail::median_of(std::move(pos)), detail::median_of(std::move(rot))};
}

/// Affine blend of poses. Positions combine linearly; quaternions are
/// sign-aligned to the first one, combined with the same weights, and
/// renormalized. Weights must sum to one.
template <typename Scalar, typename Weights>
Pose<Scalar> interpolate_poses(const Eigen::MatrixBase<Weights>& weights,
                               std::span<const Pose<Scalar>> poses) {
  if (poses.empty() || static_cast<std::size_t>(weights.size()) != poses.size()) {
    throw Error("interpolate_poses: need one weight per pose and at least one pose");
  }
  const Scalar total = weights.sum();
  if (!(std::abs(total - Scalar(1)) <= Scalar(1e-9))) {
    throw Error("interpolate_poses: weights must sum to 1");
  }
  Vector3<Scalar> position = Vector3<Scalar>::Zero();
  Vector4<Scalar> q = Vector4<Scalar>::Zero();
  const Vector4<Scalar>& reference = poses[0].orientation();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Scalar a = weights[static_cast<Eigen::Index>(i)];
    position += a * poses[i].position();
    const Vector4<Scalar>& qi = poses[i].orientation();
    q += (qi.dot(reference) < Scalar(0) ? -a : a) * qi;
  }
  if (q.norm() < Scalar(1e-6)) throw Error("degenerate orientation blend");
  return Pose<Scalar>(position, q);
}

}  // namespace aprlab
