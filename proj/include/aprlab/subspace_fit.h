#pragma once

#include "aprlab/types.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <span>

namespace aprlab {

template <typename Scalar>
struct LineFit {
  Vector3<Scalar> anchor;
  Vector3<Scalar> direction;  // unit
  Scalar rms_residual = 0;
  Scalar inlier_fraction = 0;
};

template <typename Scalar>
struct PlaneFit {
  Vector3<Scalar> anchor;
  Vector3<Scalar> normal;  // unit
  Scalar rms_residual = 0;
  Scalar inlier_fraction = 0;
};

namespace detail {

template <typename Scalar>
struct PrincipalAxes {
  Vector3<Scalar> centroid;
  Vector3<Scalar> eigenvalues;                 // ascending
  Eigen::Matrix<Scalar, 3, 3> eigenvectors;    // columns match eigenvalues
};

template <typename Scalar>
PrincipalAxes<Scalar> principal_axes(std::span<const Vector3<Scalar>> points) {
  if (points.size() < 2) throw Error("need at least two points");
  Vector3<Scalar> centroid = Vector3<Scalar>::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<Scalar>(points.size());
  Eigen::Matrix<Scalar, 3, 3> scatter = Eigen::Matrix<Scalar, 3, 3>::Zero();
  Scalar scale = 0;
  for (const auto& p : points) {
    const Vector3<Scalar> d = p - centroid;
    scatter.noalias() += d * d.transpose();
    scale = std::max(scale, d.norm());
  }
  scatter /= static_cast<Scalar>(points.size());
  if (!(scale > Scalar(1e-12) * std::max(Scalar(1), centroid.norm()))) {
    throw Error("degenerate point set");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 3, 3>> solver(scatter);
  return {centroid, solver.eigenvalues(), solver.eigenvectors()};
}

// Flips v so that its first non-negligible component is positive.
template <typename Scalar>
Vector3<Scalar> canonical_sign(Vector3<Scalar> v) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(v[i]) > Scalar(1e-12)) {
      if (v[i] < 0) v = -v;
      break;
    }
  }
  return v;
}

// Picks a deterministic unit axis from the eigenspace of eigenvalue `which`.
// When the eigenvalue is repeated, the coordinate axes are projected onto the
// eigenspace and the projection with the lexicographically largest absolute
// component vector wins.
template <typename Scalar>
Vector3<Scalar> select_axis(const PrincipalAxes<Scalar>& axes, int which) {
  const Scalar target = axes.eigenvalues[which];
  const Scalar tol = Scalar(1e-9) * std::max(axes.eigenvalues.cwiseAbs().maxCoeff(),
                                             Scalar(1e-300));
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> space(3, 0);
  for (int i = 0; i < 3; ++i) {
    if (std::abs(axes.eigenvalues[i] - target) <= tol) {
      space.conservativeResize(3, space.cols() + 1);
      space.col(space.cols() - 1) = axes.eigenvectors.col(i);
    }
  }
  if (space.cols() == 1) return canonical_sign<Scalar>(space.col(0).normalized());

  const Eigen::Matrix<Scalar, 3, 3> projector = space * space.transpose();
  Vector3<Scalar> best = Vector3<Scalar>::Zero();
  Vector3<Scalar> best_key = -Vector3<Scalar>::Ones();
  for (int i = 0; i < 3; ++i) {
    Vector3<Scalar> candidate = projector.col(i);
    if (candidate.norm() < Scalar(1e-6)) continue;
    candidate = canonical_sign<Scalar>(candidate.normalized());
    // round away last-bit noise before the lexicographic comparison
    Vector3<Scalar> key = candidate.cwiseAbs();
    for (int k = 0; k < 3; ++k) key[k] = std::round(key[k] * Scalar(1e9)) / Scalar(1e9);
    if (std::lexicographical_compare(best_key.data(), best_key.data() + 3, key.data(),
                                     key.data() + 3)) {
      best_key = key;
      best = candidate;
    }
  }
  return best;
}

}  // namespace detail

/// Total least squares line through the points: centroid plus principal axis.
template <typename Scalar>
LineFit<Scalar> fit_line(std::span<const Vector3<Scalar>> points, Scalar inlier_tol) {
  const auto axes = detail::principal_axes(points);
  LineFit<Scalar> fit;
  fit.anchor = axes.centroid;
  fit.direction = detail::select_axis(axes, 2);
  Scalar sum_sq = 0;
  std::size_t inliers = 0;
  for (const auto& p : points) {
    const Vector3<Scalar> d = p - fit.anchor;
    const Scalar dist = (d - d.dot(fit.direction) * fit.direction).norm();
    sum_sq += dist * dist;
    if (dist <= inlier_tol) ++inliers;
  }
  fit.rms_residual = std::sqrt(sum_sq / static_cast<Scalar>(points.size()));
  fit.inlier_fraction = static_cast<Scalar>(inliers) / static_cast<Scalar>(points.size());
  return fit;
}

/// Total least squares plane: centroid plus the least principal axis as normal.
template <typename Scalar>
PlaneFit<Scalar> fit_plane(std::span<const Vector3<Scalar>> points, Scalar inlier_tol) {
  const auto axes = detail::principal_axes(points);
  PlaneFit<Scalar> fit;
  fit.anchor = axes.centroid;
  fit.normal = detail::select_axis(axes, 0);
  Scalar sum_sq = 0;
  std::size_t inliers = 0;
  for (const auto& p : points) {
    const Scalar dist = std::abs((p - fit.anchor).dot(fit.normal));
    sum_sq += dist * dist;
    if (dist <= inlier_tol) ++inliers;
  }
  fit.rms_residual = std::sqrt(sum_sq / static_cast<Scalar>(points.size()));
  fit.inlier_fraction = static_cast<Scalar>(inliers) / static_cast<Scalar>(points.size());
  return fit;
}

template <typename Scalar>
Scalar distance_to_line(const LineFit<Scalar>& line, const Vector3<Scalar>& p) {
  const Vector3<Scalar> d = p - line.anchor;
  return (d - d.dot(line.direction) * line.direction).norm();
}

}  // namespace aprlab
