#pragma once

#include "aprlab/pose.h"
#include "aprlab/types.h"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace aprlab {

/// Activation vector feeding the final linear layer.
using Embedding = VectorXd;

template <typename Scalar>
using ProjectionMatrix = Eigen::Matrix<Scalar, 7, Eigen::Dynamic>;

/// Translational and rotational part of one column of the projection matrix.
template <typename Scalar>
struct BasePose {
  Vector3<Scalar> translation;
  Vector4<Scalar> orientation;
};

/// Linear pose head: raw output b + P * alpha, rows 0-2 position, rows 3-6
/// quaternion (w, x, y, z).
///
/// A split head has orientation rows zero in the first split_k columns and
/// position rows zero in the remaining ones. A conical head only accepts
/// nonnegative embeddings.
template <typename Scalar>
class PoseHead {
public:
  PoseHead(ProjectionMatrix<Scalar> projection, Vector7<Scalar> bias, bool conical = false,
           std::optional<Eigen::Index> split_k = std::nullopt)
      : projection_(std::move(projection)),
        bias_(std::move(bias)),
        conical_(conical),
        split_k_(split_k) {
    if (!projection_.allFinite() || !bias_.allFinite()) {
      throw Error("pose head entries must be finite");
    }
    if (split_k_) {
      const Eigen::Index k = *split_k_;
      const Eigen::Index n = projection_.cols();
      if (k < 0 || k > n) throw Error("split_k out of range");
      if (!projection_.bottomLeftCorner(4, k).isZero(0) ||
          !projection_.topRightCorner(3, n - k).isZero(0)) {
        throw Error("projection matrix does not have the split block structure");
      }
    }
  }

  Eigen::Index dim() const { return projection_.cols(); }
  const ProjectionMatrix<Scalar>& projection() const { return projection_; }
  const Vector7<Scalar>& bias() const { return bias_; }
  bool conical() const { return conical_; }
  std::optional<Eigen::Index> split_k() const { return split_k_; }

  template <typename Derived>
  void check_embedding(const Eigen::MatrixBase<Derived>& alpha) const {
    if (alpha.size() != dim()) throw Error("embedding dimension does not match head");
    if (!alpha.allFinite()) throw Error("embedding entries must be finite");
    if (conical_ && (alpha.array() < Scalar(0)).any()) {
      throw Error("conical head requires nonnegative embeddings");
    }
  }

  /// Un-normalized output b + P * alpha.
  template <typename Derived>
  Vector7<Scalar> raw_predict(const Eigen::MatrixBase<Derived>& alpha) const {
    check_embedding(alpha);
    return bias_ + projection_ * alpha;
  }

  template <typename Derived>
  Pose<Scalar> predict(const Eigen::MatrixBase<Derived>& alpha) const {
    const Vector7<Scalar> raw = raw_predict(alpha);
    const Vector4<Scalar> q = raw.template tail<4>();
    if (q.norm() < Scalar(1e-9)) throw Error("degenerate orientation output");
    return Pose<Scalar>(raw.template head<3>(), q);
  }

  bool operator==(const PoseHead& other) const {
    return projection_ == other.projection_ && bias_ == other.bias_ &&
           conical_ == other.conical_ && split_k_ == other.split_k_;
  }

private:
  ProjectionMatrix<Scalar> projection_;
  Vector7<Scalar> bias_;
  bool conical_;
  std::optional<Eigen::Index> split_k_;
};

using PoseHeadd = PoseHead<double>;

template <typename Scalar>
std::vector<BasePose<Scalar>> base_poses(const PoseHead<Scalar>& head) {
  std::vector<BasePose<Scalar>> out;
  out.reserve(static_cast<std::size_t>(head.dim()));
  for (Eigen::Index j = 0; j < head.dim(); ++j) {
    const auto col = head.projection().col(j);
    out.push_back({col.template head<3>(), col.template tail<4>()});
  }
  return out;
}

template <typename Scalar>
ProjectionMatrix<Scalar> projection_from_bases(std::span<const BasePose<Scalar>> bases) {
  ProjectionMatrix<Scalar> P(7, static_cast<Eigen::Index>(bases.size()));
  for (std::size_t j = 0; j < bases.size(); ++j) {
    P.col(static_cast<Eigen::Index>(j)) << bases[j].translation, bases[j].orientation;
  }
  return P;
}

/// Indices j whose activation magnitude over the set exceeds tau times the
/// largest magnitude in the set. tau = 0 keeps every index with a nonzero
/// activation somewhere.
template <typename Scalar>
std::vector<Eigen::Index> relevant_bases(const PoseHead<Scalar>& head,
                                         std::span<const VectorX<Scalar>> embeddings,
                                         Scalar tau) {
  if (embeddings.empty()) throw Error("relevant_bases: no embeddings");
  if (tau < Scalar(0)) throw Error("relevant_bases: tau must be nonnegative");
  VectorX<Scalar> peak = VectorX<Scalar>::Zero(head.dim());
  for (const auto& alpha : embeddings) {
    if (alpha.size() != head.dim()) throw Error("embedding dimension does not match head");
    peak = peak.cwiseMax(alpha.cwiseAbs());
  }
  const Scalar threshold = tau * peak.maxCoeff();
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < head.dim(); ++j) {
    if (peak[j] > threshold) out.push_back(j);
  }
  return out;
}

template <typename Scalar>
struct SpanTest {
  VectorX<Scalar> residuals;  // one per test position, meters
  bool contained = false;
};

/// Distance of each test position, taken relative to the bias position, from
/// the linear span of the selected base translations.
template <typename Scalar>
SpanTest<Scalar> span_contains(const PoseHead<Scalar>& head,
                               std::span<const Eigen::Index> base_idx,
                               std::span<const Vector3<Scalar>> test_positions, Scalar tol) {
  if (base_idx.empty()) throw Error("span_contains: empty base index set");
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> C(3, static_cast<Eigen::Index>(base_idx.size()));
  for (std::size_t i = 0; i < base_idx.size(); ++i) {
    const Eigen::Index j = base_idx[i];
    if (j < 0 || j >= head.dim()) throw Error("span_contains: base index out of range");
    C.col(static_cast<Eigen::Index>(i)) = head.projection().col(j).template head<3>();
  }
  const Vector3<Scalar> c_b = head.bias().template head<3>();
  const Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix<Scalar, 3, Eigen::Dynamic>> cod(C);
  SpanTest<Scalar> out;
  out.residuals.resize(static_cast<Eigen::Index>(test_positions.size()));
  out.contained = true;
  for (std::size_t i = 0; i < test_positions.size(); ++i) {
    const Vector3<Scalar> target = test_positions[i] - c_b;
    const VectorX<Scalar> x = cod.solve(target);
    const Scalar r = (target - C * x).norm();
    out.residuals[static_cast<Eigen::Index>(i)] = r;
    if (!(r <= tol)) out.contained = false;
  }
  return out;
}

/// Raw pose offset P * (alpha_i - alpha_j).
template <typename Scalar, typename DerivedI, typename DerivedJ>
Vector7<Scalar> pose_offset(const PoseHead<Scalar>& head, const Eigen::MatrixBase<DerivedI>& alpha_i,
                            const Eigen::MatrixBase<DerivedJ>& alpha_j) {
  if (alpha_i.size() != head.dim() || alpha_j.size() != head.dim()) {
    throw Error("pose_offset: embedding dimension does not match head");
  }
  return head.projection() * (alpha_i - alpha_j);
}

struct HeadFitOptions {
  double ridge_lambda = 0.0;
  bool conical = false;
};

template <typename Scalar>
struct HeadFit {
  PoseHead<Scalar> head;
  VectorX<Scalar> residuals;  // per-sample norm of the raw 7-vector residual
};

/// Ridge-regularized least squares fit of (P, b) to stacked pose targets.
/// The bias is unregularized and absorbs the means; P is the minimum-norm
/// solution of the centered problem. Target quaternions are sign-aligned to
/// the first target before fitting.
template <typename Scalar>
HeadFit<Scalar> fit_head(std::span<const VectorX<Scalar>> embeddings,
                         std::span<const Pose<Scalar>> targets, HeadFitOptions options = {}) {
  if (embeddings.empty()) throw Error("fit_head: zero samples");
  if (embeddings.size() != targets.size()) throw Error("fit_head: sample count mismatch");
  if (options.ridge_lambda < 0) throw Error("fit_head: ridge_lambda must be nonnegative");
  const Eigen::Index m = static_cast<Eigen::Index>(embeddings.size());
  const Eigen::Index n = embeddings.front().size();

  MatrixX<Scalar> A(m, n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 7> Y(m, 7);
  const Vector4<Scalar> reference = targets.front().orientation();
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& alpha = embeddings[static_cast<std::size_t>(i)];
    if (alpha.size() != n) throw Error("fit_head: inconsistent embedding dimensions");
    if (!alpha.allFinite()) throw Error("fit_head: non-finite embedding");
    if (options.conical && (alpha.array() < Scalar(0)).any()) {
      throw Error("fit_head: conical head requires nonnegative embeddings");
    }
    const Pose<Scalar>& t = targets[static_cast<std::size_t>(i)];
    Vector4<Scalar> q = t.orientation();
    if (q.dot(reference) < Scalar(0)) q = -q;
    A.row(i) = alpha.transpose();
    Y.row(i) << t.position().transpose(), q.transpose();
  }
  if (!Y.allFinite()) throw Error("fit_head: non-finite targets");

  const VectorX<Scalar> mean_a = A.colwise().mean().transpose();
  const Vector7<Scalar> mean_y = Y.colwise().mean().transpose();
  A.rowwise() -= mean_a.transpose();
  Y.rowwise() -= mean_y.transpose();

  MatrixX<Scalar> X;  // n x 7, the transpose of P
  if (options.ridge_lambda > 0) {
    MatrixX<Scalar> A_aug(m + n, n);
    A_aug << A, std::sqrt(Scalar(options.ridge_lambda)) * MatrixX<Scalar>::Identity(n, n);
    MatrixX<Scalar> Y_aug = MatrixX<Scalar>::Zero(m + n, 7);
    Y_aug.topRows(m) = Y;
    X = A_aug.completeOrthogonalDecomposition().solve(Y_aug);
  } else {
    X = A.completeOrthogonalDecomposition().solve(MatrixX<Scalar>(Y));
  }
  ProjectionMatrix<Scalar> P = X.transpose();
  Vector7<Scalar> b = mean_y - P * mean_a;

  HeadFit<Scalar> fit{PoseHead<Scalar>(P, b, options.conical), VectorX<Scalar>(m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vector7<Scalar> y = Y.row(i).transpose() + mean_y;
    fit.residuals[i] = (b + P * embeddings[static_cast<std::size_t>(i)] - y).norm();
  }
  return fit;
}

}  // namespace aprlab
