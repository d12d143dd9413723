#include "aprlab/retrieval.h"

#include "aprlab/io.h"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace aprlab {

LocalDescriptor rootsift_normalize(const VectorXd& hist) {
  if ((hist.array() < 0).any()) throw Error("rootsift_normalize: negative histogram entry");
  const double l1 = hist.sum();
  if (!(l1 > 0)) return {VectorXd::Zero(hist.size()), true};
  return {(hist / l1).cwiseSqrt(), false};
}

std::vector<LocalDescriptor> dense_local_descriptors(const MatrixXd& image, int patch,
                                                     int stride) {
  const Eigen::Index H = image.rows();
  const Eigen::Index W = image.cols();
  if (patch < kDescriptorCells || patch % kDescriptorCells != 0) {
    throw Error("dense_local_descriptors: patch must be a positive multiple of 4");
  }
  if (stride < 1) throw Error("dense_local_descriptors: stride must be positive");
  if (H < patch || W < patch) throw Error("dense_local_descriptors: image smaller than patch");

  // Central differences with replicated borders.
  MatrixXd h_energy(H, W), v_energy(H, W);
  for (Eigen::Index r = 0; r < H; ++r) {
    for (Eigen::Index c = 0; c < W; ++c) {
      const double gx =
          0.5 * (image(r, std::min(c + 1, W - 1)) - image(r, std::max<Eigen::Index>(c - 1, 0)));
      const double gy =
          0.5 * (image(std::min(r + 1, H - 1), c) - image(std::max<Eigen::Index>(r - 1, 0), c));
      const double mag = std::hypot(gx, gy);
      // magnitude split as m cos^2 and m sin^2 of the gradient angle
      h_energy(r, c) = mag > 0 ? gx * gx / mag : 0.0;
      v_energy(r, c) = mag > 0 ? gy * gy / mag : 0.0;
    }
  }

  const int cell = patch / kDescriptorCells;
  std::vector<LocalDescriptor> out;
  for (Eigen::Index r0 = 0; r0 + patch <= H; r0 += stride) {
    for (Eigen::Index c0 = 0; c0 + patch <= W; c0 += stride) {
      VectorXd hist(kLocalDescriptorSize);
      int k = 0;
      for (int cr = 0; cr < kDescriptorCells; ++cr) {
        for (int cc = 0; cc < kDescriptorCells; ++cc) {
          hist[k++] = h_energy.block(r0 + cr * cell, c0 + cc * cell, cell, cell).sum();
          hist[k++] = v_energy.block(r0 + cr * cell, c0 + cc * cell, cell, cell).sum();
        }
      }
      out.push_back(rootsift_normalize(hist));
    }
  }
  return out;
}

Eigen::Index Vocabulary::nearest(const VectorXd& v) const {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < centroids.rows(); ++i) {
    const double d = (centroids.row(i).transpose() - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

namespace {

std::size_t count_distinct_rows(const MatrixXd& points) {
  std::set<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index j = 0; j < points.cols(); ++j) row[static_cast<std::size_t>(j)] = points(i, j);
    rows.insert(std::move(row));
  }
  return rows.size();
}

}  // namespace

Vocabulary kmeans(const MatrixXd& points, int k, std::uint64_t seed, int max_iter) {
  if (k < 1) throw Error("kmeans: K must be at least 1");
  const Eigen::Index n = points.rows();
  if (count_distinct_rows(points) < static_cast<std::size_t>(k)) {
    throw Error("kmeans: fewer distinct points than clusters");
  }
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  MatrixXd centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  VectorXd dist2(n);
  for (Eigen::Index i = 0; i < n; ++i) dist2[i] = (points.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (dist2[i] <= 0) continue;
      pick = i;
      target -= dist2[i];
      if (target < 0) break;
    }
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }

  // Lloyd iterations
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  Vocabulary vocab{centroids};
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    VectorXd own_dist(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = static_cast<int>(vocab.nearest(points.row(i).transpose()));
      own_dist[i] = (points.row(i) - vocab.centroids.row(a)).squaredNorm();
      if (a != assign[static_cast<std::size_t>(i)]) {
        assign[static_cast<std::size_t>(i)] = a;
        changed = true;
      }
    }
    if (!changed) break;
    MatrixXd sums = MatrixXd::Zero(k, points.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        vocab.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // empty cluster: reseed to the point farthest from its centroid
      Eigen::Index far = 0;
      own_dist.maxCoeff(&far);
      vocab.centroids.row(c) = points.row(far);
      own_dist[far] = 0;
      assign[static_cast<std::size_t>(far)] = c;
    }
  }
  return vocab;
}

Vocabulary kmeans_vocabulary(std::span<const LocalDescriptor> descs, int k, std::uint64_t seed,
                             int max_iter) {
  std::vector<const LocalDescriptor*> live;
  for (const auto& d : descs) {
    if (!d.zero) live.push_back(&d);
  }
  if (live.empty()) throw Error("kmeans_vocabulary: no non-zero descriptors");
  MatrixXd points(static_cast<Eigen::Index>(live.size()), live.front()->v.size());
  for (std::size_t i = 0; i < live.size(); ++i) {
    points.row(static_cast<Eigen::Index>(i)) = live[i]->v.transpose();
  }
  return kmeans(points, k, seed, max_iter);
}

VectorXd vlad_aggregate(std::span<const LocalDescriptor> descs, const Vocabulary& vocab) {
  const Eigen::Index K = vocab.size();
  const Eigen::Index dim = vocab.dim();
  MatrixXd residuals = MatrixXd::Zero(K, dim);
  for (const auto& d : descs) {
    if (d.zero) continue;
    if (d.v.size() != dim) throw Error("vlad_aggregate: descriptor dimension mismatch");
    const Eigen::Index c = vocab.nearest(d.v);
    residuals.row(c) += (d.v - vocab.centroids.row(c).transpose()).transpose();
  }
  for (Eigen::Index c = 0; c < K; ++c) {
    const double norm = residuals.row(c).norm();
    if (norm >= 1e-12) residuals.row(c) /= norm;
  }
  VectorXd out(K * dim);
  for (Eigen::Index c = 0; c < K; ++c) out.segment(c * dim, dim) = residuals.row(c).transpose();
  const double norm = out.norm();
  if (norm < 1e-12) return VectorXd::Zero(K * dim);
  return out / norm;
}

PcaProjection pca_fit(const MatrixXd& descriptors, int target_dim) {
  const Eigen::Index N = descriptors.rows();
  const Eigen::Index D = descriptors.cols();
  if (target_dim < 1 || target_dim > std::min(D, N)) {
    throw Error("pca_fit: target_dim must be in [1, min(D, sample count)]");
  }
  PcaProjection pca;
  pca.mean = descriptors.colwise().mean().transpose();
  const MatrixXd centered = descriptors.rowwise() - pca.mean.transpose();
  Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinV);
  pca.basis = svd.matrixV().leftCols(target_dim);
  // fix the sign of each direction: largest-magnitude entry positive
  for (Eigen::Index j = 0; j < pca.basis.cols(); ++j) {
    Eigen::Index arg = 0;
    pca.basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (pca.basis(arg, j) < 0) pca.basis.col(j) *= -1.0;
  }
  return pca;
}

VectorXd pca_apply(const PcaProjection& pca, const VectorXd& descriptor) {
  if (descriptor.size() != pca.input_dim()) throw Error("pca_apply: dimension mismatch");
  VectorXd out = pca.basis.transpose() * (descriptor - pca.mean);
  const double norm = out.norm();
  if (norm < 1e-12) return VectorXd::Zero(out.size());
  return out / norm;
}

DescriptorDatabase::DescriptorDatabase(std::vector<DatabaseEntry> entries,
                                       std::optional<PcaProjection> pca)
    : pca_(std::move(pca)) {
  for (auto& e : entries) add(std::move(e));
}

void DescriptorDatabase::add(DatabaseEntry entry) {
  if (!entries_.empty() && entry.descriptor.size() != dim()) {
    throw Error("descriptor database: dimension mismatch");
  }
  for (const auto& e : entries_) {
    if (e.image_id == entry.image_id) throw Error("descriptor database: duplicate id " + e.image_id);
  }
  entries_.push_back(std::move(entry));
}

std::vector<Neighbor> knn(const DescriptorDatabase& db, const VectorXd& query, int k) {
  if (db.empty()) throw Error("knn: empty database");
  if (k < 1) throw Error("knn: k must be at least 1");
  if (query.size() != db.dim()) throw Error("knn: dimension mismatch");
  std::vector<Neighbor> all;
  all.reserve(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    all.push_back({i, db[i].image_id, (db[i].descriptor - query).norm()});
  }
  const std::size_t take = std::min(static_cast<std::size_t>(k), all.size());
  const auto before = [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.image_id < b.image_id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    before);
  all.resize(take);
  return all;
}

Posed top1_pose(const DescriptorDatabase& db, const VectorXd& query) {
  return db[knn(db, query, 1).front().index].pose;
}

namespace {

// Returns nullopt if the system is numerically singular.
std::optional<VectorXd> solve_kkt(const MatrixXd& gram, const VectorXd& rhs) {
  const Eigen::Index k = gram.rows();
  MatrixXd K(k + 1, k + 1);
  K.topLeftCorner(k, k) = gram;
  K.topRightCorner(k, 1).setOnes();
  K.bottomLeftCorner(1, k).setOnes();
  K(k, k) = 0;
  VectorXd b(k + 1);
  b << rhs, 1.0;
  Eigen::FullPivLU<MatrixXd> lu(K);
  lu.setThreshold(1e-11);
  if (!lu.isInvertible()) return std::nullopt;
  const VectorXd x = lu.solve(b);
  if (!x.allFinite()) return std::nullopt;
  return VectorXd(x.head(k));
}

}  // namespace

AffineWeights affine_weights(const VectorXd& query, const MatrixXd& neighbors, double ridge) {
  const Eigen::Index k = neighbors.cols();
  if (k < 1) throw Error("affine_weights: need at least one neighbor");
  if (neighbors.rows() != query.size()) throw Error("affine_weights: dimension mismatch");
  if (ridge < 0) throw Error("affine_weights: ridge must be nonnegative");

  AffineWeights out;
  if (k == 1) {
    out.weights = VectorXd::Ones(1);
  } else {
    MatrixXd gram = neighbors.transpose() * neighbors;
    VectorXd h = neighbors.transpose() * query;
    auto solved = solve_kkt(gram, h);
    if (!solved && ridge > 0) {
      gram.diagonal().array() += ridge;
      h.array() += ridge / static_cast<double>(k);
      solved = solve_kkt(gram, h);
      out.damped = true;
    }
    if (!solved) throw Error("degenerate neighborhood");
    out.weights = *solved;
  }
  out.residual = (query - neighbors * out.weights).norm();
  return out;
}

Posed interpolated_pose(const DescriptorDatabase& db, const VectorXd& query, int k,
                        double ridge) {
  const auto nn = knn(db, query, k);
  MatrixXd neighbors(db.dim(), static_cast<Eigen::Index>(nn.size()));
  std::vector<Posed> poses;
  poses.reserve(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) {
    neighbors.col(static_cast<Eigen::Index>(i)) = db[nn[i].index].descriptor;
    poses.push_back(db[nn[i].index].pose);
  }
  const AffineWeights w = affine_weights(query, neighbors, ridge);
  return interpolate_poses(w.weights, std::span<const Posed>(poses));
}

DenseVlad::DenseVlad(DenseVladOptions options, Vocabulary vocab,
                     std::optional<PcaProjection> pca)
    : options_(options), vocab_(std::move(vocab)), pca_(std::move(pca)) {}

DenseVlad DenseVlad::train(std::span<const MatrixXd> images, const DenseVladOptions& options) {
  if (images.empty()) throw Error("DenseVlad::train: no images");
  std::vector<LocalDescriptor> pool;
  std::vector<std::vector<LocalDescriptor>> per_image;
  per_image.reserve(images.size());
  for (const auto& img : images) {
    per_image.push_back(dense_local_descriptors(img, options.patch, options.stride));
    pool.insert(pool.end(), per_image.back().begin(), per_image.back().end());
  }
  Vocabulary vocab =
      kmeans_vocabulary(pool, options.vocabulary_size, options.seed, options.kmeans_iterations);
  std::optional<PcaProjection> pca;
  if (options.pca_dim > 0) {
    MatrixXd raw(static_cast<Eigen::Index>(images.size()), vocab.size() * vocab.dim());
    for (std::size_t i = 0; i < per_image.size(); ++i) {
      raw.row(static_cast<Eigen::Index>(i)) = vlad_aggregate(per_image[i], vocab).transpose();
    }
    const int dim = static_cast<int>(std::min<Eigen::Index>(
        options.pca_dim, std::min(raw.cols(), raw.rows())));
    pca = pca_fit(raw, dim);
  }
  return DenseVlad(options, std::move(vocab), std::move(pca));
}

VectorXd DenseVlad::describe(const MatrixXd& image) const {
  const VectorXd vlad =
      vlad_aggregate(dense_local_descriptors(image, options_.patch, options_.stride), vocab_);
  return pca_ ? pca_apply(*pca_, vlad) : vlad;
}

void write_descriptor_database(std::ostream& out, const DescriptorDatabase& db) {
  out << db.dim() << ' ' << db.size() << '\n';
  for (const auto& e : db.entries()) {
    out << e.image_id;
    for (Eigen::Index i = 0; i < e.descriptor.size(); ++i) out << ' ' << format_number(e.descriptor[i]);
    const Vector7d p = e.pose.stacked();
    for (int i = 0; i < 7; ++i) out << ' ' << format_number(p[i]);
    out << '\n';
  }
}

DescriptorDatabase read_descriptor_database(std::istream& in) {
  std::string line;
  if (!detail::next_data_line(in, line)) throw Error("descriptor database: missing header");
  std::istringstream header(line);
  long dim = 0, count = 0;
  if (!(header >> dim >> count) || dim < 0 || count < 0) {
    throw Error("descriptor database: header must be `D count`");
  }
  DescriptorDatabase db;
  for (long e = 0; e < count; ++e) {
    if (!detail::next_data_line(in, line)) throw Error("descriptor database: truncated");
    std::istringstream ss(line);
    DatabaseEntry entry;
    ss >> entry.image_id;
    entry.descriptor.resize(dim);
    std::string tok;
    for (long i = 0; i < dim; ++i) {
      if (!(ss >> tok)) throw Error("descriptor database: short row");
      entry.descriptor[i] = detail::parse_number(tok);
    }
    Vector7d p;
    for (int i = 0; i < 7; ++i) {
      if (!(ss >> tok)) throw Error("descriptor database: short row");
      p[i] = detail::parse_number(tok);
    }
    if (ss >> tok) throw Error("descriptor database: trailing values");
    entry.pose = Posed(p.head<3>(), Vector4d(p.tail<4>()));
    db.add(std::move(entry));
  }
  return db;
}

void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  out << vocab.size() << ' ' << vocab.dim() << '\n';
  for (Eigen::Index i = 0; i < vocab.size(); ++i) {
    for (Eigen::Index j = 0; j < vocab.dim(); ++j) {
      out << (j ? " " : "") << format_number(vocab.centroids(i, j));
    }
    out << '\n';
  }
}

Vocabulary read_vocabulary(std::istream& in) {
  std::string line;
  if (!detail::next_data_line(in, line)) throw Error("vocabulary: missing header");
  std::istringstream header(line);
  long k = 0, dim = 0;
  if (!(header >> k >> dim) || k < 1 || dim < 1) throw Error("vocabulary: header must be `K dim`");
  Vocabulary vocab{MatrixXd(k, dim)};
  for (long i = 0; i < k; ++i) {
    if (!detail::next_data_line(in, line)) throw Error("vocabulary: truncated");
    std::istringstream ss(line);
    std::string tok;
    for (long j = 0; j < dim; ++j) {
      if (!(ss >> tok)) throw Error("vocabulary: short row");
      vocab.centroids(i, j) = detail::parse_number(tok);
    }
  }
  return vocab;
}

}  // namespace aprlab
