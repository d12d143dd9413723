#pragma once

#include "aprlab/pose.h"
#include "aprlab/types.h"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aprlab {

/// RootSIFT-normalized local descriptor. `zero` marks patches without any
/// gradient energy; their vector is all zeros and they are ignored downstream.
struct LocalDescriptor {
  VectorXd v;
  bool zero = false;
};

inline constexpr int kDescriptorCells = 4;
inline constexpr int kDescriptorBins = 2;
inline constexpr int kLocalDescriptorSize = kDescriptorCells * kDescriptorCells * kDescriptorBins;

/// L1-normalize, then take element-wise square roots.
LocalDescriptor rootsift_normalize(const VectorXd& hist);

/// Single-scale dense grid of patches in row-major order. Each patch is split
/// into 4x4 cells; each cell accumulates the gradient magnitude split between
/// a horizontal and a vertical orientation bin.
std::vector<LocalDescriptor> dense_local_descriptors(const MatrixXd& image, int patch,
                                                     int stride);

struct Vocabulary {
  MatrixXd centroids;  // K x dim, one centroid per row

  Eigen::Index size() const { return centroids.rows(); }
  Eigen::Index dim() const { return centroids.cols(); }
  Eigen::Index nearest(const VectorXd& v) const;
};

/// k-means++ seeding followed by Lloyd iterations on the rows of `points`.
Vocabulary kmeans(const MatrixXd& points, int k, std::uint64_t seed, int max_iter);

/// k-means over the non-zero local descriptors.
Vocabulary kmeans_vocabulary(std::span<const LocalDescriptor> descs, int k, std::uint64_t seed,
                             int max_iter);

/// Intra-normalized VLAD with a final global L2 normalization.
VectorXd vlad_aggregate(std::span<const LocalDescriptor> descs, const Vocabulary& vocab);

struct PcaProjection {
  VectorXd mean;
  MatrixXd basis;  // D x target_dim, orthonormal columns

  Eigen::Index input_dim() const { return basis.rows(); }
  Eigen::Index output_dim() const { return basis.cols(); }
};

/// `descriptors` holds one sample per row.
PcaProjection pca_fit(const MatrixXd& descriptors, int target_dim);
/// Projects and re-normalizes; a projection with norm below 1e-12 maps to zero.
VectorXd pca_apply(const PcaProjection& pca, const VectorXd& descriptor);

struct DatabaseEntry {
  std::string image_id;
  VectorXd descriptor;
  Posed pose;
};

class DescriptorDatabase {
public:
  DescriptorDatabase() = default;
  explicit DescriptorDatabase(std::vector<DatabaseEntry> entries,
                              std::optional<PcaProjection> pca = std::nullopt);

  void add(DatabaseEntry entry);

  std::span<const DatabaseEntry> entries() const { return entries_; }
  const DatabaseEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Eigen::Index dim() const { return entries_.empty() ? 0 : entries_.front().descriptor.size(); }
  const std::optional<PcaProjection>& pca() const { return pca_; }

private:
  std::vector<DatabaseEntry> entries_;
  std::optional<PcaProjection> pca_;
};

struct Neighbor {
  std::size_t index;
  std::string image_id;
  double distance;
};

/// Exact k nearest neighbors by Euclidean distance, ties broken by image_id.
std::vector<Neighbor> knn(const DescriptorDatabase& db, const VectorXd& query, int k);

Posed top1_pose(const DescriptorDatabase& db, const VectorXd& query);

struct AffineWeights {
  VectorXd weights;  // sums to one
  double residual = 0.0;
  bool damped = false;  // ridge term was needed
};

/// Minimizes ||q - N a|| subject to sum(a) = 1 through the KKT system. When
/// the neighbors are affinely dependent the system is singular and a damping
/// term ridge * ||a - 1/k||^2 is added.
AffineWeights affine_weights(const VectorXd& query, const MatrixXd& neighbors,
                             double ridge = 1e-8);

Posed interpolated_pose(const DescriptorDatabase& db, const VectorXd& query, int k,
                        double ridge = 1e-8);

/// Neighbor counts used for pose interpolation on the benchmark datasets.
namespace topk {
inline constexpr int kCambridgeLandmarks = 20;
inline constexpr int kSevenScenes = 25;
inline constexpr int kDeepLoc = 15;
inline constexpr int kTumLsi = 2;
}  // namespace topk

struct DenseVladOptions {
  int patch = 16;
  int stride = 8;
  int vocabulary_size = 16;
  int pca_dim = 64;
  int kmeans_iterations = 100;
  std::uint64_t seed = 0;
};

/// Trained descriptor pipeline: dense local descriptors, VLAD, PCA.
class DenseVlad {
public:
  DenseVlad(DenseVladOptions options, Vocabulary vocab, std::optional<PcaProjection> pca);

  /// The vocabulary and PCA are trained on the given images. The PCA target
  /// dimension is capped at min(D, image count).
  static DenseVlad train(std::span<const MatrixXd> images, const DenseVladOptions& options);

  VectorXd describe(const MatrixXd& image) const;

  const Vocabulary& vocabulary() const { return vocab_; }
  const std::optional<PcaProjection>& pca() const { return pca_; }
  const DenseVladOptions& options() const { return options_; }

private:
  DenseVladOptions options_;
  Vocabulary vocab_;
  std::optional<PcaProjection> pca_;
};

/// Header `D count`, then per entry `image_id`, D values and 7 pose values.
void write_descriptor_database(std::ostream& out, const DescriptorDatabase& db);
DescriptorDatabase read_descriptor_database(std::istream& in);
/// Header `K dim`, then one centroid per row.
void write_vocabulary(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocabulary(std::istream& in);

}  // namespace aprlab
