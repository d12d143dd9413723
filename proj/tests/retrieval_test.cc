#include "aprlab/retrieval.h"

#include "test_util.h"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <random>
#include <sstream>

using namespace aprlab;
using aprlab::testing::random_pose;
using aprlab::testing::random_vectorx;

namespace {

DescriptorDatabase random_database(std::mt19937_64& rng, int count, int dim) {
  std::vector<DatabaseEntry> entries;
  for (int i = 0; i < count; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "db%05d", i);
    entries.push_back({id, random_vectorx(rng, dim), random_pose(rng, 5)});
  }
  return DescriptorDatabase(std::move(entries));
}

MatrixXd stripes(int h, int w, int period, int shift) {
  MatrixXd img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int x = c - shift;
      img(r, c) = std::sin(0.7 * x) * std::cos(0.3 * r) + ((x / period + r / period) % 2 == 0 ? 1.0 : 0.0);
    }
  }
  return img;
}

}  // namespace

TEST_CASE("rootsift_normalize") {
  const auto d = rootsift_normalize(Vector4d(1, 3, 0, 0));
  CHECK_FALSE(d.zero);
  CHECK(d.v.isApprox(Vector4d(0.5, std::sqrt(0.75), 0, 0), 1e-15));
  CHECK(std::abs(d.v.squaredNorm() - 1.0) <= 1e-15);
  const auto z = rootsift_normalize(Vector4d::Zero());
  CHECK(z.zero);
  CHECK(z.v.isZero(0));
  CHECK_THROWS_AS(rootsift_normalize(Vector2d(1, -1)), Error);
}

TEST_CASE("dense_local_descriptors grid") {
  std::mt19937_64 rng(50);
  MatrixXd img = MatrixXd::Random(64, 64);
  const auto descs = dense_local_descriptors(img, 16, 16);
  CHECK(descs.size() == 16);
  for (const auto& d : descs) {
    CHECK(d.v.size() == kLocalDescriptorSize);
    CHECK(std::abs(d.v.squaredNorm() - 1.0) <= 1e-12);
  }
  CHECK(dense_local_descriptors(img, 16, 8).size() == 49);

  const auto flat = dense_local_descriptors(MatrixXd::Constant(64, 64, 0.7), 16, 8);
  for (const auto& d : flat) CHECK(d.zero);

  CHECK_THROWS_AS(dense_local_descriptors(img, 10, 8), Error);
  CHECK_THROWS_AS(dense_local_descriptors(img, 16, 0), Error);
  CHECK_THROWS_AS(dense_local_descriptors(MatrixXd::Zero(8, 8), 16, 8), Error);
}

TEST_CASE("dense_local_descriptors follow a shifted pattern") {
  const MatrixXd a = stripes(64, 96, 5, 0);
  const MatrixXd b = stripes(64, 96, 5, 8);
  const auto da = dense_local_descriptors(a, 16, 8);
  const auto db = dense_local_descriptors(b, 16, 8);
  const int cols = (96 - 16) / 8 + 1;
  const int rows = (64 - 16) / 8 + 1;
  // interior patches of b one step to the right equal those of a
  for (int r = 0; r < rows; ++r) {
    for (int c = 1; c + 1 < cols - 1; ++c) {
      const auto& x = da[static_cast<std::size_t>(r * cols + c)];
      const auto& y = db[static_cast<std::size_t>(r * cols + c + 1)];
      CHECK((x.v - y.v).norm() <= 1e-12);
    }
  }
}

TEST_CASE("kmeans recovers blob means") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> n(0, 0.05);
  const std::vector<Vector3d> centers = {Vector3d(0, 0, 0), Vector3d(5, 0, 0), Vector3d(0, 5, 5)};
  MatrixXd pts(300, 3);
  for (int i = 0; i < 300; ++i) {
    pts.row(i) = (centers[static_cast<std::size_t>(i % 3)] + Vector3d(n(rng), n(rng), n(rng))).transpose();
  }
  const Vocabulary v = kmeans(pts, 3, 7, 100);
  REQUIRE(v.size() == 3);
  for (int c = 0; c < 3; ++c) {
    Vector3d mean = Vector3d::Zero();
    for (int i = c; i < 300; i += 3) mean += pts.row(i).transpose();
    mean /= 100;
    const Eigen::Index k = v.nearest(mean);
    CHECK((v.centroids.row(k).transpose() - mean).norm() <= 1e-12);
  }
  // same seed, same answer
  CHECK(kmeans(pts, 3, 7, 100).centroids == v.centroids);

  MatrixXd dup(4, 2);
  dup << 1, 1, 1, 1, 2, 2, 2, 2;
  CHECK_THROWS_AS(kmeans(dup, 3, 0, 10), Error);
  const Vocabulary two = kmeans(dup, 2, 0, 10);
  CHECK(two.centroids.rowwise().sum().sum() == doctest::Approx(6.0));
}

TEST_CASE("vlad_aggregate") {
  Vocabulary vocab{MatrixXd::Identity(2, 2)};
  const std::vector<LocalDescriptor> at_center = {{Vector2d(1, 0), false}};
  CHECK(vlad_aggregate(at_center, vocab).isZero(0));

  const std::vector<LocalDescriptor> descs = {{Vector2d(1, 0.5), false},
                                              {Vector2d(0.2, 1), false},
                                              {Vector2d(0.1, 0.9), false},
                                              {Vector2d::Zero(), true}};
  const VectorXd v = vlad_aggregate(descs, vocab);
  CHECK(v.size() == 4);
  CHECK(std::abs(v.norm() - 1.0) <= 1e-12);
  // both blocks intra-normalized before the global normalization
  CHECK(std::abs(v.head(2).norm() - v.tail(2).norm()) <= 1e-12);
  CHECK(v.head(2).normalized().isApprox(Vector2d(0, 1), 1e-12));
  CHECK(v.tail(2).normalized().isApprox(Vector2d(0.3, -0.1).normalized(), 1e-12));
}

TEST_CASE("pca_fit matches the covariance eigenvectors") {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> n(0, 1);
  MatrixXd x(200, 6);
  const VectorXd scales = (VectorXd(6) << 5, 3, 2, 0.5, 0.2, 0.1).finished();
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 6; ++j) x(i, j) = scales[j] * n(rng);
  }
  const MatrixXd mix = Eigen::HouseholderQR<MatrixXd>(MatrixXd::Random(6, 6)).householderQ();
  x = x * mix.transpose();
  const PcaProjection pca = pca_fit(x, 3);
  CHECK(pca.output_dim() == 3);
  CHECK((pca.basis.transpose() * pca.basis - Eigen::Matrix3d::Identity()).norm() <= 1e-12);

  const VectorXd mean = x.colwise().mean().transpose();
  const MatrixXd c = x.rowwise() - mean.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(c.transpose() * c);
  const MatrixXd top = es.eigenvectors().rightCols(3);
  CHECK((pca.basis * pca.basis.transpose() - top * top.transpose()).norm() <= 1e-9);

  const VectorXd y = pca_apply(pca, x.row(0).transpose());
  CHECK(std::abs(y.norm() - 1.0) <= 1e-12);
  CHECK(pca_apply(pca, mean).isZero(0));
  CHECK_THROWS_AS(pca_fit(x, 7), Error);
  CHECK_THROWS_AS(pca_apply(pca, VectorXd::Zero(5)), Error);
}

TEST_CASE("knn matches exhaustive search") {
  std::mt19937_64 rng(53);
  const DescriptorDatabase db = random_database(rng, 10000, 8);
  for (int trial = 0; trial < 5; ++trial) {
    const VectorXd q = random_vectorx(rng, 8);
    std::vector<std::pair<double, std::string>> all;
    for (const auto& e : db.entries()) all.push_back({(e.descriptor - q).norm(), e.image_id});
    std::sort(all.begin(), all.end());
    for (const int k : {1, 5, 25}) {
      const auto nn = knn(db, q, k);
      REQUIRE(nn.size() == static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) {
        CHECK(nn[static_cast<std::size_t>(i)].image_id == all[static_cast<std::size_t>(i)].second);
        CHECK(nn[static_cast<std::size_t>(i)].distance == all[static_cast<std::size_t>(i)].first);
      }
    }
  }
}

TEST_CASE("knn ties and edge cases") {
  DescriptorDatabase db;
  db.add({"b", Vector2d(1, 0), Posed(Vector3d(2, 0, 0), Vector4d(1, 0, 0, 0))});
  db.add({"a", Vector2d(0, 1), Posed(Vector3d(1, 0, 0), Vector4d(1, 0, 0, 0))});
  db.add({"c", Vector2d(5, 5), Posed(Vector3d(3, 0, 0), Vector4d(1, 0, 0, 0))});
  const auto nn = knn(db, Vector2d(0, 0), 2);
  CHECK(nn[0].image_id == "a");
  CHECK(nn[1].image_id == "b");
  CHECK(top1_pose(db, Vector2d(0, 0)).position() == Vector3d(1, 0, 0));
  CHECK(knn(db, Vector2d(0, 0), 10).size() == 3);
  CHECK_THROWS_AS(knn(db, Vector3d(0, 0, 0), 1), Error);
  CHECK_THROWS_AS(knn(db, Vector2d(0, 0), 0), Error);
  CHECK_THROWS_AS(knn(DescriptorDatabase(), Vector2d(0, 0), 1), Error);
  CHECK_THROWS_AS(db.add({"a", Vector2d(0, 0), Posed()}), Error);
}

TEST_CASE("affine_weights on exact members and two neighbors") {
  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd nb = MatrixXd::Random(10, 4);
    const Eigen::Index member = trial % 4;
    const AffineWeights w = affine_weights(nb.col(member), nb);
    CHECK(std::abs(w.weights.sum() - 1.0) <= 1e-9);
    CHECK(w.residual <= 1e-9);
    CHECK(std::abs(w.weights[member] - 1.0) <= 1e-9);
    CHECK_FALSE(w.damped);

    // two neighbors: a = (q - n2).(n1 - n2) / |n1 - n2|^2
    const VectorXd q = random_vectorx(rng, 10);
    const MatrixXd two = nb.leftCols(2);
    const VectorXd d = two.col(0) - two.col(1);
    const double a = (q - two.col(1)).dot(d) / d.squaredNorm();
    const AffineWeights w2 = affine_weights(q, two);
    CHECK(std::abs(w2.weights[0] - a) <= 1e-9);
    CHECK(std::abs(w2.weights[1] - (1 - a)) <= 1e-9);
  }
  const AffineWeights one = affine_weights(Vector3d(1, 2, 3), Vector3d(0, 0, 0));
  CHECK(one.weights == VectorXd::Ones(1));
  CHECK(one.residual == doctest::Approx(std::sqrt(14.0)));
}

TEST_CASE("affine_weights match a Cramer solution of the KKT system") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd nb = MatrixXd::Random(6, 3);
    const VectorXd q = random_vectorx(rng, 6);
    Eigen::Matrix4d K = Eigen::Matrix4d::Zero();
    K.topLeftCorner<3, 3>() = nb.transpose() * nb;
    K.topRightCorner<3, 1>().setOnes();
    K.bottomLeftCorner<1, 3>().setOnes();
    Eigen::Vector4d b;
    b << nb.transpose() * q, 1.0;
    const double det = K.determinant();
    const AffineWeights w = affine_weights(q, nb);
    for (int i = 0; i < 3; ++i) {
      Eigen::Matrix4d Ki = K;
      Ki.col(i) = b;
      CHECK(std::abs(w.weights[i] - Ki.determinant() / det) <= 1e-9);
    }
    CHECK(std::abs(w.weights.sum() - 1.0) <= 1e-9);
    // no other affine combination does better
    for (int j = 0; j < 20; ++j) {
      Vector3d a = w.weights + 0.1 * Vector3d::Random();
      a[2] = 1.0 - a[0] - a[1];
      CHECK((q - nb * a).norm() >= w.residual - 1e-12);
    }
  }
}

TEST_CASE("affine_weights on three collinear neighbors") {
  // n_i = c_i e with c = (0, 1, 2): the KKT matrix is singular, so the damped
  // problem |q - N a|^2 + r |a - 1/3|^2 is solved. By hand:
  //   a = 1/3 - (mean(c) - t) / (r + S) (c - mean(c)),  S = sum (c_i - mean)^2
  const Vector2d e = Vector2d(3, 4).normalized();
  MatrixXd nb(2, 3);
  nb << 0 * e, 1 * e, 2 * e;
  const Vector3d c(0, 1, 2);
  for (const double t : {0.5, 1.7, -0.3}) {
    for (const double r : {1e-3, 0.1}) {
      const AffineWeights w = affine_weights(t * e, nb, r);
      CHECK(w.damped);
      const Vector3d expect = Vector3d::Constant(1.0 / 3) - (1.0 - t) / (r + 2.0) * (c - Vector3d::Ones());
      CHECK((w.weights - expect).norm() <= 1e-9);
      CHECK(std::abs(w.weights.sum() - 1.0) <= 1e-9);
    }
    const AffineWeights tiny = affine_weights(t * e, nb);
    CHECK(tiny.residual <= 1e-6);
  }
  CHECK_THROWS_WITH_AS(affine_weights(0.5 * e, nb, 0.0), "degenerate neighborhood", Error);
}

TEST_CASE("interpolated_pose") {
  std::mt19937_64 rng(56);
  const DescriptorDatabase db = random_database(rng, 200, 6);
  for (int i = 0; i < 10; ++i) {
    const VectorXd q = random_vectorx(rng, 6);
    CHECK(interpolated_pose(db, q, 1) == top1_pose(db, q));
  }
  // the query is a database member: its own pose comes back
  CHECK(position_error(interpolated_pose(db, db[17].descriptor, 5), db[17].pose) <= 1e-9);
  CHECK(topk::kCambridgeLandmarks == 20);
  CHECK(topk::kSevenScenes == 25);
  CHECK(topk::kDeepLoc == 15);
  CHECK(topk::kTumLsi == 2);
}

TEST_CASE("dense VLAD pipeline and serialization") {
  std::vector<MatrixXd> images;
  for (int s = 0; s < 6; ++s) images.push_back(stripes(64, 96, 4 + s, 3 * s));
  DenseVladOptions opt;
  opt.vocabulary_size = 4;
  opt.pca_dim = 64;
  opt.seed = 3;
  const DenseVlad model = DenseVlad::train(images, opt);
  REQUIRE(model.pca());
  CHECK(model.pca()->output_dim() == 6);
  const VectorXd d0 = model.describe(images[0]);
  CHECK(d0.size() == 6);
  CHECK(std::abs(d0.norm() - 1.0) <= 1e-12);
  CHECK(DenseVlad::train(images, opt).describe(images[2]) == model.describe(images[2]));

  DescriptorDatabase db;
  for (std::size_t i = 0; i < images.size(); ++i) {
    db.add({"i" + std::to_string(i), model.describe(images[i]), Posed(Vector3d(double(i), 0, 0), Vector4d(1, 0, 0, 0))});
  }
  std::stringstream ss;
  write_descriptor_database(ss, db);
  const DescriptorDatabase back = read_descriptor_database(ss);
  REQUIRE(back.size() == db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    CHECK(back[i].descriptor == db[i].descriptor);
    CHECK(back[i].pose == db[i].pose);
  }
  std::stringstream vs;
  write_vocabulary(vs, model.vocabulary());
  CHECK(read_vocabulary(vs).centroids == model.vocabulary().centroids);
}
