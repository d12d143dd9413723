#include "aprlab/geo_solver.h"

#include "test_util.h"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

using namespace aprlab;
using aprlab::testing::looking_at;
using aprlab::testing::random_quaternion;
using aprlab::testing::random_vector;

namespace {

const Intrinsics kIntr(500, 500, 320, 240);

// Points in front of the camera projecting inside the image.
std::vector<Correspondence> visible_points(std::mt19937_64& rng, const Posed& pose, int count,
                                           const Intrinsics& intr = kIntr) {
  std::uniform_real_distribution<double> u(0, 1), depth(2, 10);
  std::vector<Correspondence> out;
  const Matrix3d Rt = pose.rotation().transpose();
  while (static_cast<int>(out.size()) < count) {
    const Vector2d px(u(rng) * intr.width(), u(rng) * intr.height());
    const Vector3d ray((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy, 1.0);
    const Vector3d X = pose.position() + Rt * (depth(rng) * ray);
    out.push_back({project(pose, intr, X).pixel, X});
  }
  return out;
}

Posed random_camera(std::mt19937_64& rng) {
  return Posed(random_vector(rng, 5), random_quaternion(rng));
}

}  // namespace

TEST_CASE("project") {
  const Posed id;
  const auto p = project(id, kIntr, Vector3d(1, 2, 4));
  CHECK_FALSE(p.behind);
  CHECK(p.depth == 4.0);
  CHECK(p.pixel.isApprox(Vector2d(500 * 0.25 + 320, 500 * 0.5 + 240), 1e-15));
  CHECK(project(id, kIntr, Vector3d(0, 0, -1)).behind);
  CHECK(project(id, kIntr, Vector3d(0, 0, 0)).behind);

  // camera at (0, 0, 1), looking along world +x
  const Posed cam = looking_at(Vector3d(0, 0, 1), Vector3d(5, 0, 1));
  const auto q = project(cam, kIntr, Vector3d(3, 0, 1));
  CHECK(q.depth == doctest::Approx(3.0));
  CHECK(q.pixel.isApprox(Vector2d(320, 240), 1e-12));
  // a point above the optical axis lands in the upper half of the image
  CHECK(project(cam, kIntr, Vector3d(3, 0, 2)).pixel.y() < 240);

  const Vector3d b = bearing(kIntr, Vector2d(820, 240));
  CHECK(b.isApprox(Vector3d(1, 0, 1).normalized(), 1e-15));
  CHECK_THROWS_AS(Intrinsics(0, 1, 0, 0), Error);
}

TEST_CASE("p3p recovers the generating pose") {
  std::mt19937_64 rng(60);
  int found = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Posed truth = random_camera(rng);
    const auto c = visible_points(rng, truth, 3);
    const auto sols = p3p_solve(c[0], c[1], c[2], kIntr);
    CHECK(sols.size() <= 4);
    double best = 1e9, best_rot = 1e9;
    for (const auto& s : sols) {
      // every solution reprojects the three points
      for (const auto& m : c) CHECK((project(s, kIntr, m.point).pixel - m.pixel).norm() <= 1e-6);
      if (position_error(s, truth) < best) {
        best = position_error(s, truth);
        best_rot = orientation_error(s, truth);
      }
    }
    if (best <= 1e-6 && best_rot <= 1e-5) ++found;
  }
  CHECK(found == 200);
}

TEST_CASE("p3p on an equilateral configuration") {
  const Posed truth = looking_at(Vector3d(0, -5, 0), Vector3d(0, 0, 0));
  const double s = std::sqrt(3.0) / 2;
  const std::vector<Vector3d> X = {Vector3d(1, 0, 0), Vector3d(-0.5, 0, s), Vector3d(-0.5, 0, -s)};
  std::vector<Correspondence> c;
  for (const auto& x : X) c.push_back({project(truth, kIntr, x).pixel, x});
  const auto sols = p3p_solve(c[0], c[1], c[2], kIntr);
  // the rotations of the triangle about its axis give extra solutions
  CHECK(sols.size() >= 2);
  double best = 1e9;
  for (const auto& p : sols) {
    for (const auto& m : c) CHECK((project(p, kIntr, m.point).pixel - m.pixel).norm() <= 1e-6);
    best = std::min(best, position_error(p, truth));
  }
  CHECK(best <= 1e-6);
}

TEST_CASE("p3p rejects degenerate input") {
  const Posed truth = looking_at(Vector3d(0, -5, 0), Vector3d(0, 0, 0));
  std::vector<Correspondence> c;
  for (const double t : {-1.0, 0.0, 2.0}) {
    const Vector3d X(t, 0, 0.5 * t);
    c.push_back({project(truth, kIntr, X).pixel, X});
  }
  CHECK_THROWS_WITH_AS(p3p_solve(c[0], c[1], c[2], kIntr), "degenerate minimal set", Error);
  // two identical rays
  const Correspondence a{Vector2d(300, 200), Vector3d(0, 0, 0)};
  const Correspondence b{Vector2d(300, 200), Vector3d(1, 0, 0)};
  const Correspondence d{Vector2d(100, 100), Vector3d(0, 0, 1)};
  CHECK_THROWS_AS(p3p_solve(a, b, d, kIntr), Error);
}

TEST_CASE("ransac_pnp") {
  std::mt19937_64 rng(61);
  const Posed truth = random_camera(rng);
  auto matches = visible_points(rng, truth, 60);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::size_t> true_inliers;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (i % 3 == 0) {
      matches[i].pixel += Vector2d(40 + 100 * u(rng), -30 - 100 * u(rng));
    } else {
      true_inliers.push_back(i);
    }
  }
  RansacConfig cfg;
  cfg.seed = 4;
  const RansacResult r = ransac_pnp(matches, kIntr, cfg);
  CHECK(position_error(r.pose, truth) <= 1e-6);
  CHECK(r.inliers == true_inliers);
  CHECK(r.iterations >= 1);
  CHECK(r.iterations <= cfg.max_iterations);
  // same seed, same answer
  const RansacResult again = ransac_pnp(matches, kIntr, cfg);
  CHECK(again.pose == r.pose);
  CHECK(again.iterations == r.iterations);

  CHECK(inliers_for(truth, matches, kIntr, 1e-6) == true_inliers);

  const std::vector<Correspondence> three(matches.begin() + 1, matches.begin() + 4);
  CHECK_THROWS_WITH_AS(ransac_pnp(std::span<const Correspondence>(three), kIntr, cfg),
                       "localization failed", LocalizationFailed);

  // pure noise never gathers four inliers under a tight threshold
  std::vector<Correspondence> junk = visible_points(rng, truth, 30);
  for (auto& m : junk) m.point = random_vector(rng, 50);
  RansacConfig tight = cfg;
  tight.inlier_threshold = 1e-9;
  tight.max_iterations = 200;
  CHECK_THROWS_AS(ransac_pnp(junk, kIntr, tight), LocalizationFailed);
}

TEST_CASE("reprojection Jacobian matches central differences") {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 20; ++trial) {
    const Posed pose = random_camera(rng);
    const auto matches = visible_points(rng, pose, 8);
    const Posed perturbed = apply_pose_update(pose, 0.01 * Eigen::Matrix<double, 6, 1>::Random());
    const auto lin = linearize_reprojection(perturbed, matches, kIntr);
    const double h = 1e-6;
    for (int j = 0; j < 6; ++j) {
      Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
      d[j] = h;
      const VectorXd plus = linearize_reprojection(apply_pose_update(perturbed, d), matches, kIntr).residuals;
      const VectorXd minus = linearize_reprojection(apply_pose_update(perturbed, -d), matches, kIntr).residuals;
      const VectorXd fd = (plus - minus) / (2 * h);
      CHECK((fd - lin.jacobian.col(j)).norm() <= 1e-4 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("refine_pose") {
  std::mt19937_64 rng(63);
  const Posed truth = random_camera(rng);
  const auto matches = visible_points(rng, truth, 40);

  const RefineResult fixed = refine_pose(truth, matches, kIntr);
  CHECK(fixed.initial_cost <= 1e-18);
  CHECK(position_error(fixed.pose, truth) <= 1e-9);

  Eigen::Matrix<double, 6, 1> d;
  d << 0.1, -0.05, 0.08, 0.01, -0.02, 0.015;
  const RefineResult r = refine_pose(apply_pose_update(truth, d), matches, kIntr);
  CHECK(r.final_cost <= r.initial_cost);
  CHECK(position_error(r.pose, truth) <= 1e-6);
  CHECK(orientation_error(r.pose, truth) <= 1e-5);
  CHECK(reprojection_cost(r.pose, matches, kIntr) == doctest::Approx(r.final_cost));

  // noisy pixels: the refined pose stays near the truth and beats it in cost
  std::normal_distribution<double> n(0, 0.5);
  auto noisy = matches;
  for (auto& m : noisy) m.pixel += Vector2d(n(rng), n(rng));
  const RefineResult rn = refine_pose(apply_pose_update(truth, d), noisy, kIntr);
  CHECK(rn.final_cost <= reprojection_cost(truth, noisy, kIntr) + 1e-9);
  CHECK(position_error(rn.pose, truth) <= 0.05);

  Posed behind(truth.position() + 100 * truth.rotation().row(2).transpose(), truth.orientation());
  CHECK(std::isinf(reprojection_cost(behind, matches, kIntr)));
}

TEST_CASE("correspondence blocks survive write and read") {
  std::vector<CorrespondenceBlock> blocks = {{"x", kIntr, {{Vector2d(1.25, 2.5), Vector3d(1, 2, 3)}}}};
  std::stringstream ss;
  write_correspondences(ss, blocks);
  const auto back = read_correspondences(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].matches[0].point == Vector3d(1, 2, 3));
  CHECK(back[0].intrinsics.cx == 320);
}
