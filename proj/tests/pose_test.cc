#include "aprlab/pose.h"

#include "test_util.h"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace aprlab;
using aprlab::testing::random_pose;
using aprlab::testing::random_quaternion;

namespace {

Posed at(double x, double y, double z) { return Posed(Vector3d(x, y, z), Vector4d(1, 0, 0, 0)); }

Posed rotated_z(double degrees) {
  const double h = 0.5 * degrees / kRadToDeg;
  return Posed(Vector3d::Zero(), Vector4d(std::cos(h), 0, 0, std::sin(h)));
}

// Medians by full sort.
std::pair<double, double> sorted_medians(const std::vector<PoseError>& errors) {
  std::vector<double> p, r;
  for (const auto& e : errors) {
    p.push_back(e.position_err);
    r.push_back(e.orientation_err);
  }
  std::sort(p.begin(), p.end());
  std::sort(r.begin(), r.end());
  const std::size_t n = p.size();
  if (n % 2 == 1) return {p[n / 2], r[n / 2]};
  return {(p[n / 2 - 1] + p[n / 2]) / 2, (r[n / 2 - 1] + r[n / 2]) / 2};
}

}  // namespace

TEST_CASE("pose construction normalizes and canonicalizes the quaternion") {
  const Posed p(Vector3d(1, 2, 3), Vector4d(-2, 0, 0, 0));
  CHECK(p.orientation() == Vector4d(1, 0, 0, 0));
  const Posed q(Vector3d::Zero(), Vector4d(0, 0, -1, 0));
  CHECK(q.orientation() == Vector4d(0, 0, 1, 0));
  const Posed r(Vector3d::Zero(), Vector4d(0, 0, 0, -3));
  CHECK(r.orientation() == Vector4d(0, 0, 0, 1));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Vector4d raw = 3.0 * random_quaternion(rng);
    const Posed s(Vector3d::Zero(), raw);
    CHECK(std::abs(s.orientation().norm() - 1.0) <= 1e-12);
    CHECK(s.orientation()[0] >= 0.0);
    // canonicalizing again is a no-op
    CHECK(Posed(Vector3d::Zero(), s.orientation()).orientation() == s.orientation());
  }
  CHECK_THROWS_AS(Posed(Vector3d(NAN, 0, 0), Vector4d(1, 0, 0, 0)), Error);
  CHECK_THROWS_AS(Posed(Vector3d::Zero(), Vector4d(0, 0, 0, 0)), Error);
}

TEST_CASE("position_error") {
  CHECK(position_error(at(0, 0, 0), at(3, 4, 0)) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(position_error(at(1, 2, 3), at(1, 2, 3)) == 0.0);
  CHECK(position_error(at(1, 1, 1), at(2, 2, 2)) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));

  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Posed a = random_pose(rng, 10), b = random_pose(rng, 10), c = random_pose(rng, 10);
    CHECK(position_error(a, b) == position_error(b, a));
    CHECK(position_error(a, c) <= position_error(a, b) + position_error(b, c) + 1e-12);
  }
}

TEST_CASE("orientation_error") {
  std::mt19937_64 rng(3);
  const Vector4d q = random_quaternion(rng);
  const Posed a(Vector3d::Zero(), q);
  CHECK(orientation_error(a, a) == 0.0);
  CHECK(orientation_error(a, Posed(Vector3d::Zero(), Vector4d(-q))) == 0.0);
  CHECK(orientation_error(rotated_z(90), Posed()) == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(orientation_error(rotated_z(180), Posed()) == doctest::Approx(180.0).epsilon(1e-12));

  for (int i = 0; i < 200; ++i) {
    const Posed u(Vector3d::Zero(), random_quaternion(rng));
    const Posed v(Vector3d::Zero(), random_quaternion(rng));
    const double e = orientation_error(u, v);
    const double dot = std::clamp(std::abs(u.orientation().dot(v.orientation())), 0.0, 1.0);
    CHECK(e >= 0.0);
    CHECK(e <= 180.0);
    CHECK(e == doctest::Approx(2 * std::acos(dot) * kRadToDeg).epsilon(1e-9));
  }
}

TEST_CASE("median_errors") {
  const std::vector<PoseError> odd = {{1, 10}, {2, 20}, {3, 30}};
  CHECK(median_errors(odd) == std::pair<double, double>(2, 20));
  const std::vector<PoseError> even = {{1, 1}, {3, 3}};
  CHECK(median_errors(even) == std::pair<double, double>(2, 2));
  CHECK_THROWS_WITH_AS(median_errors(std::vector<PoseError>{}), "no samples", Error);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 100);
  for (const std::size_t n : {1u, 2u, 7u, 1000u, 1001u}) {
    std::vector<PoseError> errors;
    for (std::size_t i = 0; i < n; ++i) errors.push_back({u(rng), u(rng)});
    CHECK(median_errors(errors) == sorted_medians(errors));
  }
}

TEST_CASE("interpolate_poses") {
  const std::vector<Posed> two = {at(0, 0, 0), at(2, 0, 0)};
  const Posed mid = interpolate_poses(Vector2d(0.5, 0.5), std::span<const Posed>(two));
  CHECK(mid.position() == Vector3d(1, 0, 0));
  CHECK(mid.orientation() == Vector4d(1, 0, 0, 0));

  std::mt19937_64 rng(5);
  const std::vector<Posed> one = {random_pose(rng)};
  CHECK(interpolate_poses(Eigen::VectorXd::Ones(1), std::span<const Posed>(one)) == one[0]);

  // q and -q blend to q once the second one is sign-aligned
  const Vector4d q = random_quaternion(rng);
  const std::vector<Posed> antipodal = {Posed(Vector3d::Zero(), q), Posed(Vector3d::Zero(), Vector4d(-q))};
  const Posed blended = interpolate_poses(Vector2d(0.5, 0.5), std::span<const Posed>(antipodal));
  CHECK(orientation_error(blended, antipodal[0]) <= 1e-9);

  std::vector<Posed> many;
  for (int i = 0; i < 5; ++i) many.push_back(random_pose(rng, 5));
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(5);
    e[i] = 1;
    CHECK(interpolate_poses(e, std::span<const Posed>(many)) == many[static_cast<std::size_t>(i)]);
  }

  CHECK_THROWS_AS(interpolate_poses(Vector2d(0.5, 0.6), std::span<const Posed>(two)), Error);
  CHECK_THROWS_AS(interpolate_poses(Eigen::VectorXd::Ones(1), std::span<const Posed>(two)), Error);
  // affine weights with negative entries can cancel the quaternion sum
  const double w = 1.0 / (2.0 - std::sqrt(2.0));
  const std::vector<Posed> cancel = {Posed(Vector3d::Zero(), Vector4d(1, 0, 0, 0)),
                                     Posed(Vector3d::Zero(), Vector4d(0, 1, 0, 0)),
                                     Posed(Vector3d::Zero(), Vector4d(1, 1, 0, 0))};
  CHECK_THROWS_WITH_AS(interpolate_poses(Vector3d(w, w, 1.0 - 2.0 * w), std::span<const Posed>(cancel)),
                       "degenerate orientation blend", Error);
}
