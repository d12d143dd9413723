#include "aprlab/geo_solver.h"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>

namespace aprlab {
namespace {

// Real roots of sum coeffs[i] x^i (degree <= 4), polished with Newton steps.
std::vector<double> real_polynomial_roots(std::array<double, 5> coeffs) {
  const double scale = std::max({std::abs(coeffs[0]), std::abs(coeffs[1]), std::abs(coeffs[2]),
                                 std::abs(coeffs[3]), std::abs(coeffs[4])});
  if (scale == 0) return {};
  for (auto& c : coeffs) c /= scale;
  int degree = 4;
  while (degree > 0 && std::abs(coeffs[static_cast<std::size_t>(degree)]) < 1e-13) --degree;
  if (degree == 0) return {};

  const auto eval = [&](double x, double& deriv) {
    double p = 0, dp = 0;
    for (int i = 4; i >= 0; --i) {
      dp = dp * x + p;
      p = p * x + coeffs[static_cast<std::size_t>(i)];
    }
    deriv = dp;
    return p;
  };

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  const double lead = coeffs[static_cast<std::size_t>(degree)];
  for (int i = 0; i < degree; ++i) {
    companion(0, i) = -coeffs[static_cast<std::size_t>(degree - 1 - i)] / lead;
    if (i + 1 < degree) companion(i + 1, i) = 1.0;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<double> roots;
  for (Eigen::Index i = 0; i < degree; ++i) {
    const std::complex<double> z = solver.eigenvalues()[i];
    // near-double real roots come out as complex pairs with a small imaginary part
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      double dp = 0;
      const double p = eval(x, dp);
      if (dp == 0) break;
      const double step = p / dp;
      x -= step;
      if (std::abs(step) <= 1e-16 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

struct Triangle {
  double a2, b2, c2;            // squared side lengths opposite the rays
  double cos_a, cos_b, cos_g;   // ray angles (2,3), (1,3), (1,2)
};

// Residuals of the three law-of-cosines constraints. Depths s are refined with
// Newton steps; returns the final maximum relative residual.
double refine_depths(const Triangle& t, Vector3d& s) {
  const auto residual = [&](const Vector3d& d) {
    return Vector3d(d[1] * d[1] + d[2] * d[2] - 2 * d[1] * d[2] * t.cos_a - t.a2,
                    d[0] * d[0] + d[2] * d[2] - 2 * d[0] * d[2] * t.cos_b - t.b2,
                    d[0] * d[0] + d[1] * d[1] - 2 * d[0] * d[1] * t.cos_g - t.c2);
  };
  const Vector3d scale(t.a2, t.b2, t.c2);
  Vector3d r = residual(s);
  double rel = r.cwiseQuotient(scale).cwiseAbs().maxCoeff();
  for (int it = 0; it < 6 && rel > 1e-15; ++it) {
    Matrix3d J;
    J << 0, 2 * s[1] - 2 * s[2] * t.cos_a, 2 * s[2] - 2 * s[1] * t.cos_a,
        2 * s[0] - 2 * s[2] * t.cos_b, 0, 2 * s[2] - 2 * s[0] * t.cos_b,
        2 * s[0] - 2 * s[1] * t.cos_g, 2 * s[1] - 2 * s[0] * t.cos_g, 0;
    Eigen::FullPivLU<Matrix3d> lu(J);
    if (!lu.isInvertible()) break;
    const Vector3d candidate = s - lu.solve(r);
    const Vector3d r_new = residual(candidate);
    const double rel_new = r_new.cwiseQuotient(scale).cwiseAbs().maxCoeff();
    if (!(rel_new < rel)) break;
    s = candidate;
    r = r_new;
    rel = rel_new;
  }
  return rel;
}

// Rigid transform mapping the world triangle onto the camera-frame triangle.
Posed align_triangles(const std::array<Vector3d, 3>& world, const std::array<Vector3d, 3>& cam) {
  const auto frame = [](const std::array<Vector3d, 3>& p) {
    const Vector3d e1 = (p[1] - p[0]).normalized();
    const Vector3d e3 = e1.cross(p[2] - p[0]).normalized();
    Matrix3d F;
    F << e1, e3.cross(e1), e3;
    return F;
  };
  const Matrix3d R = frame(cam) * frame(world).transpose();
  const Vector3d t = cam[0] - R * world[0];
  return Posed(-R.transpose() * t, Eigen::Quaterniond(R));
}

}  // namespace

std::vector<Posed> p3p_solve(const Correspondence& c1, const Correspondence& c2,
                             const Correspondence& c3, const Intrinsics& intr) {
  const std::array<Vector3d, 3> X = {c1.point, c2.point, c3.point};
  const std::array<Vector3d, 3> f = {bearing(intr, c1.pixel), bearing(intr, c2.pixel),
                                     bearing(intr, c3.pixel)};
  const double extent = std::max({(X[1] - X[0]).norm(), (X[2] - X[0]).norm(),
                                  (X[2] - X[1]).norm()});
  if (!(extent > 0) || (X[1] - X[0]).cross(X[2] - X[0]).norm() <= 1e-10 * extent * extent) {
    throw Error("degenerate minimal set");
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (f[static_cast<std::size_t>(i)].cross(f[static_cast<std::size_t>(j)]).norm() < 1e-12) {
        throw Error("degenerate minimal set");
      }
    }
  }

  Triangle t;
  t.a2 = (X[1] - X[2]).squaredNorm();
  t.b2 = (X[0] - X[2]).squaredNorm();
  t.c2 = (X[0] - X[1]).squaredNorm();
  t.cos_a = f[1].dot(f[2]);
  t.cos_b = f[0].dot(f[2]);
  t.cos_g = f[0].dot(f[1]);

  // Grunert's quartic in v = s3 / s1, with u = s2 / s1.
  const double ca = t.cos_a, cb = t.cos_b, cg = t.cos_g;
  const double p = (t.a2 - t.c2) / t.b2;   // (a^2 - c^2) / b^2
  const double q = (t.a2 + t.c2) / t.b2;   // (a^2 + c^2) / b^2
  const double rc = t.c2 / t.b2;
  const double ra = t.a2 / t.b2;
  std::array<double, 5> coeffs;
  coeffs[4] = (p - 1) * (p - 1) - 4 * rc * ca * ca;
  coeffs[3] = 4 * (p * (1 - p) * cb - (1 - q) * ca * cg + 2 * rc * ca * ca * cb);
  coeffs[2] = 2 * (p * p - 1 + 2 * p * p * cb * cb + 2 * ((t.b2 - t.c2) / t.b2) * ca * ca -
                   4 * q * ca * cb * cg + 2 * ((t.b2 - t.a2) / t.b2) * cg * cg);
  coeffs[1] = 4 * (-p * (1 + p) * cb + 2 * ra * cg * cg * cb - (1 - q) * ca * cg);
  coeffs[0] = (1 + p) * (1 + p) - 4 * ra * cg * cg;

  std::vector<Posed> out;
  for (const double v : real_polynomial_roots(coeffs)) {
    if (!(v > 0)) continue;
    const double s1_sq = t.b2 / (1 + v * v - 2 * v * cb);
    if (!(s1_sq > 0)) continue;
    const double s1 = std::sqrt(s1_sq);

    std::vector<double> u_candidates;
    const double denom = 2 * (cg - v * ca);
    if (std::abs(denom) > 1e-10) {
      u_candidates.push_back(((-1 + p) * v * v - 2 * p * cb * v + 1 + p) / denom);
    }
    // 1 + u^2 - 2 u cos_g = c^2 / s1^2 also covers symmetric rays, where the
    // linear expression degenerates to 0 / 0
    const double disc = cg * cg - 1 + t.c2 / s1_sq;
    if (std::abs(denom) < 1e-4 && disc >= 0) {
      u_candidates.push_back(cg + std::sqrt(disc));
      u_candidates.push_back(cg - std::sqrt(disc));
    }
    for (const double u : u_candidates) {
      if (!(u > 0)) continue;
      Vector3d s(s1, u * s1, v * s1);
      const double rel = refine_depths(t, s);
      if (!(rel < 1e-8) || (s.array() <= 0).any()) continue;
      const std::array<Vector3d, 3> Y = {s[0] * f[0], s[1] * f[1], s[2] * f[2]};
      const Posed pose = align_triangles(X, Y);
      bool duplicate = false;
      for (const auto& other : out) {
        if ((other.position() - pose.position()).norm() < 1e-9 * (1 + extent) &&
            (other.orientation() - pose.orientation()).norm() < 1e-9) {
          duplicate = true;
        }
      }
      if (!duplicate) out.push_back(pose);
    }
  }
  return out;
}

}  // namespace aprlab
