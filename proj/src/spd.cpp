#include "tensorfield/spd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "tensorfield/errors.hpp"

namespace tensorfield {

SymMatrix3 SymMatrix3::from_dense(const Eigen::Matrix3d& m) {
  return {{m(0, 0), m(1, 0), m(1, 1), m(2, 0), m(2, 1), m(2, 2)}};
}

double SymMatrix3::operator()(int row, int col) const {
  return row >= col ? v[tri_index(row, col)] : v[tri_index(col, row)];
}

Eigen::Matrix3d SymMatrix3::dense() const {
  Eigen::Matrix3d m;
  m << v[0], v[1], v[3],
       v[1], v[2], v[4],
       v[3], v[4], v[5];
  return m;
}

double SymMatrix3::determinant() const {
  const auto& a = v;
  return a[0] * (a[2] * a[5] - a[4] * a[4]) - a[1] * (a[1] * a[5] - a[4] * a[3]) +
         a[3] * (a[1] * a[4] - a[2] * a[3]);
}

Eigen::Matrix3d LowerTriangular::dense() const {
  Eigen::Matrix3d m;
  m << v[0], 0.0, 0.0,
       v[1], v[2], 0.0,
       v[3], v[4], v[5];
  return m;
}

namespace {

double pivot_tolerance(const SpdMatrix& a) {
  return 1e-14 * std::max({a.v[0], a.v[2], a.v[5]});
}

// Pivots are ratios of consecutive leading minors, so all pivots above
// the tolerance is the minor-positivity condition. Returns the index of
// the failing pivot (1-3), or 0 on success.
int factor(const SpdMatrix& a, LowerTriangular& t, double& failed) {
  const double tol = pivot_tolerance(a);
  if (!(tol > 0.0) || !std::isfinite(tol)) {
    failed = std::max({a.v[0], a.v[2], a.v[5]});
    return 1;
  }
  const double p1 = a.v[0];
  if (!(p1 > tol)) return failed = p1, 1;
  t.v[0] = std::sqrt(p1);
  t.v[1] = a.v[1] / t.v[0];
  t.v[3] = a.v[3] / t.v[0];
  const double p2 = a.v[2] - t.v[1] * t.v[1];
  if (!(p2 > tol)) return failed = p2, 2;
  t.v[2] = std::sqrt(p2);
  t.v[4] = (a.v[4] - t.v[3] * t.v[1]) / t.v[2];
  const double p3 = a.v[5] - t.v[3] * t.v[3] - t.v[4] * t.v[4];
  if (!(p3 > tol)) return failed = p3, 3;
  t.v[5] = std::sqrt(p3);
  return 0;
}

}  // namespace

bool is_positive_definite(const SpdMatrix& a) {
  LowerTriangular t;
  double failed = 0.0;
  return factor(a, t, failed) == 0;
}

LowerTriangular cholesky_lower(const SpdMatrix& a) {
  LowerTriangular t;
  double failed = 0.0;
  if (const int k = factor(a, t, failed); k != 0) {
    throw NotPositiveDefinite("pivot " + std::to_string(k) + " = " + std::to_string(failed));
  }
  return t;
}

SpdMatrix compose(const LowerTriangular& t) {
  const auto& x = t.v;
  return {{x[0] * x[0],
           x[1] * x[0],
           x[1] * x[1] + x[2] * x[2],
           x[3] * x[0],
           x[3] * x[1] + x[4] * x[2],
           x[3] * x[3] + x[4] * x[4] + x[5] * x[5]}};
}

std::array<double, 3> eigenvalues_sym3(const SymMatrix3& a) {
  const double off = a.v[1] * a.v[1] + a.v[3] * a.v[3] + a.v[4] * a.v[4];
  const double q = a.trace() / 3.0;
  const double d0 = a.v[0] - q, d1 = a.v[2] - q, d2 = a.v[5] - q;
  const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * off;
  const double scale = std::max({std::abs(a.v[0]), std::abs(a.v[2]), std::abs(a.v[5]), std::sqrt(off)});
  if (p2 <= 1e-30 * scale * scale) return {q, q, q};

  const double p = std::sqrt(p2 / 6.0);
  SymMatrix3 b = a;
  b.v[0] = d0 / p;
  b.v[2] = d1 / p;
  b.v[5] = d2 / p;
  b.v[1] /= p;
  b.v[3] /= p;
  b.v[4] /= p;
  const double r = b.determinant() / 2.0;

  // acos loses precision when two eigenvalues nearly coincide.
  if (std::abs(r) > 1.0 - 1e-6) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(a.dense(), Eigen::EigenvaluesOnly);
    const auto& ev = solver.eigenvalues();
    return {ev(2), ev(1), ev(0)};
  }

  const double phi = std::acos(r) / 3.0;
  const double l1 = q + 2.0 * p * std::cos(phi);
  const double l3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double l2 = 3.0 * q - l1 - l3;
  std::array<double, 3> out{l1, l2, l3};
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

double fractional_anisotropy(const SpdMatrix& a) {
  const auto [l1, l2, l3] = eigenvalues_sym3(a);
  if (std::max({std::abs(l1), std::abs(l2), std::abs(l3)}) < 1e-14) {
    throw DegenerateTensor("all eigenvalues below 1e-14");
  }
  const double num = (l1 - l2) * (l1 - l2) + (l2 - l3) * (l2 - l3) + (l3 - l1) * (l3 - l1);
  const double den = l1 * l1 + l2 * l2 + l3 * l3;
  const double fa = std::sqrt(0.5) * std::sqrt(num) / std::sqrt(den);
  return std::clamp(fa, 0.0, 1.0);
}

double frobenius_sq_diff(const SymMatrix3& a, const SymMatrix3& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    const double d = a.v[i] - b.v[i];
    const bool diag = (i == 0 || i == 2 || i == 5);
    s += (diag ? 1.0 : 2.0) * d * d;
  }
  return s;
}

}  // namespace tensorfield
