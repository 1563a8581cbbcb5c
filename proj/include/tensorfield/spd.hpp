#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

namespace tensorfield {

/// Symmetric 3x3 matrix stored as its lower triangle in the order
/// (a11, a21, a22, a31, a32, a33). Used both for SPD tensors and for
/// general symmetric arguments (e.g. characteristic-function inputs).
struct SymMatrix3 {
  std::array<double, 6> v{};

  static SymMatrix3 identity() { return {{1, 0, 1, 0, 0, 1}}; }
  static SymMatrix3 zero() { return {}; }
  static SymMatrix3 diagonal(double a, double b, double c) { return {{a, 0, b, 0, 0, c}}; }
  static SymMatrix3 from_dense(const Eigen::Matrix3d& m);

  /// Element (row, col), 0-based, either triangle.
  double operator()(int row, int col) const;
  Eigen::Matrix3d dense() const;
  double trace() const { return v[0] + v[2] + v[5]; }
  double determinant() const;

  friend bool operator==(const SymMatrix3&, const SymMatrix3&) = default;
};

/// Positive definite diffusion tensor; positivity is checked by
/// is_positive_definite(), not enforced by the type.
using SpdMatrix = SymMatrix3;

/// Lower-triangular 3x3 factor (t11, t21, t22, t31, t32, t33).
struct LowerTriangular {
  std::array<double, 6> v{};

  static LowerTriangular identity() { return {{1, 0, 1, 0, 0, 1}}; }

  double t11() const { return v[0]; }
  double t21() const { return v[1]; }
  double t22() const { return v[2]; }
  double t31() const { return v[3]; }
  double t32() const { return v[4]; }
  double t33() const { return v[5]; }

  Eigen::Matrix3d dense() const;

  friend bool operator==(const LowerTriangular&, const LowerTriangular&) = default;
};

/// Index into the six-element lower-triangle storage for (k, l), k >= l, 0-based.
constexpr std::size_t tri_index(int k, int l) { return static_cast<std::size_t>(k * (k + 1) / 2 + l); }

/// True when all three leading principal minors exceed the relative
/// pivot tolerance.
bool is_positive_definite(const SpdMatrix& a);

/// Lower Cholesky factor. Throws NotPositiveDefinite when a pivot falls
/// below 1e-14 times the largest diagonal entry.
LowerTriangular cholesky_lower(const SpdMatrix& a);

/// T * T^T.
SpdMatrix compose(const LowerTriangular& t);

/// Eigenvalues sorted descending.
std::array<double, 3> eigenvalues_sym3(const SymMatrix3& a);

/// Fractional anisotropy in [0, 1]. Throws DegenerateTensor for a
/// numerically zero tensor.
double fractional_anisotropy(const SpdMatrix& a);

/// Squared Frobenius norm of a - b over all nine entries.
double frobenius_sq_diff(const SymMatrix3& a, const SymMatrix3& b);

}  // namespace tensorfield
