#include <cmath>

#include <Eigen/LU>
#include <Eigen/QR>

#include "doctest.h"
#include "tensorfield/errors.hpp"
#include "tensorfield/random.hpp"
#include "tensorfield/spd.hpp"

using namespace tensorfield;

namespace {

void check_close(const std::array<double, 6>& a, const std::array<double, 6>& b, double tol) {
  for (int k = 0; k < 6; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(tol));
}

LowerTriangular random_factor(Rng& rng) {
  LowerTriangular t;
  for (int k = 0; k < 3; ++k) {
    for (int l = 0; l <= k; ++l) {
      t.v[tri_index(k, l)] = k == l ? 0.1 + 9.9 * uniform01(rng) : 4.0 * uniform01(rng) - 2.0;
    }
  }
  return t;
}

}  // namespace

TEST_CASE("cholesky of identity and diagonal matrices") {
  CHECK(cholesky_lower(SpdMatrix::identity()) == LowerTriangular::identity());
  const auto t = cholesky_lower(SpdMatrix::diagonal(4, 9, 16));
  check_close(t.v, {2, 0, 3, 0, 0, 4}, 1e-15);
}

TEST_CASE("cholesky of a coupled block composes back") {
  const SpdMatrix a{{4, 2, 5, 0, 0, 9}};
  const auto t = cholesky_lower(a);
  check_close(t.v, {2, 1, 2, 0, 0, 3}, 1e-15);
  const Eigen::Matrix3d back = t.dense() * t.dense().transpose();
  CHECK((back - a.dense()).norm() < 1e-14);
  check_close(compose(t).v, a.v, 1e-12);
}

TEST_CASE("cholesky rejects indefinite and singular input") {
  CHECK_THROWS_AS(cholesky_lower(SpdMatrix{{1, 2, 1, 0, 0, 1}}), NotPositiveDefinite);
  CHECK_THROWS_AS(cholesky_lower(SpdMatrix::diagonal(1, 0, 1)), NotPositiveDefinite);
  CHECK_THROWS_AS(cholesky_lower(SpdMatrix::diagonal(-1, 1, 1)), NotPositiveDefinite);
  CHECK_FALSE(is_positive_definite(SpdMatrix{{1, 2, 1, 0, 0, 1}}));
  CHECK(is_positive_definite(SpdMatrix::diagonal(1e-6, 1e3, 2)));
}

TEST_CASE("compose of simple factors") {
  CHECK(compose(LowerTriangular::identity()) == SpdMatrix::identity());
  check_close(compose(LowerTriangular{{2, 0, 3, 0, 0, 4}}).v, {4, 0, 9, 0, 0, 16}, 1e-15);
}

TEST_CASE("cholesky and compose round trip on random factors") {
  Rng rng = make_rng(11, 0);
  for (int rep = 0; rep < 500; ++rep) {
    const auto t = random_factor(rng);
    const auto a = compose(t);
    const Eigen::Matrix3d d = a.dense();
    CHECK(d(0, 0) > 0);
    CHECK(d.topLeftCorner<2, 2>().determinant() > 0);
    CHECK(d.determinant() > 0);
    const auto back = cholesky_lower(a);
    for (int k = 0; k < 6; ++k) CHECK(std::abs(back.v[k] - t.v[k]) < 1e-10 * std::max(1.0, std::abs(t.v[k])));
  }
}

TEST_CASE("eigenvalues of simple matrices") {
  const auto id = eigenvalues_sym3(SpdMatrix::identity());
  for (double l : id) CHECK(l == doctest::Approx(1.0).epsilon(1e-14));
  const auto d = eigenvalues_sym3(SpdMatrix::diagonal(3, 1, 2));
  CHECK(d[0] == doctest::Approx(3.0));
  CHECK(d[1] == doctest::Approx(2.0));
  CHECK(d[2] == doctest::Approx(1.0));

  const auto e = eigenvalues_sym3(SpdMatrix{{4, 2, 5, 0, 0, 9}});
  CHECK(e[0] == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx((9 + std::sqrt(17.0)) / 2).epsilon(1e-12));
  CHECK(e[2] == doctest::Approx((9 - std::sqrt(17.0)) / 2).epsilon(1e-12));
}

TEST_CASE("eigenvalues conserve trace and determinant") {
  Rng rng = make_rng(12, 0);
  for (int rep = 0; rep < 500; ++rep) {
    const auto a = compose(random_factor(rng));
    const auto l = eigenvalues_sym3(a);
    CHECK(l[0] >= l[1]);
    CHECK(l[1] >= l[2]);
    CHECK(std::abs(l[0] + l[1] + l[2] - a.trace()) < 1e-10 * std::abs(a.trace()));
    CHECK(std::abs(l[0] * l[1] * l[2] - a.determinant()) < 1e-9 * std::abs(a.determinant()) + 1e-12);
  }
}

TEST_CASE("eigenvalues near degenerate spectra") {
  const auto twin = eigenvalues_sym3(SpdMatrix::diagonal(2, 2, 2 + 1e-9));
  CHECK(twin[0] == doctest::Approx(2 + 1e-9).epsilon(1e-12));
  CHECK(twin[2] == doctest::Approx(2.0).epsilon(1e-12));
  const auto near = eigenvalues_sym3(SpdMatrix{{1, 1e-8, 1, 0, 0, 1}});
  CHECK(near[0] == doctest::Approx(1 + 1e-8).epsilon(1e-12));
  CHECK(near[2] == doctest::Approx(1 - 1e-8).epsilon(1e-12));
}

TEST_CASE("fractional anisotropy special values") {
  CHECK(fractional_anisotropy(SpdMatrix::identity()) == doctest::Approx(0.0));
  CHECK(fractional_anisotropy(SpdMatrix::diagonal(7.5, 7.5, 7.5)) == doctest::Approx(0.0));
  CHECK(fractional_anisotropy(SpdMatrix::diagonal(2, 1, 1)) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
  CHECK_THROWS_AS(fractional_anisotropy(SpdMatrix::zero()), DegenerateTensor);
}

TEST_CASE("fractional anisotropy is rotation invariant") {
  Rng rng = make_rng(13, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const auto a = compose(random_factor(rng));
    Eigen::Matrix3d g;
    for (int k = 0; k < 9; ++k) g(k / 3, k % 3) = standard_normal(rng);
    const Eigen::Matrix3d q = Eigen::HouseholderQR<Eigen::Matrix3d>(g).householderQ();
    const auto rotated = SymMatrix3::from_dense(q * a.dense() * q.transpose());
    const double fa = fractional_anisotropy(a);
    CHECK(fa >= 0.0);
    CHECK(fa <= 1.0);
    CHECK(std::abs(fractional_anisotropy(rotated) - fa) < 1e-10);
  }
}

TEST_CASE("fractional anisotropy approaches one for a rank-one limit") {
  const double f2 = fractional_anisotropy(SpdMatrix::diagonal(1, 1e-2, 1e-2));
  const double f4 = fractional_anisotropy(SpdMatrix::diagonal(1, 1e-4, 1e-4));
  const double f6 = fractional_anisotropy(SpdMatrix::diagonal(1, 1e-6, 1e-6));
  CHECK(f2 < f4);
  CHECK(f4 < f6);
  CHECK(f6 > 0.999998);
}

TEST_CASE("squared Frobenius differences") {
  const auto a = compose(LowerTriangular{{1.5, 0.2, 0.7, -0.3, 0.1, 2.0}});
  CHECK(frobenius_sq_diff(a, a) == 0.0);
  CHECK(frobenius_sq_diff(SpdMatrix::identity(), SpdMatrix::zero()) == doctest::Approx(3.0));
  CHECK(frobenius_sq_diff(SpdMatrix::diagonal(2, 1, 1), SpdMatrix::identity()) == doctest::Approx(1.0));
  const SymMatrix3 b{{0, 1, 0, 0, 0, 0}};
  CHECK(frobenius_sq_diff(b, SpdMatrix::zero()) == doctest::Approx(2.0));
  CHECK(frobenius_sq_diff(a, b) == doctest::Approx(frobenius_sq_diff(b, a)));
  CHECK(frobenius_sq_diff(a, b) == doctest::Approx((a.dense() - b.dense()).squaredNorm()));
}
