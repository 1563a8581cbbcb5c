#include <cmath>
#include <vector>

#include "doctest.h"
#include "tensorfield/errors.hpp"
#include "tensorfield/regression.hpp"
#include "tensorfield/stats.hpp"

using namespace tensorfield;

namespace {

ScenarioConfig null_scenario(int w, int h, int subjects, int m) {
  ScenarioConfig sc;
  sc.width = w;
  sc.height = h;
  sc.subjects = subjects;
  sc.m = m;
  sc.sigma_beta = 0.0;
  sc.drug_effect = 0.0;
  sc.age_effect = 0.0;
  return sc;
}

}  // namespace

TEST_CASE("component bookkeeping") {
  CHECK(component_name(0) == "11");
  CHECK(component_name(3) == "21");
  CHECK(component_name(5) == "32");
  CHECK(component_from_name("31") == 4);
  CHECK(component_from_name("12") == -1);
  CHECK(component_slot(3) == tri_index(1, 0));
  CHECK(row_diagonal_component(4) == 2);
  CHECK(row_diagonal_component(3) == 1);
}

TEST_CASE("mean Cholesky factor from coefficients") {
  const GridDomain d(2, 2);
  auto beta = CoefficientField::zeros(d, 2);
  const Eigen::RowVector2d x(1.0, 1.0);
  CHECK(mean_cholesky(x, beta, 0) == LowerTriangular::identity());

  beta.beta[0](1, 0) = std::log(2.0);
  const auto l = mean_cholesky(x, beta, 1);
  CHECK(l.t11() == doctest::Approx(2.0));
  CHECK(compose(l).v[0] == doctest::Approx(4.0));
  CHECK(compose(l).v[2] == doctest::Approx(1.0));

  auto b2 = CoefficientField::zeros(d, 2);
  b2.beta[3](2, 0) = 0.3;
  b2.beta[3](2, 1) = 0.2;
  const auto l2 = mean_cholesky(x, b2, 2);
  CHECK(l2.t21() == doctest::Approx(0.5));
  CHECK(compose(l2)(1, 0) == doctest::Approx(0.5));

  CHECK_THROWS_AS(mean_cholesky(Eigen::RowVector3d(1, 0, 0), beta, 0), DimensionMismatch);
}

TEST_CASE("design validation") {
  DesignMatrix good{Eigen::MatrixXd(3, 2), {"intercept", "drug"}};
  good.x << 1, 0, 1, 1, 1, 0;
  CHECK_NOTHROW(good.validate());
  CHECK(good.column("drug") == 1);
  CHECK(good.column("age") == -1);

  DesignMatrix collinear{Eigen::MatrixXd(3, 3), {}};
  collinear.x << 1, 0, 0, 1, 1, 2, 1, 0, 0;
  CHECK_THROWS_AS(collinear.validate(), RankDeficientDesign);

  DesignMatrix no_intercept{Eigen::MatrixXd(2, 1), {}};
  no_intercept.x << 1, 2;
  CHECK_THROWS_AS(no_intercept.validate(), DimensionMismatch);
}

TEST_CASE("scenario region is the central block") {
  const GridDomain d(20, 20);
  CHECK(in_region(d, 4, d.index(8, 8)));
  CHECK(in_region(d, 4, d.index(11, 11)));
  CHECK_FALSE(in_region(d, 4, d.index(7, 8)));
  CHECK_FALSE(in_region(d, 4, d.index(12, 9)));
  int count = 0;
  for (int s = 0; s < d.size(); ++s) count += in_region(d, 4, s) ? 1 : 0;
  CHECK(count == 16);
}

TEST_CASE("coefficient means follow the scenario table") {
  ScenarioConfig sc;
  const GridDomain d = sc.domain();
  const auto mean = coefficient_means(sc);
  const int center = d.index(10, 10);
  const int corner = d.index(0, 0);
  for (int c = 0; c < kComponents; ++c) {
    CHECK(mean.beta[c](center, 0) == 0.0);
    CHECK(mean.beta[c](corner, 2) == 0.25);
    CHECK(mean.beta[c](center, 1) == (is_diagonal_component(c) ? 0.5 : 0.0));
    CHECK(mean.beta[c](corner, 1) == 0.0);
  }
}

TEST_CASE("coefficient sampling at zero prior variance returns the means") {
  ScenarioConfig sc;
  sc.width = 8;
  sc.height = 8;
  sc.sigma_beta = 0.0;
  const auto a = sample_coefficients(sc.domain(), sc, 3);
  const auto mean = coefficient_means(sc);
  for (int c = 0; c < kComponents; ++c) CHECK(a.beta[c] == mean.beta[c]);

  sc.sigma_beta = 0.1;
  const auto b = sample_coefficients(sc.domain(), sc, 3);
  const auto b2 = sample_coefficients(sc.domain(), sc, 3);
  CHECK(b.beta[0] == b2.beta[0]);
  CHECK(b.beta[0] != mean.beta[0]);
}

TEST_CASE("covariate generator") {
  const auto d = generate_covariates(10, 5);
  CHECK(d.subjects() == 10);
  CHECK(d.columns() == 3);
  CHECK(d.x.col(1).sum() == 5.0);
  CHECK((d.x.col(0).array() == 1.0).all());
  CHECK((d.x.col(2).array() >= 0.0).all());
  CHECK(generate_covariates(7, 5).x.col(1).sum() == 4.0);

  const auto big = generate_covariates(10000, 6);
  const Eigen::VectorXd age = big.x.col(2);
  CHECK(std::abs(age.mean() - std::sqrt(2.0 / M_PI)) < 0.03);
}

TEST_CASE("swp route with null coefficients is Wishart") {
  const int m = 6;
  const auto sc = null_scenario(1, 1, 50, m);
  std::vector<double> x;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto ds = generate_dataset(sc, GenerativeModel::Swp, seed);
    for (int i = 0; i < sc.subjects; ++i) x.push_back(m * ds.data.at(i, 0).v[0]);
  }
  const auto ks = stats::ks_test(x, [&](double t) { return stats::chi_squared_cdf(t, m); });
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("cdp route at vanishing noise reproduces the mean matrix") {
  ScenarioConfig sc;
  sc.width = 6;
  sc.height = 6;
  sc.subjects = 4;
  sc.sigma_m2 = 1e-12;
  const auto ds = generate_dataset(sc, GenerativeModel::Cdp, 9);
  for (int i = 0; i < sc.subjects; ++i) {
    for (int s = 0; s < ds.data.domain.size(); ++s) {
      const auto mean = compose(mean_cholesky(ds.design.x.row(i), ds.truth, s));
      for (int e = 0; e < 6; ++e) CHECK(std::abs(ds.data.at(i, s).v[e] - mean.v[e]) < 1e-4);
    }
  }
}

TEST_CASE("swp route has the mean matrix as expectation") {
  ScenarioConfig sc;
  sc.width = 2;
  sc.height = 2;
  sc.subjects = 2;
  sc.m = 50;
  sc.sigma_beta = 0.0;
  std::array<double, 6> diff{};
  int count = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto ds = generate_dataset(sc, GenerativeModel::Swp, seed);
    for (int i = 0; i < 2; ++i) {
      const auto mean = compose(mean_cholesky(ds.design.x.row(i), ds.truth, 0));
      for (int e = 0; e < 6; ++e) diff[e] += ds.data.at(i, 0).v[e] - mean.v[e];
      ++count;
    }
  }
  for (double v : diff) CHECK(std::abs(v / count) < 0.05);
}

TEST_CASE("generated tensors are SPD and deterministic") {
  ScenarioConfig sc;
  sc.width = 5;
  sc.height = 4;
  sc.subjects = 3;
  for (auto model : {GenerativeModel::Swp, GenerativeModel::Cdp}) {
    const auto a = generate_dataset(sc, model, 42);
    const auto b = generate_dataset(sc, model, 42);
    CHECK(a.data.values == b.data.values);
    CHECK(a.design.x == b.design.x);
    CHECK(a.data.values.size() == 60);
    for (const auto& t : a.data.values) CHECK(is_positive_definite(t));
  }
}

TEST_CASE("drug changes mean matrices only inside the region") {
  ScenarioConfig sc;
  sc.width = 10;
  sc.height = 10;
  sc.sigma_beta = 0.0;
  const auto beta = sample_coefficients(sc.domain(), sc, 1);
  const Eigen::RowVector3d user(1, 1, 0.7), other(1, 0, 0.7);
  for (int s = 0; s < sc.domain().size(); ++s) {
    const auto a = compose(mean_cholesky(user, beta, s));
    const auto b = compose(mean_cholesky(other, beta, s));
    if (in_region(sc.domain(), 4, s)) {
      CHECK_FALSE(a == b);
    } else {
      CHECK(a == b);
    }
  }
}

TEST_CASE("scenario validation") {
  ScenarioConfig sc;
  sc.m = 2;
  CHECK_THROWS_AS(sc.validate(), InvalidDof);
  sc.m = 50;
  sc.subjects = 1;
  CHECK_THROWS_AS(sc.validate(), InvalidParams);
}
