#include <cmath>
#include <vector>

#include "doctest.h"
#include "tensorfield/errors.hpp"
#include "tensorfield/estimators.hpp"
#include "tensorfield/stats.hpp"

using namespace tensorfield;

namespace {

McmcChain empty_chain(const GridDomain& d, int components, int columns) {
  McmcChain c;
  c.domain = d;
  c.components = components;
  c.columns = columns;
  for (int k = 0; k < components; ++k) c.component_names.push_back(components == kComponents ? component_name(k) : "y");
  return c;
}

void push_draw(McmcChain& c, const Eigen::VectorXd& beta) {
  c.iterations.push_back(c.draws() + 1);
  c.beta.push_back(beta);
  c.prec_beta.push_back(1.0);
  c.prec_m.push_back(1.0);
  c.spatial.push_back({0, -1, 0, -1});
  c.log_posterior.push_back(0.0);
}

Eigen::VectorXd flatten(const CoefficientField& f, const McmcChain& c) {
  Eigen::VectorXd v(kComponents * f.domain.size() * f.columns);
  for (int k = 0; k < kComponents; ++k)
    for (int s = 0; s < f.domain.size(); ++s)
      for (int j = 0; j < f.columns; ++j) v(static_cast<Eigen::Index>(c.beta_index(k, s, j))) = f.beta[k](s, j);
  return v;
}

DesignMatrix drug_design() {
  DesignMatrix d{Eigen::MatrixXd(4, 2), {"intercept", "drug"}};
  d.x << 1, 1, 1, 1, 1, 0, 1, 0;
  return d;
}

}  // namespace

TEST_CASE("sample summaries use population SD and type-7 quantiles") {
  const std::vector<double> x{1, 2, 3, 4};
  const auto s = summarize_samples(x);
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.z == doctest::Approx(2.5 / std::sqrt(1.25)));
  CHECK(s.lower == doctest::Approx(1.075));
  CHECK(s.upper == doctest::Approx(3.925));
  CHECK_THROWS_AS(summarize_samples(std::vector<double>{}), InvalidParams);
}

TEST_CASE("constant chain scores zero MAD, full coverage, zero MCSD") {
  const GridDomain d(2, 2);
  auto truth = CoefficientField::zeros(d, 2);
  truth.beta[0](1, 1) = 0.3;
  truth.beta[4](3, 0) = -1.2;
  auto chain = empty_chain(d, kComponents, 2);
  for (int t = 0; t < 10; ++t) push_draw(chain, flatten(truth, chain));
  const auto r = score_chain(chain, truth);
  CHECK(r.overall.mad < 1e-15);
  CHECK(r.overall.coverage == 1.0);
  CHECK(r.overall.mcsd < 1e-15);
  CHECK(r.components.size() == kComponents);
  CHECK(r.overall.parameters == kComponents * 4 * 2);
}

TEST_CASE("iid normal chain around the truth") {
  const GridDomain d(3, 3);
  auto truth = CoefficientField::zeros(d, 1);
  auto chain = empty_chain(d, kComponents, 1);
  Rng rng = make_rng(50, 0);
  const int size = kComponents * 9;
  for (int t = 0; t < 10000; ++t) {
    Eigen::VectorXd v(size);
    for (auto& x : v) x = standard_normal(rng);
    push_draw(chain, v);
  }
  const auto r = score_chain(chain, truth);
  CHECK(std::abs(r.overall.mcsd - 1.0) < 0.02);
  CHECK(r.overall.mad < 0.02);
  CHECK(r.overall.coverage == 1.0);
}

TEST_CASE("coverage of truths drawn from the chain law") {
  const GridDomain d(10, 10);
  auto truth = CoefficientField::zeros(d, 1);
  Rng rng = make_rng(54, 0);
  for (auto& b : truth.beta)
    for (auto& x : b.reshaped()) x = standard_normal(rng);
  auto chain = empty_chain(d, kComponents, 1);
  for (int t = 0; t < 2000; ++t) {
    Eigen::VectorXd v(kComponents * 100);
    for (auto& x : v) x = standard_normal(rng);
    push_draw(chain, v);
  }
  const auto r = score_chain(chain, truth);
  CHECK(std::abs(r.overall.coverage - 0.95) < 0.03);
}

TEST_CASE("chain shifted away from the truth") {
  const GridDomain d(2, 1);
  auto truth = CoefficientField::zeros(d, 1);
  auto chain = empty_chain(d, kComponents, 1);
  Rng rng = make_rng(51, 0);
  for (int t = 0; t < 4000; ++t) {
    Eigen::VectorXd v(kComponents * 2);
    for (auto& x : v) x = 5.0 + 0.1 * standard_normal(rng);
    push_draw(chain, v);
  }
  const auto r = score_chain(chain, truth);
  CHECK(r.overall.mad == doctest::Approx(5.0).epsilon(0.01));
  CHECK(r.overall.coverage == 0.0);
}

TEST_CASE("scoring needs matching truth") {
  auto chain = empty_chain(GridDomain(2, 2), kComponents, 2);
  push_draw(chain, Eigen::VectorXd::Zero(kComponents * 4 * 2));
  CHECK_THROWS_AS(score_chain(chain, CoefficientField::zeros(GridDomain(3, 2), 2)), MissingTruth);
  CHECK_THROWS_AS(score_chain(chain, CoefficientField::zeros(GridDomain(2, 2), 3)), MissingTruth);
}

TEST_CASE("zero drug coefficients give zero treatment contrast") {
  const GridDomain d(2, 2);
  auto f = CoefficientField::zeros(d, 2);
  Rng rng = make_rng(52, 0);
  for (auto& b : f.beta) b.col(0) = Eigen::VectorXd::NullaryExpr(4, [&] { return 0.3 * standard_normal(rng); });
  auto chain = empty_chain(d, kComponents, 2);
  push_draw(chain, flatten(f, chain));
  push_draw(chain, flatten(f, chain));
  const auto delta = delta_fa(chain, drug_design(), 1);
  CHECK(delta.draws.rows() == 2);
  CHECK(delta.draws.cwiseAbs().maxCoeff() < 1e-15);
  for (const auto& s : delta.summary()) {
    CHECK(s.sd == 0.0);
    CHECK(s.z == 0.0);
  }
}

TEST_CASE("treatment contrast from composed mean matrices") {
  const GridDomain d(1, 1);
  auto f = CoefficientField::zeros(d, 2);
  // drug = 1: diag(e^{0.5}, 1, 1) Cholesky -> diag(e, 1, 1)
  f.beta[component_from_name("11")](0, 1) = 0.5;
  auto chain = empty_chain(d, kComponents, 2);
  push_draw(chain, flatten(f, chain));
  const double expected = fractional_anisotropy(SpdMatrix::diagonal(std::exp(1.0), 1.0, 1.0));
  const auto delta = delta_fa(chain, drug_design(), 1);
  CHECK(delta.draws(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(delta_fa(chain, drug_design(), 0), InvalidParams);
  CHECK_THROWS_AS(delta_fa(chain, drug_design(), 2), InvalidParams);
}

TEST_CASE("baseline contrast uses the inverse logit") {
  const GridDomain d(2, 1);
  auto chain = empty_chain(d, 1, 2);
  Eigen::VectorXd v(4);
  v << 0.2, 0.0, -0.4, 1.0;  // voxel 0: (0.2, 0), voxel 1: (-0.4, 1)
  push_draw(chain, v);
  const auto delta = baseline_delta_fa(chain, drug_design(), 1);
  CHECK(std::abs(delta.draws(0, 0)) < 1e-15);
  CHECK(delta.draws(0, 1) == doctest::Approx(stats::inv_logit(0.6) - stats::inv_logit(-0.4)).epsilon(1e-12));
}

TEST_CASE("summarize_chain lists coefficients and globals") {
  const GridDomain d(2, 1);
  auto chain = empty_chain(d, kComponents, 2);
  chain.column_names = {"intercept", "drug"};
  push_draw(chain, Eigen::VectorXd::Ones(kComponents * 2 * 2));
  push_draw(chain, Eigen::VectorXd::Zero(kComponents * 2 * 2));
  const auto sum = summarize_chain(chain);
  CHECK(sum.rows.size() == static_cast<std::size_t>(kComponents * 2 * 2 + 2 + kSpatialParams));
  CHECK(sum.rows.front().parameter == "beta");
  CHECK(sum.rows.front().component == "11");
  CHECK(sum.rows.front().covariate == "intercept");
  CHECK(sum.rows.front().stats.mean == 0.5);
  CHECK(sum.rows.back().parameter == "log_nu_beta");
}

TEST_CASE("baseline fit rejects degenerate FA") {
  const GridDomain d(2, 2);
  TensorField data{d, 4, std::vector<SpdMatrix>(16, SpdMatrix::identity())};
  CdpModelSpec spec;
  spec.domain = d;
  spec.design = drug_design();
  spec.q = 3;
  spec.iters = 20;
  spec.burnin = 10;
  CHECK_THROWS_AS(fit_univariate_baseline(data, spec, 1), DegenerateFA);
}

TEST_CASE("baseline fit runs end to end") {
  ScenarioConfig sc;
  sc.width = 4;
  sc.height = 4;
  sc.subjects = 6;
  const auto ds = generate_dataset(sc, GenerativeModel::Swp, 53);
  CdpModelSpec spec;
  spec.domain = ds.data.domain;
  spec.design = ds.design;
  spec.q = 5;
  spec.iters = 200;
  spec.burnin = 100;
  spec.threads = 1;
  const auto fit = fit_univariate_baseline(ds.data, spec, 1);
  CHECK(fit.chain.components == 1);
  CHECK(fit.chain.component_names.front() == "logit_fa");
  CHECK(fit.delta.draws.rows() == 100);
  CHECK(fit.delta.draws.cols() == 16);
  CHECK(fit.delta.draws.allFinite());
  CHECK(fit.delta.draws.cwiseAbs().maxCoeff() < 1.0);
}
