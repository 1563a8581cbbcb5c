#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "doctest.h"
#include "tensorfield/cdp.hpp"
#include "tensorfield/errors.hpp"
#include "tensorfield/estimators.hpp"
#include "tensorfield/stats.hpp"

using namespace tensorfield;

namespace {

DesignMatrix intercept_only(int subjects) {
  return {Eigen::MatrixXd::Ones(subjects, 1), {"intercept"}};
}

CdpModelSpec spec_for(const GridDomain& d, const DesignMatrix& design, int q = 10) {
  CdpModelSpec spec;
  spec.domain = d;
  spec.design = design;
  spec.q = q;
  spec.threads = 1;
  return spec;
}

ResponseSet single_response(const Eigen::MatrixXd& z, const Eigen::MatrixXd& h) {
  ResponseSet r;
  r.components.push_back({"y", z, h});
  return r;
}

double dense_loglik(const Eigen::VectorXd& r, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::MatrixXd l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const Eigen::VectorXd w = l.triangularView<Eigen::Lower>().solve(r);
  return -0.5 * (r.size() * std::log(2 * std::numbers::pi) + logdet + w.squaredNorm());
}

Eigen::MatrixXd jittered(const GridDomain& d, const Kernel& k) {
  const auto locs = d.locations();
  Eigen::MatrixXd r = corr_matrix(locs, k);
  r.diagonal().array() += kCorrelationJitter;
  return r;
}

Dataset small_dataset(int w, int h, int subjects, std::uint64_t seed, GenerativeModel model = GenerativeModel::Cdp) {
  ScenarioConfig sc;
  sc.width = w;
  sc.height = h;
  sc.subjects = subjects;
  sc.region_size = std::min(4, std::min(w, h));
  return generate_dataset(sc, model, seed);
}

}  // namespace

TEST_CASE("OLS scales interpolate a saturated design") {
  const auto ds = small_dataset(3, 3, 2, 1);
  DesignMatrix design{Eigen::MatrixXd(2, 2), {"intercept", "drug"}};
  design.x << 1, 1, 1, 0;
  const auto scales = ols_scales(ds.data, design);
  for (int i = 0; i < 2; ++i) {
    for (int s = 0; s < 9; ++s) {
      const auto t = cholesky_lower(ds.data.at(i, s));
      for (int k = 0; k < 3; ++k) {
        CHECK(scales.values[k](i, s) == doctest::Approx(t.v[tri_index(k, k)]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("OLS scales of constant responses") {
  const GridDomain d(2, 2);
  TensorField data{d, 3, std::vector<SpdMatrix>(12, SpdMatrix::diagonal(std::exp(2 * 0.7), std::exp(2 * 0.7), std::exp(2 * 0.7)))};
  const auto scales = ols_scales(data, intercept_only(3));
  for (int k = 0; k < 3; ++k) CHECK((scales.values[k].array() - std::exp(0.7)).abs().maxCoeff() < 1e-12);
}

TEST_CASE("OLS coefficients match the normal equations") {
  const auto ds = small_dataset(4, 4, 8, 2);
  const auto b = ols_coefficients(ds.data, ds.design);
  const Eigen::MatrixXd& x = ds.design.x;
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  for (int s = 0; s < 16; ++s) {
    for (int k = 0; k < 3; ++k) {
      Eigen::VectorXd y(8);
      for (int i = 0; i < 8; ++i) y(i) = std::log(cholesky_lower(ds.data.at(i, s)).v[tri_index(k, k)]);
      const Eigen::VectorXd ref = xtx_inv * x.transpose() * y;
      CHECK((b.beta[k].row(s).transpose() - ref).cwiseAbs().maxCoeff() < 1e-10);
    }
    for (int c = 3; c < kComponents; ++c) CHECK(b.beta[c].row(s).isZero());
  }

  DesignMatrix collinear = ds.design;
  collinear.x.col(2) = 2.0 * collinear.x.col(1);
  CHECK_THROWS_AS(ols_scales(ds.data, collinear), RankDeficientDesign);
}

TEST_CASE("model spec validation") {
  auto spec = spec_for(GridDomain(3, 3), intercept_only(2));
  CHECK_NOTHROW(spec.validate());
  spec.q = 0;
  CHECK_THROWS_AS(spec.validate(), InvalidQ);
  spec.q = 3;
  spec.burnin = spec.iters;
  CHECK_THROWS_AS(spec.validate(), InvalidParams);
}

TEST_CASE("hyperprior contains the Gamma density term") {
  const GridDomain d(1, 1);
  auto spec = spec_for(d, intercept_only(2));
  SvcModel model(single_response(Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Ones(2, 1)), spec);
  ChainState s = model.initial_state();
  const double gamma_term = 0.01 * std::log(0.01) - std::lgamma(0.01) + (0.01 - 1) * 0.0 - 0.01;
  CHECK(stats::gamma_log_density(1.0, 0.01, 0.01) == doctest::Approx(gamma_term).epsilon(1e-13));
  const double normals = stats::normal_log_density(0.0, 0.0, 1.0) * 2 + stats::normal_log_density(-1.0, -1.0, 1.0) * 2;
  CHECK(model.log_hyperprior(s) == doctest::Approx(2 * gamma_term + normals).epsilon(1e-13));
}

TEST_CASE("single-voxel likelihood is a sum of normal densities") {
  const GridDomain d(1, 1);
  const auto design = intercept_only(3);
  Eigen::MatrixXd z(3, 1), h(3, 1);
  z << 0.3, -1.2, 0.8;
  h << 1.0, 2.0, 0.5;
  auto spec = spec_for(d, design);
  SvcModel model(single_response(z, h), spec);
  ChainState s = model.initial_state();
  s.beta[0](0, 0) = 0.4;
  s.prec_m = 2.5;
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    expected += stats::normal_log_density(z(i), h(i) * 0.4, std::sqrt((1 + kCorrelationJitter) / 2.5));
  }
  CHECK(model.log_likelihood(s) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log posterior matches a dense evaluation on a 3x3 grid") {
  const auto ds = small_dataset(3, 3, 4, 3);
  const GridDomain d = ds.data.domain;
  auto spec = spec_for(d, ds.design, 8);
  const auto scales = ols_scales(ds.data, ds.design);
  ChainState s;
  Rng rng = make_rng(30, 0);
  for (int c = 0; c < kComponents; ++c) {
    Eigen::MatrixXd b(9, 3);
    for (auto& v : b.reshaped()) v = 0.2 * standard_normal(rng);
    s.beta.push_back(b);
  }
  s.prec_beta = 3.0;
  s.prec_m = 40.0;
  s.spatial = {0.4, -0.7, 0.9, -0.2};

  const Eigen::MatrixXd c = jittered(d, s.residual_kernel());
  const Eigen::MatrixXd k = jittered(d, s.beta_kernel());
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int comp = 0; comp < kComponents; ++comp) {
      Eigen::VectorXd y(9), mean(9), scale = Eigen::VectorXd::Ones(9);
      for (int loc = 0; loc < 9; ++loc) {
        const auto t = cholesky_lower(ds.data.at(i, loc));
        const double eta = ds.design.x.row(i).dot(s.beta[comp].row(loc));
        if (is_diagonal_component(comp)) {
          y(loc) = std::sqrt(2.0) * std::log(t.v[component_slot(comp)]);
          mean(loc) = std::sqrt(2.0) * eta;
        } else {
          y(loc) = t.v[component_slot(comp)];
          mean(loc) = eta;
          scale(loc) = scales.values[row_diagonal_component(comp)](i, loc);
        }
      }
      const Eigen::MatrixXd cov = scale.asDiagonal() * c * scale.asDiagonal() / s.prec_m;
      expected += dense_loglik(y - mean, cov);
    }
  }
  for (int comp = 0; comp < kComponents; ++comp) {
    for (int j = 0; j < 3; ++j) expected += dense_loglik(s.beta[comp].col(j), k / s.prec_beta);
  }
  expected += stats::gamma_log_density(3.0, 0.01, 0.01) + stats::gamma_log_density(40.0, 0.01, 0.01);
  expected += stats::normal_log_density(0.4, 0, 1) + stats::normal_log_density(-0.7, -1, 1);
  expected += stats::normal_log_density(0.9, 0, 1) + stats::normal_log_density(-0.2, -1, 1);

  CHECK(std::abs(log_posterior(s, ds.data, scales, spec) - expected) < 1e-8);
}

TEST_CASE("coefficient conditional in the scalar conjugate case") {
  const GridDomain d(1, 1);
  const auto design = intercept_only(4);
  Eigen::MatrixXd z(4, 1), h(4, 1);
  z << 1.1, 0.4, 0.9, 1.6;
  h << 1.0, 1.5, 0.7, 1.2;
  SvcModel model(single_response(z, h), spec_for(d, design));
  ChainState s = model.initial_state();
  s.prec_m = 3.0;
  s.prec_beta = 0.5;
  const double v = 1 + kCorrelationJitter;
  const double post_prec = s.prec_m / v * h.squaredNorm() + s.prec_beta / v;
  const double post_mean = s.prec_m / v * h.col(0).dot(z.col(0)) / post_prec;
  const auto cond = model.beta_conditional(s, 0);
  CHECK(std::abs(cond.mean(0) - post_mean) < 1e-8);
  CHECK(std::abs(Eigen::MatrixXd(cond.precision)(0, 0) - post_prec) < 1e-8);

  // Gibbs draws from that conditional keep the exact law.
  std::vector<Rng> rngs{make_rng(31, 0)};
  std::vector<double> u;
  for (int k = 0; k < 5000; ++k) {
    model.gibbs_update_beta(s, rngs);
    u.push_back((s.beta[0](0, 0) - post_mean) * std::sqrt(post_prec));
  }
  CHECK(stats::ks_test(u, [](double x) { return stats::normal_cdf(x); }).p_value > 0.01);
}

TEST_CASE("uninformative likelihood returns the coefficient prior") {
  const GridDomain d(2, 2);
  const auto design = intercept_only(3);
  Rng data_rng = make_rng(32, 0);
  Eigen::MatrixXd z(3, 4);
  for (auto& v : z.reshaped()) v = standard_normal(data_rng);
  SvcModel model(single_response(z, Eigen::MatrixXd::Ones(3, 4)), spec_for(d, design));
  ChainState s = model.initial_state();
  s.prec_m = 1e-12;
  s.prec_beta = 4.0;
  std::vector<Rng> rngs{make_rng(33, 0)};
  std::vector<double> b;
  for (int k = 0; k < 5000; ++k) {
    model.gibbs_update_beta(s, rngs);
    b.push_back(s.beta[0](2, 0));
  }
  CHECK(std::abs(stats::variance(b) / 0.25 - 1.0) < 0.1);
}

TEST_CASE("degenerate coefficient prior collapses the draws") {
  const auto ds = small_dataset(3, 3, 4, 4);
  auto spec = spec_for(ds.data.domain, ds.design, 4);
  SvcModel model(cdp_responses(ds.data, ols_scales(ds.data, ds.design)), spec);
  ChainState s = model.initial_state();
  s.prec_m = 50.0;
  s.prec_beta = 1e14;
  std::vector<Rng> rngs;
  for (int c = 0; c < kComponents; ++c) rngs.push_back(make_rng(34, c));
  model.gibbs_update_beta(s, rngs);
  for (const auto& b : s.beta) CHECK(b.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("precision draws with zero residuals") {
  const GridDomain d(2, 2);
  const auto design = intercept_only(2);
  SvcModel model(single_response(Eigen::MatrixXd::Zero(2, 4), Eigen::MatrixXd::Ones(2, 4)), spec_for(d, design));
  ChainState s = model.initial_state();
  Rng rng = make_rng(35, 0);
  std::vector<double> pm;
  for (int k = 0; k < 20000; ++k) {
    model.gibbs_update_precisions(s, rng);
    CHECK(s.prec_m > 0.0);
    CHECK(s.prec_beta > 0.0);
    pm.push_back(s.prec_m);
    s.prec_m = 1.0;  // keeps the zero residuals exactly zero
  }
  // shape 0.01 + 8/2, rate 0.01
  CHECK(stats::mean(pm) == doctest::Approx(4.01 / 0.01).epsilon(0.03));
}

TEST_CASE("precision draws track a known sum of squares") {
  const GridDomain d(1, 1);
  const auto design = intercept_only(5);
  Eigen::MatrixXd z(5, 1);
  z << 0.5, -1.0, 2.0, 0.25, -0.75;
  SvcModel model(single_response(z, Eigen::MatrixXd::Ones(5, 1)), spec_for(d, design));
  ChainState s = model.initial_state();
  const double q = z.squaredNorm() / (1 + kCorrelationJitter);
  Rng rng = make_rng(36, 0);
  std::vector<double> pm, pb;
  for (int k = 0; k < 20000; ++k) {
    model.gibbs_update_precisions(s, rng);
    pm.push_back(s.prec_m);
    pb.push_back(s.prec_beta);
  }
  CHECK(std::abs(stats::mean(pm) / ((0.01 + 2.5) / (0.01 + q / 2)) - 1.0) < 0.02);
  CHECK(std::abs(stats::mean(pb) / ((0.01 + 0.5) / 0.01) - 1.0) < 0.03);
}

TEST_CASE("Metropolis with the data term disabled samples the prior") {
  const GridDomain d(2, 2);
  auto spec = spec_for(d, intercept_only(2));
  spec.use_likelihood = false;
  spec.fixed = {false, false, true, true};
  SvcModel model(single_response(Eigen::MatrixXd::Zero(2, 4), Eigen::MatrixXd::Ones(2, 4)), spec);
  ChainState s = model.initial_state();
  std::array<double, kSpatialParams> scales{1.0, 1.0, 1.0, 1.0};
  AcceptanceCounters counters;
  Rng rng = make_rng(37, 0);
  for (int it = 1; it <= 2000; ++it) model.mh_update_spatial(s, rng, scales, counters, it);
  std::vector<double> rho, nu;
  for (int k = 0; k < 20000; ++k) {
    for (int t = 0; t < 5; ++t) model.mh_update_spatial(s, rng, scales, counters);
    rho.push_back(s.spatial[kLogRhoU]);
    nu.push_back(s.spatial[kLogNuU]);
  }
  CHECK(stats::ks_test(rho, [](double x) { return stats::normal_cdf(x); }).p_value > 0.01);
  CHECK(stats::ks_test(nu, [](double x) { return stats::normal_cdf(x, -1.0, 1.0); }).p_value > 0.01);
  CHECK(s.spatial[kLogRhoBeta] == 0.0);
  CHECK(counters.proposed[kLogRhoBeta] == 0);
}

TEST_CASE("adaptation moves the acceptance rate toward the target") {
  const GridDomain d(2, 2);
  auto spec = spec_for(d, intercept_only(2));
  spec.use_likelihood = false;
  SvcModel model(single_response(Eigen::MatrixXd::Zero(2, 4), Eigen::MatrixXd::Ones(2, 4)), spec);
  ChainState s = model.initial_state();
  std::array<double, kSpatialParams> scales{20.0, 20.0, 0.01, 0.01};
  AcceptanceCounters burn;
  Rng rng = make_rng(38, 0);
  for (int it = 1; it <= 3000; ++it) model.mh_update_spatial(s, rng, scales, burn, it);
  AcceptanceCounters after;
  for (int it = 0; it < 3000; ++it) model.mh_update_spatial(s, rng, scales, after);
  for (int k = 0; k < kSpatialParams; ++k) {
    CHECK(after.rate(k) > 0.25);
    CHECK(after.rate(k) < 0.55);
  }
}

TEST_CASE("zero proposal scale never moves") {
  const auto ds = small_dataset(3, 3, 3, 5);
  auto spec = spec_for(ds.data.domain, ds.design, 3);
  SvcModel model(cdp_responses(ds.data, ols_scales(ds.data, ds.design)), spec);
  ChainState s = model.initial_state();
  const auto before = s.spatial;
  std::array<double, kSpatialParams> scales{0, 0, 0, 0};
  AcceptanceCounters counters;
  Rng rng = make_rng(39, 0);
  for (int k = 0; k < 50; ++k) model.mh_update_spatial(s, rng, scales, counters, k + 1);
  CHECK(s.spatial == before);
  CHECK(scales == std::array<double, kSpatialParams>{0, 0, 0, 0});
}

TEST_CASE("Metropolis ratios are antisymmetric") {
  const auto ds = small_dataset(3, 3, 3, 6);
  auto spec = spec_for(ds.data.domain, ds.design, 4);
  SvcModel model(cdp_responses(ds.data, ols_scales(ds.data, ds.design)), spec);
  ChainState x = model.initial_state(ols_coefficients(ds.data, ds.design));
  x.prec_m = 30.0;
  for (int k = 0; k < kSpatialParams; ++k) {
    ChainState y = x;
    y.spatial[k] += 0.37;
    const double fwd = model.mh_log_ratio(x, k, y.spatial[k]);
    const double back = model.mh_log_ratio(y, k, x.spatial[k]);
    CHECK(fwd + back == doctest::Approx(0.0).epsilon(1e-9));
    const double delta = model.log_posterior(y) - model.log_posterior(x);
    CHECK(fwd == doctest::Approx(delta).epsilon(1e-9));
    const double a_fwd = std::min(1.0, std::exp(fwd)), a_back = std::min(1.0, std::exp(back));
    CHECK(a_fwd / a_back == doctest::Approx(std::exp(delta)).epsilon(1e-9));
  }
}

TEST_CASE("vecchia joint draws have the implied covariance") {
  const GridDomain d(3, 2);
  const auto plan = build_vecchia_plan(d, 5);
  const auto f = factorize(plan, {{1.5, 0.5}});
  Rng rng = make_rng(40, 0);
  std::vector<double> a, b;
  for (int k = 0; k < 20000; ++k) {
    const auto w = sample_vecchia(plan, f, rng);
    a.push_back(w(0));
    b.push_back(w(4));
  }
  CHECK(std::abs(stats::variance(a) - 1.0) < 0.04);
  CHECK(std::abs(stats::correlation(a, b) - matern(std::sqrt(2.0), {1.5, 0.5})) < 0.03);
}

TEST_CASE("fits are reproducible by seed") {
  const auto ds = small_dataset(4, 4, 4, 7);
  auto spec = spec_for(ds.data.domain, ds.design, 5);
  spec.iters = 60;
  spec.burnin = 20;
  spec.thin = 2;
  const auto a = fit(ds.data, spec);
  const auto b = fit(ds.data, spec);
  CHECK(a.draws() == 20);
  CHECK(a.iterations.front() == 22);
  for (int t = 0; t < a.draws(); ++t) {
    CHECK(a.beta[t] == b.beta[t]);
    CHECK(a.prec_m[t] == b.prec_m[t]);
    CHECK(a.spatial[t] == b.spatial[t]);
    CHECK(std::isfinite(a.log_posterior[t]));
  }
  spec.threads = 3;
  const auto c = fit(ds.data, spec);
  CHECK(c.beta.back() == a.beta.back());
}

TEST_CASE("scaled-down recovery of coefficients and the residual precision") {
  ScenarioConfig sc;
  sc.width = 8;
  sc.height = 8;
  sc.subjects = 6;
  const auto ds = generate_dataset(sc, GenerativeModel::Cdp, 8);
  auto spec = spec_for(ds.data.domain, ds.design, 10);
  spec.iters = 2000;
  spec.burnin = 500;
  const auto chain = fit(ds.data, spec);
  const auto score = score_chain(chain, ds.truth);
  MESSAGE("MAD " << score.overall.mad << " coverage " << score.overall.coverage);
  CHECK(score.overall.mad < 0.2);
  const double pm = stats::mean(chain.prec_m);
  CHECK(pm > 30.0);
  CHECK(pm < 80.0);
}

TEST_CASE("Vecchia neighbor budget barely moves the posterior means") {
  ScenarioConfig sc;
  sc.width = 5;
  sc.height = 5;
  sc.subjects = 6;
  const auto ds = generate_dataset(sc, GenerativeModel::Cdp, 9);
  auto exact = spec_for(ds.data.domain, ds.design, 24);
  exact.iters = 1500;
  exact.burnin = 500;
  auto approx = exact;
  approx.q = 10;
  const auto a = score_chain(fit(ds.data, exact), ds.truth);
  const auto b = score_chain(fit(ds.data, approx), ds.truth);
  CHECK(std::abs(a.overall.mad - b.overall.mad) < 0.05);
}
