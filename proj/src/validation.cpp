#include "tensorfield/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <map>

#include <Eigen/LU>

#include "tensorfield/cdp.hpp"
#include "tensorfield/errors.hpp"
#include "tensorfield/estimators.hpp"
#include "tensorfield/gp.hpp"
#include "tensorfield/random.hpp"
#include "tensorfield/regression.hpp"
#include "tensorfield/stats.hpp"
#include "tensorfield/swp.hpp"

namespace tensorfield::validation {

bool SuiteReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

namespace {

double severity(const Check& c) {
  if (c.tolerance <= 0.0) return c.passed ? 0.0 : 1e300;
  return std::abs(c.observed - c.reference) / c.tolerance;
}

int scaled(int count, double effort, int floor_value = 1) {
  return std::max(floor_value, static_cast<int>(std::lround(count * effort)));
}

std::string fmt(const char* pattern, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, x);
  return buf;
}

Check tolerance_check(std::string name, double observed, double reference, double tolerance) {
  return {std::move(name), observed, reference, tolerance, std::abs(observed - reference) <= tolerance};
}

Check relative_check(std::string name, double observed, double reference, double rel) {
  return tolerance_check(std::move(name), observed, reference, rel * std::abs(reference));
}

// A p-value check reads: observed p must be >= level.
Check pvalue_check(std::string name, double p, double level) {
  return {std::move(name), p, level, 0.0, p >= level};
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// Replicate-pooled variogram bins, accumulated in batches to bound memory.
std::vector<VariogramBin> pooled_variogram(const GridDomain& domain, const SwpParams& params, std::uint64_t seed,
                                           int replicates, double max_lag) {
  SwpSimulator sim(domain, params);
  std::map<long, VariogramBin> acc;
  const int batch = 250;
  for (int start = 0; start < replicates; start += batch) {
    std::vector<MatrixField> fields;
    for (int r = start; r < std::min(replicates, start + batch); ++r) {
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));
      fields.push_back({domain, sim.draw(rng)});
    }
    for (const auto& bin : variogram_empirical(fields, max_lag)) {
      auto& a = acc[std::lround(bin.lag * 1000.0)];
      a.lag = bin.lag;
      if (bin.empty) {
        a.empty = a.n_pairs == 0;
        continue;
      }
      a.value = (a.value * a.n_pairs + bin.value * bin.n_pairs) / static_cast<double>(a.n_pairs + bin.n_pairs);
      a.n_pairs += bin.n_pairs;
      a.empty = false;
    }
  }
  std::vector<VariogramBin> out;
  for (auto& [key, bin] : acc) out.push_back(bin);
  return out;
}

std::complex<double> wishart_cf(const SymMatrix3& t, const SwpParams& p) {
  Eigen::Matrix3d half = t.dense();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j) half(i, j) *= 0.5;
    }
  }
  const Eigen::Matrix3cd a = Eigen::Matrix3cd::Identity() -
                             std::complex<double>(0.0, 2.0 / p.m) * (p.sigma.dense() * half).cast<std::complex<double>>();
  return std::exp(-0.5 * p.m * std::log(a.determinant()));
}

SymMatrix3 random_argument(Rng& rng, double norm) {
  SymMatrix3 t;
  for (double& x : t.v) x = standard_normal(rng);
  const double f = std::sqrt(frobenius_sq_diff(t, SymMatrix3::zero()));
  for (double& x : t.v) x *= norm / f;
  return t;
}

}  // namespace

const Check* SuiteReport::worst() const {
  const Check* w = nullptr;
  for (const auto& c : checks) {
    if (!c.passed) return &c;
    if (!w || severity(c) > severity(*w)) w = &c;
  }
  return w;
}

SuiteReport variogram_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"variogram", {}, 0.0};
  const GridDomain domain(20, 20);
  const SwpParams params{3, {4.0, 0.5}, SpdMatrix::identity()};
  const auto bins = pooled_variogram(domain, params, derive_seed(opts.seed, 1), scaled(5000, opts.effort), 8.0);
  report.checks.push_back(relative_check("sill", variogram_sill(params), 8.0, 1e-12));
  for (const auto& bin : bins) {
    if (bin.empty || bin.lag <= 0.0 || bin.lag > 8.0 + 1e-9) continue;
    report.checks.push_back(
        relative_check("lag " + fmt("%.3f", bin.lag), bin.value, variogram_theoretical(bin.lag, params), 0.05));
  }
  report.seconds = timer.seconds();
  return report;
}

SuiteReport separability_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"separability", {}, 0.0};
  const GridDomain domain(20, 20);
  const MaternParams kernel{4.0, 0.5};
  for (int m : {3, 6, 10}) {
    const SwpParams params{m, kernel, SpdMatrix::identity()};
    const double sill = variogram_sill(params);
    const auto bins =
        pooled_variogram(domain, params, derive_seed(opts.seed, 10 + m), scaled(2000, opts.effort), 8.0);
    for (const auto& bin : bins) {
      if (bin.empty || bin.lag <= 0.0 || bin.lag > 8.0 + 1e-9) continue;
      const double k = matern(bin.lag, kernel);
      report.checks.push_back(relative_check("m=" + std::to_string(m) + " lag " + fmt("%.3f", bin.lag),
                                             bin.value / sill, 1.0 - k * k, 0.07));
    }
  }
  report.seconds = timer.seconds();
  return report;
}

SuiteReport bartlett_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"bartlett", {}, 0.0};
  const std::vector<Location> site{{0.0, 0.0}};
  const int draws = scaled(10000, opts.effort, 100);
  for (int m : {3, 10, 50}) {
    SwpSimulator sim(site, SwpParams{m, {1.0, 0.5}, SpdMatrix::identity()});
    Rng rng = make_rng(opts.seed, 20 + static_cast<std::uint64_t>(m));
    std::array<std::vector<double>, 3> t2;
    for (int d = 0; d < draws; ++d) {
      const auto t = cholesky_lower(sim.draw(rng)[0]);
      for (int k = 0; k < 3; ++k) t2[k].push_back(t.v[tri_index(k, k)] * t.v[tri_index(k, k)]);
    }
    for (int k = 0; k < 3; ++k) {
      const auto g = oracle_diag_marginal(t2[k], k + 1, m, 1.0);
      report.checks.push_back(
          pvalue_check("m=" + std::to_string(m) + " k=" + std::to_string(k + 1) + " KS p", g.ks.p_value, 0.01));
    }
  }
  report.seconds = timer.seconds();
  return report;
}

SuiteReport cf_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"cf", {}, 0.0};
  Rng rng = make_rng(opts.seed, 30);

  const std::vector<Location> locs{{0.0, 0.0}, {1.0, 0.0}};
  const SwpParams params{3, {2.0, 0.5}, SpdMatrix::identity()};
  const std::vector<SymMatrix3> t{random_argument(rng, 0.1 / std::sqrt(2.0)),
                                  random_argument(rng, 0.1 / std::sqrt(2.0))};
  SwpSimulator sim(locs, params);
  Rng draw_rng = make_rng(opts.seed, 31);
  std::vector<std::vector<SpdMatrix>> draws;
  const int count = scaled(20000, opts.effort, 100);
  for (int k = 0; k < count; ++k) draws.push_back(sim.draw(draw_rng));
  const auto phi = characteristic_function(t, params, locs);
  const auto emp = empirical_characteristic_function(t, draws);
  report.checks.push_back(tolerance_check("two-site real part", emp.real(), phi.real(), 0.02));
  report.checks.push_back(tolerance_check("two-site imaginary part", emp.imag(), phi.imag(), 0.02));

  const std::vector<Location> site{{0.0, 0.0}};
  int index = 0;
  for (int m : {3, 4, 7, 10}) {
    const SpdMatrix sigma = SymMatrix3{{1.5, 0.3, 1.0, -0.2, 0.1, 0.8}};
    const SwpParams p{m, {1.0, 0.5}, sigma};
    const std::vector<SymMatrix3> ts{random_argument(rng, 0.2 + 0.3 * index++)};
    const auto single = characteristic_function(ts, p, site);
    const auto ref = wishart_cf(ts[0], p);
    report.checks.push_back(tolerance_check("single-site m=" + std::to_string(m), std::abs(single - ref), 0.0, 1e-8));
  }
  report.seconds = timer.seconds();
  return report;
}

SuiteReport asymptotic_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"asymptotic", {}, 0.0};
  ScenarioConfig sc;
  sc.width = 20;
  sc.height = 20;
  sc.subjects = scaled(100, opts.effort, 2);
  sc.m = 200;
  sc.sigma_beta = 0.0;
  sc.drug_effect = 0.0;
  sc.age_effect = 0.0;
  sc.residual_kernel = {2.0, 0.5};
  const auto ds = generate_dataset(sc, GenerativeModel::Swp, derive_seed(opts.seed, 40));
  const GridDomain& d = ds.data.domain;
  const double root_m = std::sqrt(static_cast<double>(sc.m));
  const double k1 = matern(1.0, sc.residual_kernel);

  for (int k = 0; k < 3; ++k) {
    std::vector<double> all, left, right;
    std::vector<double> g(static_cast<std::size_t>(d.size()));
    for (int i = 0; i < ds.data.subjects; ++i) {
      for (int s = 0; s < d.size(); ++s) {
        g[s] = root_m * std::log(cholesky_lower(ds.data.at(i, s)).v[tri_index(k, k)]);
        all.push_back(g[s]);
      }
      for (int s = 0; s < d.size(); ++s) {
        if (d.ix(s) + 1 < d.width) {
          left.push_back(g[s]);
          right.push_back(g[s + 1]);
        }
      }
    }
    const std::string tag = "k=" + std::to_string(k + 1);
    report.checks.push_back(relative_check(tag + " variance", stats::variance(all), 0.5, 0.10));
    report.checks.push_back(tolerance_check(tag + " lag-1 correlation", stats::correlation(left, right), k1 * k1, 0.03));
  }
  report.seconds = timer.seconds();
  return report;
}

SuiteReport vecchia_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"vecchia", {}, 0.0};
  Rng rng = make_rng(opts.seed, 50);
  const GridDomain grid(6, 6);
  const auto full = build_vecchia_plan(grid, grid.size() - 1);
  double worst = 0.0;
  const int draws = scaled(50, opts.effort, 5);
  for (int r = 0; r < draws; ++r) {
    const MaternParams p{0.5 + 2.5 * uniform01(rng), 0.3 + 2.2 * uniform01(rng)};
    const Kernel kernel{p, uniform01(rng) < 0.5 ? KernelForm::Matern : KernelForm::SquaredMatern};
    const double variance = 0.2 + 3.0 * uniform01(rng);
    const ScalarField mean = ScalarField::constant(grid, standard_normal(rng));
    const ScalarField field = simulate_gp(grid, mean, kernel, variance, derive_seed(opts.seed, 1000 + r));
    const double exact = exact_loglik(field, mean, kernel, variance);
    const double approx = vecchia_loglik(field, mean, kernel, variance, full);
    worst = std::max(worst, std::abs(exact - approx));
  }
  report.checks.push_back(tolerance_check("6x6 q=n-1 max |difference|", worst, 0.0, 1e-8));

  for (auto direction : {VecchiaDirection::Following, VecchiaDirection::Preceding}) {
    const GridDomain line(30, 1);
    const auto plan = build_vecchia_plan(line, 1, direction);
    double line_worst = 0.0;
    for (double rho : {0.5, 2.0, 7.0}) {
      const Kernel kernel{{rho, 0.5}, KernelForm::Matern};
      const ScalarField zero = ScalarField::constant(line, 0.0);
      const ScalarField field = simulate_gp(line, zero, kernel, 1.3, derive_seed(opts.seed, 60 + std::lround(rho * 10)));
      line_worst = std::max(line_worst, std::abs(exact_loglik(field, zero, kernel, 1.3) -
                                                 vecchia_loglik(field, zero, kernel, 1.3, plan)));
    }
    report.checks.push_back(tolerance_check(
        std::string("1D exponential q=1 ") + (direction == VecchiaDirection::Following ? "following" : "preceding"),
        line_worst, 0.0, 1e-8));
  }
  report.seconds = timer.seconds();
  return report;
}

SuiteReport recovery_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"recovery", {}, 0.0};
  const int reps = scaled(10, opts.effort, 1);
  std::vector<double> mad(kComponents, 0.0), coverage(kComponents, 0.0);
  double overall_coverage = 0.0;
  for (int r = 0; r < reps; ++r) {
    ScenarioConfig sc;
    sc.width = 8;
    sc.height = 8;
    sc.subjects = 6;
    sc.m = 50;
    const auto ds = generate_dataset(sc, GenerativeModel::Cdp, derive_seed(opts.seed, 70 + r));
    CdpModelSpec spec;
    spec.domain = ds.data.domain;
    spec.design = ds.design;
    spec.q = 10;
    spec.iters = scaled(2000, opts.effort, 100);
    spec.burnin = spec.iters / 4;
    spec.seed = derive_seed(opts.seed, 170 + r);
    spec.threads = opts.threads;
    const auto score = score_chain(fit(ds.data, spec), ds.truth);
    for (int c = 0; c < kComponents; ++c) {
      mad[c] += score.components[c].mad / reps;
      coverage[c] += score.components[c].coverage / reps;
    }
    overall_coverage += score.overall.coverage / reps;
  }
  for (int c = 0; c < kComponents; ++c) {
    report.checks.push_back({"MAD beta_" + component_name(c), mad[c], 0.2, 0.0, mad[c] < 0.2});
  }
  report.checks.push_back({"coverage", overall_coverage, 0.92, 0.07, overall_coverage >= 0.85 && overall_coverage <= 0.99});
  report.seconds = timer.seconds();
  return report;
}

SuiteReport geweke_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"geweke", {}, 0.0};
  const GridDomain domain(2, 2);
  DesignMatrix design{Eigen::MatrixXd(2, 2), {"intercept", "drug"}};
  design.x << 1, 1, 1, 0;

  ScenarioConfig sc;
  sc.width = 2;
  sc.height = 2;
  sc.subjects = 2;
  sc.region_size = 2;
  const auto seed_data = generate_dataset(sc, GenerativeModel::Cdp, derive_seed(opts.seed, 80));

  CdpModelSpec spec;
  spec.domain = domain;
  spec.design = design;
  spec.q = 3;
  spec.priors.precision_shape = 3.0;
  spec.priors.precision_rate = 3.0;
  spec.proposal.adapt = false;
  spec.threads = 1;
  SvcModel model(cdp_responses(seed_data.data, ols_scales(seed_data.data, design)), spec);

  Rng rng = make_rng(opts.seed, 81);
  std::vector<Rng> component_rngs;
  for (int c = 0; c < kComponents; ++c) component_rngs.push_back(make_rng(opts.seed, 90 + static_cast<std::uint64_t>(c)));
  std::array<double, kSpatialParams> scales{1.5, 1.5, 1.5, 1.5};
  AcceptanceCounters counters;

  ChainState s = model.sample_prior(rng);
  model.regenerate_responses(s, rng);
  const int cycles = scaled(5000, opts.effort, 100);
  const int thin = 10;
  std::vector<std::vector<double>> draws(6 + kComponents);
  for (int cycle = 0; cycle < cycles; ++cycle) {
    for (int t = 0; t < thin; ++t) {
      model.gibbs_update_beta(s, component_rngs);
      model.gibbs_update_precisions(s, rng);
      model.mh_update_spatial(s, rng, scales, counters);
      model.regenerate_responses(s, rng);
    }
    draws[0].push_back(s.prec_beta);
    draws[1].push_back(s.prec_m);
    for (int k = 0; k < kSpatialParams; ++k) draws[2 + k].push_back(s.spatial[k]);
    for (int c = 0; c < kComponents; ++c) {
      draws[6 + c].push_back(s.beta[c](c % domain.size(), c % 2) * std::sqrt(s.prec_beta / (1.0 + kCorrelationJitter)));
    }
  }

  const auto& pr = spec.priors;
  auto gamma = [&](double x) { return stats::gamma_cdf(x, pr.precision_shape, 1.0 / pr.precision_rate); };
  auto rho = [&](double x) { return stats::normal_cdf(x, pr.log_rho_mean, pr.log_rho_sd); };
  auto nu = [&](double x) { return stats::normal_cdf(x, pr.log_nu_mean, pr.log_nu_sd); };
  auto unit = [](double x) { return stats::normal_cdf(x); };
  const std::vector<std::pair<std::string, std::function<double(double)>>> targets{
      {"prec_beta", gamma},      {"prec_m", gamma}, {"log_rho_u", rho}, {"log_nu_u", nu},
      {"log_rho_beta", rho},     {"log_nu_beta", nu}};
  for (std::size_t k = 0; k < targets.size(); ++k) {
    report.checks.push_back(pvalue_check(targets[k].first + " KS p", stats::ks_test(draws[k], targets[k].second).p_value, 0.005));
  }
  for (int c = 0; c < kComponents; ++c) {
    report.checks.push_back(pvalue_check("beta_" + component_name(c) + " KS p",
                                         stats::ks_test(draws[6 + c], unit).p_value, 0.005));
  }
  report.seconds = timer.seconds();
  return report;
}

SuiteReport delta_fa_suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport report{"delta-fa", {}, 0.0};
  ScenarioConfig sc;
  sc.width = 10;
  sc.height = 10;
  sc.subjects = 10;
  const auto ds = generate_dataset(sc, GenerativeModel::Swp, derive_seed(opts.seed, 100));
  const int drug = ds.design.column("drug");

  CdpModelSpec spec;
  spec.domain = ds.data.domain;
  spec.design = ds.design;
  spec.q = 10;
  spec.iters = scaled(2000, opts.effort, 100);
  spec.burnin = spec.iters / 4;
  spec.seed = derive_seed(opts.seed, 101);
  spec.threads = opts.threads;

  const auto cdp = delta_fa(fit(ds.data, spec), ds.design, drug).summary();
  const auto base = fit_univariate_baseline(ds.data, spec, drug).delta.summary();

  std::vector<double> cdp_sd, base_sd;
  int outside = 0, quiet = 0;
  for (int s = 0; s < ds.data.domain.size(); ++s) {
    if (in_region(ds.data.domain, sc.region_size, s)) {
      cdp_sd.push_back(cdp[s].sd);
      base_sd.push_back(base[s].sd);
    } else {
      ++outside;
      if (std::abs(cdp[s].z) < 2.0) ++quiet;
    }
  }
  const double cdp_median = stats::quantile(cdp_sd, 0.5);
  const double base_median = stats::quantile(base_sd, 0.5);
  report.checks.push_back({"median SD inside S (CDP vs baseline)", cdp_median, base_median, 0.0, cdp_median < base_median});
  const double frac = static_cast<double>(quiet) / outside;
  report.checks.push_back({"fraction |z| < 2 outside S", frac, 0.9, 0.0, frac >= 0.9});
  report.seconds = timer.seconds();
  return report;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"variogram", "separability", "bartlett", "cf",      "asymptotic",
                                              "vecchia",   "recovery",     "geweke",   "delta-fa"};
  return names;
}

SuiteReport run_suite(const std::string& name, const SuiteOptions& opts) {
  static const std::map<std::string, SuiteReport (*)(const SuiteOptions&)> table{
      {"variogram", variogram_suite}, {"separability", separability_suite},
      {"bartlett", bartlett_suite},   {"cf", cf_suite},
      {"asymptotic", asymptotic_suite}, {"vecchia", vecchia_suite},
      {"recovery", recovery_suite},   {"geweke", geweke_suite},
      {"delta-fa", delta_fa_suite}};
  const auto it = table.find(name);
  if (it == table.end()) throw InvalidParams("unknown validation suite '" + name + "'");
  return it->second(opts);
}

}  // namespace tensorfield::validation
