#include "tensorfield/cdp.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

#include <Eigen/QR>
#include <Eigen/SparseCholesky>

#include "tensorfield/errors.hpp"
#include "tensorfield/stats.hpp"

namespace tensorfield {

namespace {

std::vector<LowerTriangular> cholesky_all(const TensorField& data) {
  std::vector<LowerTriangular> out;
  out.reserve(data.values.size());
  for (std::size_t k = 0; k < data.values.size(); ++k) {
    try {
      out.push_back(cholesky_lower(data.values[k]));
    } catch (const NotPositiveDefinite&) {
      const int n = data.domain.size();
      throw NotPositiveDefinite("tensor of subject " + std::to_string(k / n) + " at voxel " +
                                std::to_string(k % n) + " is not SPD");
    }
  }
  return out;
}

void check_design(const TensorField& data, const DesignMatrix& design) {
  if (design.subjects() != data.subjects) {
    throw DimensionMismatch("design has " + std::to_string(design.subjects()) + " rows for " +
                            std::to_string(data.subjects) + " subjects");
  }
  if (data.values.size() != static_cast<std::size_t>(data.subjects) * data.domain.size()) {
    throw DimensionMismatch("tensor field size does not match subjects x voxels");
  }
  design.validate();
}

}  // namespace

CoefficientField ols_coefficients(const TensorField& data, const DesignMatrix& design) {
  check_design(data, design);
  const int n = data.domain.size();
  const int subjects = data.subjects;
  const auto chol = cholesky_all(data);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.x);
  auto out = CoefficientField::zeros(data.domain, design.columns());
  for (int k = 0; k < 3; ++k) {
    Eigen::MatrixXd y(subjects, n);
    for (int i = 0; i < subjects; ++i) {
      for (int s = 0; s < n; ++s) {
        y(i, s) = std::log(chol[static_cast<std::size_t>(i) * n + s].v[tri_index(k, k)]);
      }
    }
    out.beta[k] = qr.solve(y).transpose();
  }
  return out;
}

OlsScaleField ols_scales(const TensorField& data, const DesignMatrix& design) {
  const CoefficientField b = ols_coefficients(data, design);
  OlsScaleField out;
  out.domain = data.domain;
  out.subjects = data.subjects;
  for (int k = 0; k < 3; ++k) {
    out.values[k] = (design.x * b.beta[k].transpose()).array().exp().matrix();
  }
  return out;
}

std::string spatial_param_name(int k) {
  static const char* names[] = {"log_rho_u", "log_nu_u", "log_rho_beta", "log_nu_beta"};
  return names[k];
}

void CdpModelSpec::validate() const {
  design.validate();
  if (domain.size() < 1) throw InvalidParams("empty domain");
  if (q < 1) throw InvalidQ("q must be >= 1, got " + std::to_string(q));
  if (burnin < 0 || iters <= burnin) throw InvalidParams("iters must exceed burnin");
  if (thin < 1) throw InvalidParams("thin must be >= 1");
  if (!(priors.precision_shape > 0.0) || !(priors.precision_rate > 0.0)) {
    throw InvalidParams("precision prior shape and rate must be positive");
  }
  if (!(priors.log_rho_sd > 0.0) || !(priors.log_nu_sd > 0.0)) throw InvalidParams("prior sd must be positive");
  for (double s : proposal.scales) {
    if (!(s >= 0.0)) throw InvalidParams("proposal scales must be >= 0");
  }
  if (!(proposal.target_acceptance > 0.0 && proposal.target_acceptance < 1.0)) {
    throw InvalidParams("target acceptance must lie in (0, 1)");
  }
}

ResponseSet cdp_responses(const TensorField& data, const OlsScaleField& scales) {
  const int n = data.domain.size();
  const int subjects = data.subjects;
  if (!(scales.domain == data.domain) || scales.subjects != subjects) {
    throw DimensionMismatch("scales do not match the tensor field");
  }
  const auto chol = cholesky_all(data);
  ResponseSet out;
  for (int c = 0; c < kComponents; ++c) {
    ResponseComponent rc;
    rc.name = component_name(c);
    rc.z.resize(subjects, n);
    rc.h.resize(subjects, n);
    const int k = row_diagonal_component(c);
    for (int i = 0; i < subjects; ++i) {
      for (int s = 0; s < n; ++s) {
        const double t = chol[static_cast<std::size_t>(i) * n + s].v[component_slot(c)];
        if (is_diagonal_component(c)) {
          rc.z(i, s) = std::numbers::sqrt2 * std::log(t);
          rc.h(i, s) = std::numbers::sqrt2;
        } else {
          const double tbar = scales.values[k](i, s);
          if (!(tbar > 0.0)) throw NonpositiveScale("scale must be positive");
          rc.z(i, s) = t / tbar;
          rc.h(i, s) = 1.0 / tbar;
          out.log_jacobian -= std::log(tbar);
        }
      }
    }
    out.components.push_back(std::move(rc));
  }
  return out;
}

Kernel ChainState::residual_kernel() const {
  return {{std::exp(spatial[kLogRhoU]), std::exp(spatial[kLogNuU])}, KernelForm::SquaredMatern};
}

Kernel ChainState::beta_kernel() const {
  return {{std::exp(spatial[kLogRhoBeta]), std::exp(spatial[kLogNuBeta])}, KernelForm::Matern};
}

SvcModel::SvcModel(ResponseSet responses, const CdpModelSpec& spec)
    : responses_(std::move(responses)),
      design_(spec.design.x),
      priors_(spec.priors),
      fixed_(spec.fixed),
      use_likelihood_(spec.use_likelihood),
      threads_(spec.threads),
      target_(spec.proposal.target_acceptance),
      initial_spatial_(spec.initial_spatial) {
  const int n = spec.domain.size();
  if (responses_.components.empty()) throw DimensionMismatch("no response components");
  for (const auto& rc : responses_.components) {
    if (rc.z.rows() != design_.rows() || rc.z.cols() != n || rc.h.rows() != rc.z.rows() ||
        rc.h.cols() != rc.z.cols()) {
      throw DimensionMismatch("response " + rc.name + " is not subjects x voxels");
    }
  }
  plan_ = build_vecchia_plan(spec.domain, std::min(spec.q, n - 1), spec.direction);
}

ChainState SvcModel::initial_state(const std::optional<CoefficientField>& start) const {
  ChainState s;
  s.spatial = initial_spatial_;
  for (int c = 0; c < components(); ++c) {
    if (start && c < kComponents) {
      s.beta.push_back(start->beta[c]);
    } else {
      s.beta.push_back(Eigen::MatrixXd::Zero(locations(), columns()));
    }
  }
  return s;
}

double SvcModel::component_quadratic(const ChainState& s, int c, const VecchiaFactors& f) const {
  const auto& rc = responses_.components[c];
  const Eigen::MatrixXd r = rc.z - rc.h.cwiseProduct(design_ * s.beta[c].transpose());
  double q = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) q += f.quadratic(plan_, r.row(i).transpose());
  return q;
}

double SvcModel::component_loglik(const ChainState& s, int c, const VecchiaFactors& f) const {
  const double quad = component_quadratic(s, c, f);
  const int n = locations();
  return subjects() * gaussian_loglik(n, 1.0 / s.prec_m, f.log_det, 0.0) - 0.5 * s.prec_m * quad;
}

double SvcModel::log_likelihood(const ChainState& s) {
  if (!use_likelihood_) return 0.0;
  const VecchiaFactors& f = residual_cache_.get(plan_, s.residual_kernel());
  double total = responses_.log_jacobian;
  for (int c = 0; c < components(); ++c) total += component_loglik(s, c, f);
  return total;
}

double SvcModel::log_beta_prior(const ChainState& s) {
  const VecchiaFactors& f = beta_cache_.get(plan_, s.beta_kernel());
  double total = 0.0;
  for (const auto& b : s.beta) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      total += gaussian_loglik(locations(), 1.0 / s.prec_beta, f.log_det, f.quadratic(plan_, b.col(j)));
    }
  }
  return total;
}

double SvcModel::log_hyperprior(const ChainState& s) const {
  double total = stats::gamma_log_density(s.prec_beta, priors_.precision_shape, priors_.precision_rate) +
                 stats::gamma_log_density(s.prec_m, priors_.precision_shape, priors_.precision_rate);
  total += stats::normal_log_density(s.spatial[kLogRhoU], priors_.log_rho_mean, priors_.log_rho_sd);
  total += stats::normal_log_density(s.spatial[kLogNuU], priors_.log_nu_mean, priors_.log_nu_sd);
  total += stats::normal_log_density(s.spatial[kLogRhoBeta], priors_.log_rho_mean, priors_.log_rho_sd);
  total += stats::normal_log_density(s.spatial[kLogNuBeta], priors_.log_nu_mean, priors_.log_nu_sd);
  return total;
}

double SvcModel::log_posterior(const ChainState& s) {
  const double lp = log_likelihood(s) + log_beta_prior(s) + log_hyperprior(s);
  if (!std::isfinite(lp)) throw NonFiniteLikelihood("log posterior is not finite");
  return lp;
}

namespace {

struct LinearSystem {
  Eigen::SparseMatrix<double> precision;
  Eigen::VectorXd rhs;
};

LinearSystem beta_system(const ResponseComponent& rc, const Eigen::MatrixXd& x, const ChainState& s,
                         const Eigen::SparseMatrix<double>* qc, const Eigen::SparseMatrix<double>& qk) {
  const int n = static_cast<int>(qk.rows());
  const int p = static_cast<int>(x.cols());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(qk.nonZeros()) * p + (qc ? static_cast<std::size_t>(qc->nonZeros()) * p * p : 0));
  for (int k = 0; k < qk.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(qk, k); it; ++it) {
      for (int j = 0; j < p; ++j) {
        trips.emplace_back(static_cast<int>(it.row()) * p + j, static_cast<int>(it.col()) * p + j,
                           s.prec_beta * it.value());
      }
    }
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * p);
  if (qc) {
    for (int k = 0; k < qc->outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(*qc, k); it; ++it) {
        const auto a = it.row(), b = it.col();
        const Eigen::VectorXd w = rc.h.col(a).cwiseProduct(rc.h.col(b));
        const Eigen::MatrixXd m = x.transpose() * w.asDiagonal() * x;
        const double scale = s.prec_m * it.value();
        for (int j = 0; j < p; ++j) {
          for (int l = 0; l < p; ++l) {
            trips.emplace_back(static_cast<int>(a) * p + j, static_cast<int>(b) * p + l, scale * m(j, l));
          }
        }
      }
    }
    const Eigen::MatrixXd v = (rc.z * (*qc)).cwiseProduct(rc.h);  // N x n
    const Eigen::MatrixXd b = s.prec_m * v.transpose() * x;     // n x p
    for (int loc = 0; loc < n; ++loc) rhs.segment(static_cast<Eigen::Index>(loc) * p, p) = b.row(loc).transpose();
  }
  LinearSystem sys;
  sys.precision.resize(static_cast<Eigen::Index>(n) * p, static_cast<Eigen::Index>(n) * p);
  sys.precision.setFromTriplets(trips.begin(), trips.end());
  sys.rhs = std::move(rhs);
  return sys;
}

using Llt = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>;

void factor_or_throw(Llt& llt, const Eigen::SparseMatrix<double>& p) {
  llt.compute(p);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("coefficient full-conditional precision is not PD");
}

template <class F>
void parallel_for(int count, int threads, F&& body) {
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int c = 0; c < count; ++c) body(c);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int c = w; c < count; c += workers) {
        try {
          body(c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

BetaConditional SvcModel::beta_conditional(const ChainState& s, int component) {
  const auto qk = beta_cache_.get(plan_, s.beta_kernel()).precision(plan_);
  Eigen::SparseMatrix<double> qc;
  if (use_likelihood_) qc = residual_cache_.get(plan_, s.residual_kernel()).precision(plan_);
  LinearSystem sys = beta_system(responses_.components[component], design_, s, use_likelihood_ ? &qc : nullptr, qk);
  Llt llt;
  factor_or_throw(llt, sys.precision);
  return {llt.solve(sys.rhs), std::move(sys.precision)};
}

void SvcModel::gibbs_update_beta(ChainState& s, std::vector<Rng>& rngs) {
  if (static_cast<int>(rngs.size()) < components()) throw DimensionMismatch("one generator per component required");
  const auto qk = beta_cache_.get(plan_, s.beta_kernel()).precision(plan_);
  Eigen::SparseMatrix<double> qc;
  if (use_likelihood_) qc = residual_cache_.get(plan_, s.residual_kernel()).precision(plan_);
  const int n = locations(), p = columns();
  parallel_for(components(), threads_, [&](int c) {
    const LinearSystem sys =
        beta_system(responses_.components[c], design_, s, use_likelihood_ ? &qc : nullptr, qk);
    Llt llt;
    factor_or_throw(llt, sys.precision);
    Eigen::VectorXd eps(sys.rhs.size());
    for (Eigen::Index k = 0; k < eps.size(); ++k) eps(k) = standard_normal(rngs[c]);
    const Eigen::VectorXd noise = llt.matrixU().solve(eps);
    const Eigen::VectorXd draw = llt.solve(sys.rhs) + llt.permutationPinv() * noise;
    for (int loc = 0; loc < n; ++loc) {
      for (int j = 0; j < p; ++j) s.beta[c](loc, j) = draw(static_cast<Eigen::Index>(loc) * p + j);
    }
  });
}

void SvcModel::gibbs_update_precisions(ChainState& s, Rng& rng) {
  const int n = locations(), p = columns();
  const VecchiaFactors& fk = beta_cache_.get(plan_, s.beta_kernel());
  double quad_beta = 0.0;
  for (const auto& b : s.beta) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) quad_beta += fk.quadratic(plan_, b.col(j));
  }
  const double count_beta = static_cast<double>(components()) * p * n;
  s.prec_beta = gamma_draw(rng, priors_.precision_shape + 0.5 * count_beta, priors_.precision_rate + 0.5 * quad_beta);

  double quad_m = 0.0, count_m = 0.0;
  if (use_likelihood_) {
    const VecchiaFactors& fc = residual_cache_.get(plan_, s.residual_kernel());
    for (int c = 0; c < components(); ++c) quad_m += component_quadratic(s, c, fc);
    count_m = static_cast<double>(components()) * subjects() * n;
  }
  s.prec_m = gamma_draw(rng, priors_.precision_shape + 0.5 * count_m, priors_.precision_rate + 0.5 * quad_m);
}

double SvcModel::mh_log_ratio(const ChainState& s, int k, double value) {
  ChainState t = s;
  t.spatial[k] = value;
  const bool residual = k == kLogRhoU || k == kLogNuU;
  const double before = residual ? log_likelihood(s) : log_beta_prior(s);
  const double after = residual ? log_likelihood(t) : log_beta_prior(t);
  return after - before + log_hyperprior(t) - log_hyperprior(s);
}

void SvcModel::mh_update_spatial(ChainState& s, Rng& rng, std::array<double, kSpatialParams>& scales,
                                 AcceptanceCounters& counters, int adapt_step) {
  std::optional<double> current_lik, current_prior;
  for (int k = 0; k < kSpatialParams; ++k) {
    if (fixed_[k] || !(scales[k] > 0.0)) continue;
    const bool residual = k == kLogRhoU || k == kLogNuU;
    auto& current = residual ? current_lik : current_prior;
    if (!current) current = residual ? log_likelihood(s) : log_beta_prior(s);

    ChainState t = s;
    t.spatial[k] = s.spatial[k] + scales[k] * standard_normal(rng);
    double proposed_part = -std::numeric_limits<double>::infinity();
    try {
      proposed_part = residual ? log_likelihood(t) : log_beta_prior(t);
    } catch (const Error&) {
    }
    double log_alpha = proposed_part - *current + log_hyperprior(t) - log_hyperprior(s);
    if (std::isnan(log_alpha)) log_alpha = -std::numeric_limits<double>::infinity();
    counters.proposed[k] += 1;
    if (std::log(uniform01(rng)) < log_alpha) {
      s.spatial[k] = t.spatial[k];
      current = proposed_part;
      counters.accepted[k] += 1;
    }
    if (adapt_step > 0) {
      const double accept_prob = std::min(1.0, std::exp(log_alpha));
      scales[k] *= std::exp((accept_prob - target_) * std::pow(static_cast<double>(adapt_step), -0.6));
    }
  }
}

Eigen::VectorXd sample_vecchia(const VecchiaPlan& plan, const VecchiaFactors& f, Rng& rng) {
  const int n = plan.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  const auto& order = plan.ordering();
  const bool reverse = plan.direction() == VecchiaDirection::Following;
  for (int step = 0; step < n; ++step) {
    const int loc = order[reverse ? n - 1 - step : step];
    const auto& nb = plan.neighbors(loc);
    double mean = 0.0;
    for (std::size_t a = 0; a < nb.size(); ++a) mean += f.weights[loc](static_cast<Eigen::Index>(a)) * w(nb[a]);
    w(loc) = mean + std::sqrt(f.cond_var(loc)) * standard_normal(rng);
  }
  return w;
}

ChainState SvcModel::sample_prior(Rng& rng) {
  ChainState s = initial_state();
  for (int k = 0; k < kSpatialParams; ++k) {
    if (fixed_[k]) continue;
    const bool rho = k == kLogRhoU || k == kLogRhoBeta;
    s.spatial[k] = rho ? priors_.log_rho_mean + priors_.log_rho_sd * standard_normal(rng)
                       : priors_.log_nu_mean + priors_.log_nu_sd * standard_normal(rng);
  }
  s.prec_beta = gamma_draw(rng, priors_.precision_shape, priors_.precision_rate);
  s.prec_m = gamma_draw(rng, priors_.precision_shape, priors_.precision_rate);
  const VecchiaFactors& fk = beta_cache_.get(plan_, s.beta_kernel());
  const double sd = 1.0 / std::sqrt(s.prec_beta);
  for (auto& b : s.beta) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) b.col(j) = sd * sample_vecchia(plan_, fk, rng);
  }
  return s;
}

void SvcModel::regenerate_responses(const ChainState& s, Rng& rng) {
  const VecchiaFactors& fc = residual_cache_.get(plan_, s.residual_kernel());
  const double sd = 1.0 / std::sqrt(s.prec_m);
  for (int c = 0; c < components(); ++c) {
    auto& rc = responses_.components[c];
    const Eigen::MatrixXd mean = rc.h.cwiseProduct(design_ * s.beta[c].transpose());
    for (Eigen::Index i = 0; i < rc.z.rows(); ++i) {
      rc.z.row(i) = mean.row(i) + sd * sample_vecchia(plan_, fc, rng).transpose();
    }
  }
}

CoefficientField McmcChain::coefficients(int t) const {
  if (components != kComponents) throw DimensionMismatch("chain does not hold six components");
  auto f = CoefficientField::zeros(domain, columns);
  for (int c = 0; c < components; ++c) {
    for (int s = 0; s < domain.size(); ++s) {
      for (int j = 0; j < columns; ++j) f.beta[c](s, j) = beta_at(t, c, s, j);
    }
  }
  return f;
}

McmcChain run_chain(SvcModel& model, const CdpModelSpec& spec, const ChainState& start) {
  spec.validate();
  const int n = model.locations(), p = model.columns(), cc = model.components();
  McmcChain chain;
  chain.domain = spec.domain;
  chain.components = cc;
  chain.columns = p;
  for (const auto& rc : model.responses().components) chain.component_names.push_back(rc.name);
  chain.column_names = spec.design.names;
  chain.seed = spec.seed;

  Rng rng = make_rng(spec.seed, 0);
  std::vector<Rng> component_rngs;
  for (int c = 0; c < cc; ++c) component_rngs.push_back(make_rng(spec.seed, 10 + static_cast<std::uint64_t>(c)));
  auto scales = spec.proposal.scales;
  ChainState s = start;

  for (int it = 1; it <= spec.iters; ++it) {
    model.gibbs_update_beta(s, component_rngs);
    model.gibbs_update_precisions(s, rng);
    const int adapt = spec.proposal.adapt && it <= spec.burnin ? it : 0;
    model.mh_update_spatial(s, rng, scales, chain.acceptance, adapt);
    if (!std::isfinite(s.prec_beta) || !std::isfinite(s.prec_m) || !(s.prec_beta > 0.0) || !(s.prec_m > 0.0)) {
      throw NonFiniteLikelihood("chain diverged at iteration " + std::to_string(it));
    }

    if (it > spec.burnin && (it - spec.burnin) % spec.thin == 0) {
      double lp = 0.0;
      try {
        lp = model.log_posterior(s);
      } catch (const NonFiniteLikelihood&) {
        throw NonFiniteLikelihood("non-finite log posterior at iteration " + std::to_string(it));
      }
      Eigen::VectorXd flat(static_cast<Eigen::Index>(cc) * n * p);
      for (int c = 0; c < cc; ++c) {
        for (int loc = 0; loc < n; ++loc) {
          for (int j = 0; j < p; ++j) {
            flat((static_cast<Eigen::Index>(c) * n + loc) * p + j) = s.beta[c](loc, j);
          }
        }
      }
      chain.iterations.push_back(it);
      chain.beta.push_back(std::move(flat));
      chain.prec_beta.push_back(s.prec_beta);
      chain.prec_m.push_back(s.prec_m);
      chain.spatial.push_back(s.spatial);
      chain.log_posterior.push_back(lp);
    }
    if (spec.progress) spec.progress(it, s, chain);
  }
  chain.final_scales = scales;
  return chain;
}

McmcChain fit(const TensorField& data, const CdpModelSpec& spec) {
  spec.validate();
  if (!(data.domain == spec.domain)) throw DimensionMismatch("data grid differs from the model grid");
  check_design(data, spec.design);
  const OlsScaleField scales = ols_scales(data, spec.design);
  SvcModel model(cdp_responses(data, scales), spec);
  const ChainState start = model.initial_state(ols_coefficients(data, spec.design));
  return run_chain(model, spec, start);
}

double log_posterior(const ChainState& state, const TensorField& data, const OlsScaleField& scales,
                     const CdpModelSpec& spec) {
  SvcModel model(cdp_responses(data, scales), spec);
  return model.log_posterior(state);
}

}  // namespace tensorfield
