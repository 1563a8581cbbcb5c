#include "tensorfield/gp.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/SparseCore>

#include "tensorfield/errors.hpp"

namespace tensorfield {

GridDomain::GridDomain(int w, int h, double s) : width(w), height(h), spacing(s) {
  if (w < 1 || h < 1) throw InvalidParams("grid dimensions must be positive");
  if (!(s > 0.0)) throw InvalidParams("grid spacing must be positive");
}

Location GridDomain::location(int k) const {
  return {spacing * ix(k), spacing * iy(k)};
}

std::vector<Location> GridDomain::locations() const {
  std::vector<Location> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (int k = 0; k < size(); ++k) out.push_back(location(k));
  return out;
}

ScalarField::ScalarField(GridDomain d, Eigen::VectorXd v) : domain(d), values(std::move(v)) {
  if (values.size() != domain.size()) {
    throw DimensionMismatch("field has " + std::to_string(values.size()) + " values for " +
                            std::to_string(domain.size()) + " locations");
  }
}

ScalarField ScalarField::constant(const GridDomain& d, double value) {
  return {d, Eigen::VectorXd::Constant(d.size(), value)};
}

// ---------------------------------------------------------------------------
// Exact GP

namespace {

Eigen::MatrixXd jittered_corr(std::span<const Location> locations, const Kernel& kernel) {
  Eigen::MatrixXd r = corr_matrix(locations, kernel);
  r.diagonal().array() += kCorrelationJitter;
  return r;
}

Eigen::MatrixXd jittered_corr(const GridDomain& domain, const Kernel& kernel) {
  return jittered_corr(domain.locations(), kernel);
}

}  // namespace

GpSampler::GpSampler(const GridDomain& domain, const Kernel& kernel)
    : GpSampler(domain.locations(), kernel) {}

GpSampler::GpSampler(std::span<const Location> locations, const Kernel& kernel) {
  Eigen::LLT<Eigen::MatrixXd> llt(jittered_corr(locations, kernel));
  if (llt.info() != Eigen::Success) throw CholeskyFailure("correlation matrix is not positive definite");
  chol_ = llt.matrixL();
}

Eigen::VectorXd GpSampler::draw(Rng& rng) const {
  Eigen::VectorXd z(chol_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = standard_normal(rng);
  return chol_.triangularView<Eigen::Lower>() * z;
}

Eigen::MatrixXd GpSampler::draw_many(Rng& rng, int count) const {
  Eigen::MatrixXd z(chol_.rows(), count);
  for (int c = 0; c < count; ++c) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, c) = standard_normal(rng);
  }
  return chol_.triangularView<Eigen::Lower>() * z;
}

ScalarField simulate_gp(const GridDomain& domain, const ScalarField& mean, const Kernel& kernel,
                        double variance, std::uint64_t seed) {
  if (!(variance >= 0.0)) throw InvalidParams("variance must be non-negative");
  if (!(mean.domain == domain)) throw PlanMismatch("mean field defined on a different domain");
  GpSampler sampler(domain, kernel);
  Rng rng = make_rng(seed, 0);
  return {domain, mean.values + std::sqrt(variance) * sampler.draw(rng)};
}

double gaussian_loglik(int n, double variance, double log_det_corr, double quadratic) {
  return -0.5 * (n * std::log(2.0 * std::numbers::pi * variance) + log_det_corr + quadratic / variance);
}

double exact_loglik(const ScalarField& field, const ScalarField& mean, const Kernel& kernel,
                    double variance) {
  if (!(field.domain == mean.domain)) throw PlanMismatch("field and mean on different domains");
  if (!(variance > 0.0)) throw InvalidParams("variance must be positive");
  Eigen::LLT<Eigen::MatrixXd> llt(jittered_corr(field.domain, kernel));
  if (llt.info() != Eigen::Success) throw CholeskyFailure("correlation matrix is not positive definite");
  const Eigen::VectorXd r = field.values - mean.values;
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return gaussian_loglik(static_cast<int>(r.size()), variance, log_det, z.squaredNorm());
}

// ---------------------------------------------------------------------------
// Vecchia

VecchiaPlan build_vecchia_plan(const GridDomain& domain, int q, VecchiaDirection direction) {
  const int n = domain.size();
  if (q < 0 || q > n - 1) {
    throw InvalidQ("q = " + std::to_string(q) + " outside [0, " + std::to_string(n - 1) + "]");
  }
  VecchiaPlan plan;
  plan.domain_ = domain;
  plan.q_ = q;
  plan.direction_ = direction;
  plan.ordering_.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) plan.ordering_[r] = r;

  std::vector<int> rank_of(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) rank_of[plan.ordering_[r]] = r;

  plan.neighbors_.assign(static_cast<std::size_t>(n), {});
  for (int loc = 0; loc < n; ++loc) {
    const int r = rank_of[loc];
    auto& nb = plan.neighbors_[loc];
    if (direction == VecchiaDirection::Following) {
      for (int k = r + 1; k <= std::min(n - 1, r + q); ++k) nb.push_back(plan.ordering_[k]);
    } else {
      for (int k = std::max(0, r - q); k < r; ++k) nb.push_back(plan.ordering_[k]);
    }
  }

  // Squared integer offsets identify distances exactly on the grid.
  std::map<long, int> slot_of;
  auto slot = [&](int a, int b) {
    const long dx = domain.ix(a) - domain.ix(b);
    const long dy = domain.iy(a) - domain.iy(b);
    const long key = dx * dx + dy * dy;
    auto [it, inserted] = slot_of.try_emplace(key, static_cast<int>(slot_of.size()));
    return it->second;
  };
  plan.cross_slots_.assign(static_cast<std::size_t>(n), {});
  plan.block_slots_.assign(static_cast<std::size_t>(n), {});
  for (int loc = 0; loc < n; ++loc) {
    const auto& nb = plan.neighbors_[loc];
    const auto k = nb.size();
    auto& cross = plan.cross_slots_[loc];
    auto& block = plan.block_slots_[loc];
    cross.resize(k);
    block.assign(k * k, -1);
    for (std::size_t a = 0; a < k; ++a) {
      cross[a] = slot(loc, nb[a]);
      for (std::size_t b = 0; b < a; ++b) {
        block[a * k + b] = block[b * k + a] = slot(nb[a], nb[b]);
      }
    }
  }
  plan.distances_.resize(slot_of.size());
  for (const auto& [key, s] : slot_of) plan.distances_[s] = domain.spacing * std::sqrt(static_cast<double>(key));
  return plan;
}

VecchiaFactors factorize(const VecchiaPlan& plan, const Kernel& kernel) {
  kernel.params.validate();
  const auto& dist = plan.distances();
  std::vector<double> corr(dist.size());
  for (std::size_t s = 0; s < dist.size(); ++s) corr[s] = kernel(dist[s]);

  const int n = plan.size();
  VecchiaFactors f;
  f.weights.resize(static_cast<std::size_t>(n));
  f.cond_var.resize(n);
  for (int loc = 0; loc < n; ++loc) {
    const auto k = static_cast<Eigen::Index>(plan.neighbors(loc).size());
    const double self = 1.0 + kCorrelationJitter;
    if (k == 0) {
      f.weights[loc].resize(0);
      f.cond_var(loc) = self;
      continue;
    }
    const auto& cross = plan.cross_slots(loc);
    const auto& block = plan.block_slots(loc);
    Eigen::MatrixXd cnn(k, k);
    Eigen::VectorXd cin(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      cin(a) = corr[cross[a]];
      for (Eigen::Index b = 0; b < k; ++b) {
        cnn(a, b) = a == b ? self : corr[block[a * k + b]];
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cnn);
    if (llt.info() != Eigen::Success) {
      throw CholeskyFailure("conditioning block of location " + std::to_string(loc) + " is not PD");
    }
    f.weights[loc] = llt.solve(cin);
    const double v = self - cin.dot(f.weights[loc]);
    if (!(v > 0.0)) throw CholeskyFailure("nonpositive conditional variance at location " + std::to_string(loc));
    f.cond_var(loc) = v;
  }
  f.log_det = f.cond_var.array().log().sum();
  return f;
}

double VecchiaFactors::quadratic(const VecchiaPlan& plan, const Eigen::Ref<const Eigen::VectorXd>& r) const {
  double q = 0.0;
  for (int loc = 0; loc < plan.size(); ++loc) {
    const auto& nb = plan.neighbors(loc);
    double e = r(loc);
    for (std::size_t a = 0; a < nb.size(); ++a) e -= weights[loc](static_cast<Eigen::Index>(a)) * r(nb[a]);
    q += e * e / cond_var(loc);
  }
  return q;
}

Eigen::SparseMatrix<double> VecchiaFactors::precision(const VecchiaPlan& plan) const {
  const int n = plan.size();
  // Rows of (I - B) scaled by f^-1/2.
  std::vector<Eigen::Triplet<double>> trips;
  for (int loc = 0; loc < n; ++loc) {
    const double s = 1.0 / std::sqrt(cond_var(loc));
    trips.emplace_back(loc, loc, s);
    const auto& nb = plan.neighbors(loc);
    for (std::size_t a = 0; a < nb.size(); ++a) {
      trips.emplace_back(loc, nb[a], -s * weights[loc](static_cast<Eigen::Index>(a)));
    }
  }
  Eigen::SparseMatrix<double> u(n, n);
  u.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseMatrix<double> prec = u.transpose() * u;
  prec.makeCompressed();
  return prec;
}

const VecchiaFactors& VecchiaCache::get(const VecchiaPlan& plan, const Kernel& kernel) {
  if (!key_ || !(*key_ == kernel) || value_.cond_var.size() != plan.size()) {
    value_ = factorize(plan, kernel);
    key_ = kernel;
  }
  return value_;
}

namespace {

void check_plan(const ScalarField& field, const ScalarField& mean, const VecchiaPlan& plan) {
  if (!(field.domain == plan.domain()) || !(mean.domain == plan.domain())) {
    throw PlanMismatch("field, mean and plan must share one domain");
  }
}

}  // namespace

double vecchia_loglik(const ScalarField& field, const ScalarField& mean, const Kernel& kernel,
                      double variance, const VecchiaPlan& plan) {
  check_plan(field, mean, plan);
  if (!(variance > 0.0)) throw InvalidParams("variance must be positive");
  const VecchiaFactors f = factorize(plan, kernel);
  const Eigen::VectorXd r = field.values - mean.values;
  return gaussian_loglik(plan.size(), variance, f.log_det, f.quadratic(plan, r));
}

double vecchia_scaled_loglik(const ScalarField& field, const ScalarField& mean, const Kernel& kernel,
                             double variance, const ScalarField& scale, const VecchiaPlan& plan) {
  check_plan(field, mean, plan);
  if (!(scale.domain == plan.domain())) throw PlanMismatch("scale field on a different domain");
  if (!(variance > 0.0)) throw InvalidParams("variance must be positive");
  for (Eigen::Index i = 0; i < scale.values.size(); ++i) {
    if (!(scale.values(i) > 0.0)) throw NonpositiveScale("scale at location " + std::to_string(i));
  }
  // Conditional factors of the scaled covariance: weights b_a * s_i / s_a,
  // variance f * s_i^2.
  const VecchiaFactors f = factorize(plan, kernel);
  const Eigen::VectorXd r = field.values - mean.values;
  const auto& s = scale.values;
  double quad = 0.0;
  double log_det = 0.0;
  for (int loc = 0; loc < plan.size(); ++loc) {
    const auto& nb = plan.neighbors(loc);
    double pred = 0.0;
    for (std::size_t a = 0; a < nb.size(); ++a) {
      pred += f.weights[loc](static_cast<Eigen::Index>(a)) * s(loc) / s(nb[a]) * r(nb[a]);
    }
    const double v = f.cond_var(loc) * s(loc) * s(loc);
    const double e = r(loc) - pred;
    quad += e * e / v;
    log_det += std::log(v);
  }
  return gaussian_loglik(plan.size(), variance, log_det, quad);
}

}  // namespace tensorfield
