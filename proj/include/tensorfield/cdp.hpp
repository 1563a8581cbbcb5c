#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "tensorfield/gp.hpp"
#include "tensorfield/random.hpp"
#include "tensorfield/regression.hpp"

namespace tensorfield {

/// Per-subject, per-voxel positive scales tbar_ikk(s); values[k] is N x n.
struct OlsScaleField {
  GridDomain domain;
  int subjects = 0;
  std::array<Eigen::MatrixXd, 3> values;
};

/// Per-voxel OLS of log t_kk on the design (diagonal components only;
/// off-diagonal coefficients are zero). Throws RankDeficientDesign.
CoefficientField ols_coefficients(const TensorField& data, const DesignMatrix& design);

/// tbar_ikk(s) = exp(X_i beta_hat_kk(s)) from the per-voxel OLS fit.
OlsScaleField ols_scales(const TensorField& data, const DesignMatrix& design);

/// The four Metropolis-updated spatial parameters.
enum SpatialParam { kLogRhoU = 0, kLogNuU = 1, kLogRhoBeta = 2, kLogNuBeta = 3 };
inline constexpr int kSpatialParams = 4;
std::string spatial_param_name(int k);

struct PriorSettings {
  double precision_shape = 0.01;
  double precision_rate = 0.01;
  double log_rho_mean = 0.0;
  double log_rho_sd = 1.0;
  double log_nu_mean = -1.0;
  double log_nu_sd = 1.0;
};

struct ProposalSettings {
  std::array<double, kSpatialParams> scales{0.3, 0.3, 0.3, 0.3};
  bool adapt = true;
  double target_acceptance = 0.4;
};

struct ChainState;
struct McmcChain;

struct CdpModelSpec {
  DesignMatrix design;
  GridDomain domain;
  int q = 10;
  VecchiaDirection direction = VecchiaDirection::Following;
  PriorSettings priors;
  int iters = 2000;  // total, including burn-in
  int burnin = 500;
  int thin = 1;
  ProposalSettings proposal;
  /// Parameters held at their initial values.
  std::array<bool, kSpatialParams> fixed{false, false, false, false};
  std::array<double, kSpatialParams> initial_spatial{0.0, -1.0, 0.0, -1.0};
  /// When false the data term is dropped and the chain samples the prior.
  bool use_likelihood = true;
  std::uint64_t seed = 1;
  /// Worker cap for the per-component coefficient updates; 0 = hardware.
  int threads = 0;
  /// Called after every iteration with the 1-based iteration number.
  std::function<void(int, const ChainState&, const McmcChain&)> progress;

  /// Throws InvalidParams / InvalidQ.
  void validate() const;
};

/// Response process i of a component: z_i ~ N(h_i .* (X_i beta), sigma_m^2 C).
struct ResponseComponent {
  std::string name;
  Eigen::MatrixXd z;  // N x n
  Eigen::MatrixXd h;  // N x n
};

struct ResponseSet {
  std::vector<ResponseComponent> components;
  /// Added to the log likelihood (change of variables of scaled components).
  double log_jacobian = 0.0;
};

/// Six components: sqrt(2) log t_kk with multiplier sqrt(2), and
/// t_kl / tbar_k with multiplier 1 / tbar_k.
ResponseSet cdp_responses(const TensorField& data, const OlsScaleField& scales);

struct ChainState {
  std::vector<Eigen::MatrixXd> beta;  // per component, n x p
  double prec_beta = 1.0;
  double prec_m = 1.0;
  std::array<double, kSpatialParams> spatial{0.0, -1.0, 0.0, -1.0};

  Kernel residual_kernel() const;
  Kernel beta_kernel() const;
};

struct BetaConditional {
  Eigen::VectorXd mean;                    // index s * p + j
  Eigen::SparseMatrix<double> precision;
};

struct AcceptanceCounters {
  std::array<long, kSpatialParams> accepted{};
  std::array<long, kSpatialParams> proposed{};

  double rate(int k) const { return proposed[k] ? static_cast<double>(accepted[k]) / proposed[k] : 0.0; }
};

/// Posterior of the spatially varying coefficient model shared by the CDP
/// fit and the univariate baseline.
class SvcModel {
 public:
  SvcModel(ResponseSet responses, const CdpModelSpec& spec);

  int components() const { return static_cast<int>(responses_.components.size()); }
  int locations() const { return plan_.size(); }
  int columns() const { return static_cast<int>(design_.cols()); }
  int subjects() const { return static_cast<int>(design_.rows()); }
  const VecchiaPlan& plan() const { return plan_; }
  const ResponseSet& responses() const { return responses_; }

  ChainState initial_state(const std::optional<CoefficientField>& start = std::nullopt) const;

  double log_likelihood(const ChainState& s);
  double log_beta_prior(const ChainState& s);
  double log_hyperprior(const ChainState& s) const;
  /// Throws NonFiniteLikelihood.
  double log_posterior(const ChainState& s);

  BetaConditional beta_conditional(const ChainState& s, int component);
  /// Exact Gaussian full-conditional draw of every coefficient block.
  /// rngs holds one generator per component.
  void gibbs_update_beta(ChainState& s, std::vector<Rng>& rngs);
  void gibbs_update_precisions(ChainState& s, Rng& rng);
  /// log posterior ratio of moving spatial parameter k to `value`.
  double mh_log_ratio(const ChainState& s, int k, double value);
  /// One random-walk Metropolis step per free parameter. With a positive
  /// adapt_step the proposal scales are adapted in place.
  void mh_update_spatial(ChainState& s, Rng& rng, std::array<double, kSpatialParams>& scales,
                         AcceptanceCounters& counters, int adapt_step = 0);

  /// Draw of every parameter from its prior.
  ChainState sample_prior(Rng& rng);
  /// Replace the responses by a draw from the (Vecchia) likelihood at s.
  void regenerate_responses(const ChainState& s, Rng& rng);

 private:
  double component_loglik(const ChainState& s, int c, const VecchiaFactors& f) const;
  double component_quadratic(const ChainState& s, int c, const VecchiaFactors& f) const;

  ResponseSet responses_;
  Eigen::MatrixXd design_;
  PriorSettings priors_;
  std::array<bool, kSpatialParams> fixed_;
  bool use_likelihood_;
  int threads_;
  double target_;
  std::array<double, kSpatialParams> initial_spatial_;
  VecchiaPlan plan_;
  VecchiaCache residual_cache_;
  VecchiaCache beta_cache_;
};

/// Unit-variance draw from the Vecchia joint law of a plan.
Eigen::VectorXd sample_vecchia(const VecchiaPlan& plan, const VecchiaFactors& f, Rng& rng);

struct McmcChain {
  GridDomain domain;
  int components = 0;
  int columns = 0;
  std::vector<std::string> component_names;
  std::vector<std::string> column_names;
  std::vector<int> iterations;
  /// Flattened draws, index (c * n + s) * p + j.
  std::vector<Eigen::VectorXd> beta;
  std::vector<double> prec_beta;
  std::vector<double> prec_m;
  std::vector<std::array<double, kSpatialParams>> spatial;
  std::vector<double> log_posterior;
  AcceptanceCounters acceptance;
  std::array<double, kSpatialParams> final_scales{};
  std::uint64_t seed = 0;

  int draws() const { return static_cast<int>(beta.size()); }
  std::size_t beta_index(int c, int s, int j) const {
    return (static_cast<std::size_t>(c) * domain.size() + s) * columns + j;
  }
  double beta_at(int t, int c, int s, int j) const { return beta[t](static_cast<Eigen::Index>(beta_index(c, s, j))); }
  /// Coefficients of draw t as a field (requires six components).
  CoefficientField coefficients(int t) const;
};

/// Generic driver: Gibbs coefficients, Gibbs precisions, Metropolis spatial
/// parameters; stores thinned post-burn-in draws. Throws NonFiniteLikelihood
/// when the chain diverges.
McmcChain run_chain(SvcModel& model, const CdpModelSpec& spec, const ChainState& start);

/// Full CDP fit: OLS scales, responses, initialization and run_chain.
McmcChain fit(const TensorField& data, const CdpModelSpec& spec);

/// Log posterior of the CDP model at a state.
double log_posterior(const ChainState& state, const TensorField& data, const OlsScaleField& scales,
                     const CdpModelSpec& spec);

}  // namespace tensorfield
