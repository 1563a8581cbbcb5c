#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tensorfield/correlation.hpp"
#include "tensorfield/gp.hpp"
#include "tensorfield/spd.hpp"
#include "tensorfield/stats.hpp"

namespace tensorfield {

/// SWP(m, K, Sigma) in the mean parameterization: E U(s) = Sigma.
struct SwpParams {
  int m = 3;
  MaternParams kernel;
  SpdMatrix sigma = SpdMatrix::identity();

  void validate() const;
};

/// One SPD matrix per location.
struct MatrixField {
  GridDomain domain;
  std::vector<SpdMatrix> values;
};

/// A field together with the latent Gaussian processes that built it:
/// latent[j] is n x 3, row s holding Z_j(s).
struct SwpDraw {
  MatrixField field;
  std::vector<Eigen::MatrixXd> latent;
};

/// U(s) = (1/m) sum_j Z_j(s) Z_j(s)^T with Z_j iid 3-variate GPs of
/// cross-covariance Sigma and spatial correlation K. Locations are
/// simulated in sorted (y, x) order and mapped back, so permuting the
/// input locations permutes the output exactly.
class SwpSimulator {
 public:
  /// Throws InvalidDof when m < 3.
  SwpSimulator(std::span<const Location> locations, const SwpParams& params);
  SwpSimulator(const GridDomain& domain, const SwpParams& params);

  std::vector<SpdMatrix> draw(Rng& rng) const;
  SwpDraw draw_with_latent(Rng& rng) const;

  int size() const { return static_cast<int>(order_.size()); }

 private:
  SwpParams params_;
  GridDomain domain_;
  std::vector<int> order_;  // order_[sorted position] = input index
  GpSampler spatial_;
  Eigen::Matrix3d sigma_chol_;
};

MatrixField simulate_swp(const GridDomain& domain, const SwpParams& params, std::uint64_t seed);

/// Replicate r is drawn from the stream derive_seed(seed, r).
std::vector<MatrixField> simulate_swp_replicates(const GridDomain& domain, const SwpParams& params,
                                                 std::uint64_t seed, int count);

/// gamma(m, Sigma) = (2/m) Tr(Sigma Sigma) + (2/m) Tr(Sigma)^2.
double variogram_sill(const SwpParams& params);

/// gamma(m, Sigma) * (1 - K(h)^2).
double variogram_theoretical(double h, const SwpParams& params);

struct VariogramBin {
  double lag = 0.0;
  double value = 0.0;  // mean squared Frobenius difference
  std::size_t n_pairs = 0;
  bool empty = false;
};

/// Mean of ||U(s) - U(s')||_F^2 over replicates and all pairs grouped by
/// their exact distance (rounded to 3 decimals) up to max_lag. Integer
/// lags with no realized pair are reported as empty bins.
std::vector<VariogramBin> variogram_empirical(std::span<const MatrixField> fields, double max_lag);

/// E exp(i sum_s tr(T_s U(s))) where T_s carries t_ii on the diagonal and
/// t_ij / 2 off the diagonal. `t` holds the raw t_ij per location.
/// Throws SingularArgument if the determinant path is not finite.
std::complex<double> characteristic_function(std::span<const SymMatrix3> t, const SwpParams& params,
                                             std::span<const Location> locations);

/// Monte Carlo estimate of the same quantity from simulated fields.
std::complex<double> empirical_characteristic_function(std::span<const SymMatrix3> t,
                                                       std::span<const std::vector<SpdMatrix>> draws);

struct GofReport {
  stats::KsResult ks;
  double sample_mean = 0.0;
  double expected_mean = 0.0;
};

/// Checks t_kk^2 samples against GA((m - k + 1)/2, scale 2 l_kk^2 / m); k is 1-based.
GofReport oracle_diag_marginal(std::span<const double> samples, int k, int m, double l_kk);

struct OffdiagReport {
  /// sqrt(m) d21(a) against N(0, 1).
  stats::KsResult single_site;
  /// d21(b) standardized by its conditional law given d21(a) and the
  /// latent first components, against N(0, 1).
  stats::KsResult pair_conditional;
  /// Average of the conditional correlation K(h) * Q over draws.
  double mean_conditional_corr = 0.0;
  /// Sample correlation of d21(a), d21(b) across draws.
  double empirical_corr = 0.0;
  /// Large-m limit K(h)^2.
  double limit_corr = 0.0;
};

/// Conditional law of the (2,1) Cholesky element of a standard SWP given
/// the latent first components, checked at locations a and b.
OffdiagReport oracle_offdiag_conditional(std::span<const SwpDraw> draws, int a, int b,
                                         const SwpParams& params, std::span<const Location> locations);

}  // namespace tensorfield
