#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "tensorfield/correlation.hpp"
#include "tensorfield/random.hpp"

namespace tensorfield {

/// Diagonal jitter added to every correlation matrix before factorization.
inline constexpr double kCorrelationJitter = 1e-10;

/// Regular width x height grid. Locations are numbered in lexicographic
/// (row-major) order: index = iy * width + ix.
struct GridDomain {
  int width = 1;
  int height = 1;
  double spacing = 1.0;

  GridDomain() = default;
  GridDomain(int w, int h, double s = 1.0);

  int size() const { return width * height; }
  int index(int ix, int iy) const { return iy * width + ix; }
  int ix(int k) const { return k % width; }
  int iy(int k) const { return k / width; }
  Location location(int k) const;
  std::vector<Location> locations() const;

  friend bool operator==(const GridDomain&, const GridDomain&) = default;
};

/// One value per grid location.
struct ScalarField {
  GridDomain domain;
  Eigen::VectorXd values;

  ScalarField() = default;
  ScalarField(GridDomain d, Eigen::VectorXd v);
  static ScalarField constant(const GridDomain& d, double value);
};

/// Exact GP sampler; holds the Cholesky factor of the jittered
/// correlation matrix so repeated draws cost one triangular product.
class GpSampler {
 public:
  /// Throws CholeskyFailure when the correlation matrix is not PD.
  GpSampler(const GridDomain& domain, const Kernel& kernel);
  GpSampler(std::span<const Location> locations, const Kernel& kernel);

  /// Zero-mean unit-variance draw.
  Eigen::VectorXd draw(Rng& rng) const;
  /// `count` independent zero-mean unit-variance draws as columns.
  Eigen::MatrixXd draw_many(Rng& rng, int count) const;

  const Eigen::MatrixXd& factor() const { return chol_; }
  int size() const { return static_cast<int>(chol_.rows()); }

 private:
  Eigen::MatrixXd chol_;
};

/// Draw from N(mean, variance * R).
ScalarField simulate_gp(const GridDomain& domain, const ScalarField& mean, const Kernel& kernel,
                        double variance, std::uint64_t seed);

/// Exact multivariate normal log density of `field` under N(mean, variance * R).
double exact_loglik(const ScalarField& field, const ScalarField& mean, const Kernel& kernel,
                    double variance);

enum class VecchiaDirection { Following, Preceding };

/// Location ordering and conditioning sets. With direction Following the
/// set of rank r is the (up to) q ranks r+1..r+q; Preceding uses r-q..r-1.
class VecchiaPlan {
 public:
  VecchiaPlan() = default;

  const GridDomain& domain() const { return domain_; }
  int q() const { return q_; }
  VecchiaDirection direction() const { return direction_; }
  /// ordering()[rank] = location index.
  const std::vector<int>& ordering() const { return ordering_; }
  /// Conditioning set of a location (location indices), ordered by rank.
  const std::vector<int>& neighbors(int location) const { return neighbors_[location]; }
  int size() const { return static_cast<int>(neighbors_.size()); }

  /// Distinct pairwise distances appearing in any conditional factor.
  const std::vector<double>& distances() const { return distances_; }
  /// Slot into distances() of dist(location, neighbors[a]).
  const std::vector<int>& cross_slots(int location) const { return cross_slots_[location]; }
  /// Row-major k x k slots of dist(neighbors[a], neighbors[b]); -1 on the diagonal.
  const std::vector<int>& block_slots(int location) const { return block_slots_[location]; }

  friend VecchiaPlan build_vecchia_plan(const GridDomain& domain, int q, VecchiaDirection direction);

 private:
  GridDomain domain_;
  int q_ = 0;
  VecchiaDirection direction_ = VecchiaDirection::Following;
  std::vector<int> ordering_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<double> distances_;
  std::vector<std::vector<int>> cross_slots_;
  std::vector<std::vector<int>> block_slots_;
};

/// Throws InvalidQ unless 0 <= q <= n - 1.
VecchiaPlan build_vecchia_plan(const GridDomain& domain, int q,
                               VecchiaDirection direction = VecchiaDirection::Following);

/// Conditional regression weights and residual variances of a
/// unit-variance GP under a plan: w_i | w_N ~ N(b_i' w_N, f_i).
struct VecchiaFactors {
  std::vector<Eigen::VectorXd> weights;
  Eigen::VectorXd cond_var;
  double log_det = 0.0;  // sum of log f_i

  /// sum_i (r_i - b_i' r_N(i))^2 / f_i
  double quadratic(const VecchiaPlan& plan, const Eigen::Ref<const Eigen::VectorXd>& r) const;
  /// (I - B)' F^-1 (I - B), the implied sparse precision.
  Eigen::SparseMatrix<double> precision(const VecchiaPlan& plan) const;
};

/// Throws CholeskyFailure on a non-PD conditioning block.
VecchiaFactors factorize(const VecchiaPlan& plan, const Kernel& kernel);

/// One-slot cache of factors keyed on the kernel.
class VecchiaCache {
 public:
  const VecchiaFactors& get(const VecchiaPlan& plan, const Kernel& kernel);

 private:
  std::optional<Kernel> key_;
  VecchiaFactors value_;
};

/// Gaussian log density given the pieces of a factorized precision.
double gaussian_loglik(int n, double variance, double log_det_corr, double quadratic);

/// sum_i log p(w(s_i) | w(s_k), s_k in N(s_i)). Throws PlanMismatch.
double vecchia_loglik(const ScalarField& field, const ScalarField& mean, const Kernel& kernel,
                      double variance, const VecchiaPlan& plan);

/// Vecchia log likelihood under covariance variance * C(s,s') * scale(s) * scale(s').
/// Throws NonpositiveScale, PlanMismatch.
double vecchia_scaled_loglik(const ScalarField& field, const ScalarField& mean, const Kernel& kernel,
                             double variance, const ScalarField& scale, const VecchiaPlan& plan);

}  // namespace tensorfield
