#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tensorfield/correlation.hpp"
#include "tensorfield/gp.hpp"
#include "tensorfield/spd.hpp"

namespace tensorfield {

/// The six Cholesky components in coefficient order: 11, 22, 33, 21, 31, 32.
inline constexpr int kComponents = 6;
inline constexpr std::array<std::array<int, 2>, kComponents> kComponentRowCol{
    {{0, 0}, {1, 1}, {2, 2}, {1, 0}, {2, 0}, {2, 1}}};

constexpr bool is_diagonal_component(int c) { return c < 3; }
/// Storage slot in LowerTriangular::v for component c.
constexpr std::size_t component_slot(int c) {
  return tri_index(kComponentRowCol[c][0], kComponentRowCol[c][1]);
}
/// Component index of the diagonal element in the same row as component c.
constexpr int row_diagonal_component(int c) { return kComponentRowCol[c][0]; }
std::string component_name(int c);
/// Inverse of component_name; returns -1 when unknown.
int component_from_name(std::string_view name);

/// N x (d+1) design: intercept column plus d covariates.
struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::string> names;

  int subjects() const { return static_cast<int>(x.rows()); }
  int columns() const { return static_cast<int>(x.cols()); }
  /// Column index by name, -1 when absent.
  int column(std::string_view name) const;
  /// Throws DimensionMismatch when the first column is not all ones, or
  /// RankDeficientDesign when the columns are not linearly independent.
  void validate() const;
};

/// Per component, an n x (d+1) matrix of coefficient surfaces beta_jkl(s).
struct CoefficientField {
  GridDomain domain;
  int columns = 1;
  std::array<Eigen::MatrixXd, kComponents> beta;

  static CoefficientField zeros(const GridDomain& domain, int columns);
  ScalarField surface(int component, int column) const;
};

/// Mean-matrix Cholesky factor at location s for covariate row x:
/// l_kk = exp(x beta_kk(s)), l_kl = x beta_kl(s).
LowerTriangular mean_cholesky(const Eigen::Ref<const Eigen::RowVectorXd>& x, const CoefficientField& beta,
                              int s);

/// Synthetic scenario of the simulation study: drug effect on the
/// diagonal components inside the central region, age effect everywhere.
struct ScenarioConfig {
  int width = 20;
  int height = 20;
  int subjects = 10;
  int region_size = 4;
  double sigma_beta = 0.1;  // standard deviation of the coefficient GP
  MaternParams beta_kernel{2.0, 0.5};
  MaternParams residual_kernel{2.0, 0.5};
  int m = 50;
  /// Residual variance of the CDP route; defaults to 1/m.
  std::optional<double> sigma_m2;
  double drug_effect = 0.5;
  double age_effect = 0.25;

  GridDomain domain() const { return {width, height}; }
  double residual_variance() const { return sigma_m2.value_or(1.0 / m); }
  void validate() const;
};

/// Central region_size x region_size block of the grid.
bool in_region(const GridDomain& domain, int region_size, int s);

/// Mean surfaces of the coefficients (intercept 0; drug on the diagonal
/// inside the region; age on all six components).
CoefficientField coefficient_means(const ScenarioConfig& scenario);

CoefficientField sample_coefficients(const GridDomain& domain, const ScenarioConfig& scenario,
                                     std::uint64_t seed);

/// Intercept, drug indicator (first ceil(N/2) subjects), half-normal age.
DesignMatrix generate_covariates(int subjects, std::uint64_t seed);

/// Subject-by-location SPD tensors; value(i, s) = values[i * n + s].
struct TensorField {
  GridDomain domain;
  int subjects = 0;
  std::vector<SpdMatrix> values;

  const SpdMatrix& at(int subject, int s) const { return values[static_cast<std::size_t>(subject) * domain.size() + s]; }
  SpdMatrix& at(int subject, int s) { return values[static_cast<std::size_t>(subject) * domain.size() + s]; }
};

enum class GenerativeModel { Swp, Cdp };
std::string_view model_name(GenerativeModel m);

struct Dataset {
  TensorField data;
  DesignMatrix design;
  CoefficientField truth;
  ScenarioConfig scenario;
  GenerativeModel model = GenerativeModel::Cdp;
  std::uint64_t seed = 0;
};

/// SWP route: A = L U L^T with U ~ SWP(m, K, I). CDP route: Cholesky
/// elements from the working-model GPs with scales exp(X beta_kk).
Dataset generate_dataset(const ScenarioConfig& scenario, GenerativeModel model, std::uint64_t seed);

}  // namespace tensorfield
