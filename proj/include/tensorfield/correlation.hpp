#pragma once

#include <span>

#include <Eigen/Core>

namespace tensorfield {

/// Matern range (grid units) and smoothness.
struct MaternParams {
  double rho = 1.0;
  double nu = 0.5;

  void validate() const;
  friend bool operator==(const MaternParams&, const MaternParams&) = default;
};

enum class KernelForm { Matern, SquaredMatern };

/// Isotropic correlation function: K(h) or its square C(h) = K(h)^2.
struct Kernel {
  MaternParams params;
  KernelForm form = KernelForm::Matern;

  double operator()(double h) const;
  friend bool operator==(const Kernel&, const Kernel&) = default;
};

struct Location {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Location& a, const Location& b);

/// K(h) = 2^(1-nu)/Gamma(nu) (sqrt(2 nu) h / rho)^nu K_nu(sqrt(2 nu) h / rho).
/// Reduces to exp(-h / rho) at nu = 0.5. Throws InvalidParams.
double matern(double h, const MaternParams& p);

/// matern(h, p)^2.
double squared_kernel(double h, const MaternParams& p);

/// Dense correlation matrix over `locations`. Throws DuplicateLocations.
Eigen::MatrixXd corr_matrix(std::span<const Location> locations, const Kernel& kernel);

}  // namespace tensorfield
