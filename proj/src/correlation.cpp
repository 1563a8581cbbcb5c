#include "tensorfield/correlation.hpp"

#include <cmath>
#include <string>

#include "tensorfield/errors.hpp"

namespace tensorfield {

void MaternParams::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidParams("rho must be > 0, got " + std::to_string(rho));
  if (!(nu > 0.0) || !std::isfinite(nu)) throw InvalidParams("nu must be > 0, got " + std::to_string(nu));
}

double Kernel::operator()(double h) const {
  return form == KernelForm::Matern ? matern(h, params) : squared_kernel(h, params);
}

double distance(const Location& a, const Location& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

namespace {

// exp(-x) * sum_j (k+j)! / (j! (k-j)!) (2x)^(k-j) * k! / (2k)!
double half_integer_matern(int k, double x) {
  double sum = 0.0;
  double fact_ratio = 1.0;  // k!/(2k)!
  for (int i = k + 1; i <= 2 * k; ++i) fact_ratio /= i;
  for (int j = 0; j <= k; ++j) {
    double coef = 1.0;  // (k+j)! / (j! (k-j)!)
    for (int i = k - j + 1; i <= k + j; ++i) coef *= i;
    for (int i = 2; i <= j; ++i) coef /= i;
    sum += coef * std::pow(2.0 * x, k - j);
  }
  return std::exp(-x) * sum * fact_ratio;
}

}  // namespace

double matern(double h, const MaternParams& p) {
  p.validate();
  if (h < 0.0) throw InvalidParams("negative distance");
  if (h == 0.0) return 1.0;
  const double x = std::sqrt(2.0 * p.nu) * h / p.rho;

  const double twice_nu = 2.0 * p.nu;
  const double odd = std::round(twice_nu);
  if (std::abs(twice_nu - odd) < 1e-12 && static_cast<long>(odd) % 2 == 1 && odd < 60) {
    return half_integer_matern(static_cast<int>((odd - 1) / 2), x);
  }

  if (x < 1e-12) return 1.0;
  if (x > 700.0) return 0.0;
  const double log_val = (1.0 - p.nu) * std::log(2.0) - std::lgamma(p.nu) + p.nu * std::log(x) +
                         std::log(std::cyl_bessel_k(p.nu, x));
  const double v = std::exp(log_val);
  return v > 1.0 ? 1.0 : v;
}

double squared_kernel(double h, const MaternParams& p) {
  const double k = matern(h, p);
  return k * k;
}

Eigen::MatrixXd corr_matrix(std::span<const Location> locations, const Kernel& kernel) {
  kernel.params.validate();
  const auto n = static_cast<Eigen::Index>(locations.size());
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double h = distance(locations[i], locations[j]);
      if (h == 0.0) {
        throw DuplicateLocations("locations " + std::to_string(j) + " and " + std::to_string(i) + " coincide");
      }
      r(i, j) = r(j, i) = kernel(h);
    }
  }
  return r;
}

}  // namespace tensorfield
