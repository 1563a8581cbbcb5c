#pragma once

#include <functional>
#include <span>
#include <vector>

namespace tensorfield::stats {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF. The
/// p-value uses the asymptotic Kolmogorov law with Stephens' small-sample
/// correction.
KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf);

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);
/// Gamma CDF with the given shape and scale.
double gamma_cdf(double x, double shape, double scale);
double chi_squared_cdf(double x, double dof);

/// log density of Gamma(shape, rate) at x > 0.
double gamma_log_density(double x, double shape, double rate);
/// log density of N(mean, sd^2).
double normal_log_density(double x, double mean, double sd);

double mean(std::span<const double> x);
/// Unbiased sample variance.
double variance(std::span<const double> x);
/// Pearson correlation of paired samples.
double correlation(std::span<const double> x, std::span<const double> y);
/// Linear-interpolated quantile (type 7) of unsorted data.
double quantile(std::vector<double> x, double p);

double logit(double p);
double inv_logit(double x);

}  // namespace tensorfield::stats
