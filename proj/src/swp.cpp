#include "tensorfield/swp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "tensorfield/errors.hpp"

namespace tensorfield {

void SwpParams::validate() const {
  if (m < 3) throw InvalidDof("m must be an integer >= 3, got " + std::to_string(m));
  kernel.validate();
  if (!is_positive_definite(sigma)) throw NotPositiveDefinite("cross-covariance is not SPD");
}

namespace {

std::vector<int> sorted_order(std::span<const Location> locations) {
  std::vector<int> order(locations.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& la = locations[a];
    const auto& lb = locations[b];
    return la.y != lb.y ? la.y < lb.y : la.x < lb.x;
  });
  return order;
}

std::vector<Location> permuted(std::span<const Location> locations, const std::vector<int>& order) {
  std::vector<Location> out;
  out.reserve(order.size());
  for (int i : order) out.push_back(locations[i]);
  return out;
}

SwpParams checked(const SwpParams& p) {
  p.validate();
  return p;
}

}  // namespace

SwpSimulator::SwpSimulator(std::span<const Location> locations, const SwpParams& params)
    : params_(checked(params)),
      order_(sorted_order(locations)),
      spatial_(permuted(locations, order_), Kernel{params.kernel, KernelForm::Matern}),
      sigma_chol_(cholesky_lower(params.sigma).dense()) {}

SwpSimulator::SwpSimulator(const GridDomain& domain, const SwpParams& params)
    : SwpSimulator(domain.locations(), params) {
  domain_ = domain;
}

SwpDraw SwpSimulator::draw_with_latent(Rng& rng) const {
  const int n = size();
  const int m = params_.m;
  // Columns 3j..3j+2 hold the three spatially correlated components of Z_j.
  const Eigen::MatrixXd spatial = spatial_.draw_many(rng, 3 * m);
  const bool identity_sigma = params_.sigma == SpdMatrix::identity();

  SwpDraw out;
  out.field.domain = domain_;
  out.field.values.assign(static_cast<std::size_t>(n), SpdMatrix::zero());
  out.latent.assign(static_cast<std::size_t>(m), Eigen::MatrixXd(n, 3));
  for (int j = 0; j < m; ++j) {
    Eigen::MatrixXd z = spatial.middleCols(3 * j, 3);
    if (!identity_sigma) z = z * sigma_chol_.transpose();
    auto& lat = out.latent[j];
    for (int pos = 0; pos < n; ++pos) {
      const int idx = order_[pos];
      lat.row(idx) = z.row(pos);
      auto& u = out.field.values[idx].v;
      const double z0 = z(pos, 0), z1 = z(pos, 1), z2 = z(pos, 2);
      u[0] += z0 * z0;
      u[1] += z1 * z0;
      u[2] += z1 * z1;
      u[3] += z2 * z0;
      u[4] += z2 * z1;
      u[5] += z2 * z2;
    }
  }
  for (auto& u : out.field.values) {
    for (double& x : u.v) x /= m;
  }
  return out;
}

std::vector<SpdMatrix> SwpSimulator::draw(Rng& rng) const {
  return draw_with_latent(rng).field.values;
}

MatrixField simulate_swp(const GridDomain& domain, const SwpParams& params, std::uint64_t seed) {
  SwpSimulator sim(domain, params);
  Rng rng = make_rng(seed, 0);
  return {domain, sim.draw(rng)};
}

std::vector<MatrixField> simulate_swp_replicates(const GridDomain& domain, const SwpParams& params,
                                                 std::uint64_t seed, int count) {
  SwpSimulator sim(domain, params);
  std::vector<MatrixField> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int r = 0; r < count; ++r) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));
    out.push_back({domain, sim.draw(rng)});
  }
  return out;
}

double variogram_sill(const SwpParams& params) {
  const Eigen::Matrix3d s = params.sigma.dense();
  const double tr = s.trace();
  return 2.0 / params.m * (s * s).trace() + 2.0 / params.m * tr * tr;
}

double variogram_theoretical(double h, const SwpParams& params) {
  const double k = matern(h, params.kernel);
  return variogram_sill(params) * (1.0 - k * k);
}

std::vector<VariogramBin> variogram_empirical(std::span<const MatrixField> fields, double max_lag) {
  if (fields.size() < 2) throw InvalidParams("variogram needs at least 2 replicates");
  const GridDomain& domain = fields.front().domain;
  const int n = domain.size();
  for (const auto& f : fields) {
    if (!(f.domain == domain) || static_cast<int>(f.values.size()) != n) {
      throw DimensionMismatch("replicates must share one domain");
    }
  }

  // Bins keyed by distance in thousandths.
  std::map<long, std::size_t> bin_of;
  struct Pair {
    int a, b;
    std::size_t bin;
  };
  std::vector<Pair> pairs;
  const auto locs = domain.locations();
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      const double h = distance(locs[a], locs[b]);
      if (h > max_lag + 1e-9) continue;
      const long key = std::lround(h * 1000.0);
      auto [it, inserted] = bin_of.try_emplace(key, bin_of.size());
      pairs.push_back({a, b, it->second});
    }
  }

  std::vector<double> sums(bin_of.size(), 0.0);
  std::vector<std::size_t> counts(bin_of.size(), 0);
  for (const auto& f : fields) {
    for (const auto& p : pairs) {
      sums[p.bin] += frobenius_sq_diff(f.values[p.a], f.values[p.b]);
      counts[p.bin] += 1;
    }
  }

  std::map<long, VariogramBin> ordered;
  for (const auto& [key, bin] : bin_of) {
    ordered[key] = {key / 1000.0, sums[bin] / static_cast<double>(counts[bin]), counts[bin], false};
  }
  for (long lag = 0; lag <= static_cast<long>(std::floor(max_lag)); ++lag) {
    ordered.try_emplace(lag * 1000, VariogramBin{static_cast<double>(lag), 0.0, 0, true});
  }
  std::vector<VariogramBin> out;
  out.reserve(ordered.size());
  for (auto& [key, bin] : ordered) out.push_back(bin);
  return out;
}

std::complex<double> characteristic_function(std::span<const SymMatrix3> t, const SwpParams& params,
                                             std::span<const Location> locations) {
  params.validate();
  if (t.size() != locations.size()) throw DimensionMismatch("one T matrix per location required");
  const auto n = static_cast<Eigen::Index>(locations.size());
  const Eigen::MatrixXd r = corr_matrix(locations, Kernel{params.kernel, KernelForm::Matern});
  const Eigen::Matrix3d sigma = params.sigma.dense();

  // Covariance of the stacked latent vector: R (x) Sigma / m.
  Eigen::MatrixXd cov(3 * n, 3 * n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) cov.block<3, 3>(3 * a, 3 * b) = r(a, b) * sigma / params.m;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("R (x) Sigma is not positive definite");
  const Eigen::MatrixXd g = llt.matrixL();

  Eigen::MatrixXd tb = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  for (Eigen::Index a = 0; a < n; ++a) {
    Eigen::Matrix3d ts = t[a].dense();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != j) ts(i, j) *= 0.5;
      }
    }
    tb.block<3, 3>(3 * a, 3 * a) = ts;
  }

  // det(I - 2i T M) = prod_k (1 - 2i mu_k), mu_k the (real) eigenvalues of
  // G^T T G. Along the path sT, s in [0,1], each factor keeps real part 1, so
  // its principal argument is the continuous one and the arguments add.
  const Eigen::MatrixXd s = g.transpose() * tb * g;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw SingularArgument("eigen decomposition failed");
  double log_mod = 0.0;
  double arg = 0.0;
  for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
    const std::complex<double> factor(1.0, -2.0 * eig.eigenvalues()(k));
    if (!std::isfinite(std::abs(factor)) || std::abs(factor) == 0.0) {
      throw SingularArgument("determinant factor is singular");
    }
    log_mod += std::log(std::abs(factor));
    arg += std::arg(factor);
  }
  const double power = -0.5 * params.m;
  return std::polar(std::exp(power * log_mod), power * arg);
}

std::complex<double> empirical_characteristic_function(std::span<const SymMatrix3> t,
                                                       std::span<const std::vector<SpdMatrix>> draws) {
  std::complex<double> acc(0.0, 0.0);
  for (const auto& u : draws) {
    if (u.size() != t.size()) throw DimensionMismatch("draw size differs from T");
    double phase = 0.0;
    for (std::size_t s = 0; s < t.size(); ++s) {
      // tr(T_s U) with halved off-diagonals in T_s.
      for (std::size_t e = 0; e < 6; ++e) phase += t[s].v[e] * u[s].v[e];
    }
    acc += std::polar(1.0, phase);
  }
  return acc / static_cast<double>(draws.size());
}

GofReport oracle_diag_marginal(std::span<const double> samples, int k, int m, double l_kk) {
  if (k < 1 || k > 3) throw InvalidParams("k must be 1, 2 or 3");
  const double shape = 0.5 * (m - (k - 1));
  const double scale = 2.0 * l_kk * l_kk / m;
  GofReport rep;
  rep.ks = stats::ks_test(samples, [&](double x) { return stats::gamma_cdf(x, shape, scale); });
  rep.sample_mean = stats::mean(samples);
  rep.expected_mean = shape * scale;
  return rep;
}

OffdiagReport oracle_offdiag_conditional(std::span<const SwpDraw> draws, int a, int b,
                                         const SwpParams& params, std::span<const Location> locations) {
  params.validate();
  if (!(params.sigma == SpdMatrix::identity())) throw InvalidParams("oracle requires Sigma = I");
  const int m = params.m;
  const double k = matern(distance(locations[a], locations[b]), params.kernel);

  std::vector<double> single, pair, da, db;
  double corr_sum = 0.0;
  for (const auto& d : draws) {
    const auto ta = cholesky_lower(d.field.values[a]);
    const auto tb = cholesky_lower(d.field.values[b]);
    const double xa = std::sqrt(static_cast<double>(m)) * ta.t21();
    const double xb = std::sqrt(static_cast<double>(m)) * tb.t21();
    single.push_back(xa);
    da.push_back(ta.t21());
    db.push_back(tb.t21());

    double cross = 0.0;
    for (int j = 0; j < m; ++j) cross += d.latent[j](a, 0) * d.latent[j](b, 0);
    const double q = cross / m / (ta.t11() * tb.t11());
    const double c = a == b ? 1.0 : k * q;
    corr_sum += c;
    if (a != b) pair.push_back((xb - c * xa) / std::sqrt(1.0 - c * c));
  }
  OffdiagReport rep;
  rep.single_site = stats::ks_test(single, [](double x) { return stats::normal_cdf(x); });
  if (!pair.empty()) rep.pair_conditional = stats::ks_test(pair, [](double x) { return stats::normal_cdf(x); });
  rep.mean_conditional_corr = corr_sum / static_cast<double>(draws.size());
  rep.empirical_corr = a == b ? 1.0 : stats::correlation(da, db);
  rep.limit_corr = k * k;
  return rep;
}

}  // namespace tensorfield
