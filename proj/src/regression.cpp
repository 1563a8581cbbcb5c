#include "tensorfield/regression.hpp"

#include <cmath>
#include <string>

#include <Eigen/QR>

#include "tensorfield/errors.hpp"
#include "tensorfield/random.hpp"
#include "tensorfield/swp.hpp"

namespace tensorfield {

std::string component_name(int c) {
  return std::to_string(kComponentRowCol[c][0] + 1) + std::to_string(kComponentRowCol[c][1] + 1);
}

int component_from_name(std::string_view name) {
  for (int c = 0; c < kComponents; ++c) {
    if (component_name(c) == name) return c;
  }
  return -1;
}

int DesignMatrix::column(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return static_cast<int>(j);
  }
  return -1;
}

void DesignMatrix::validate() const {
  if (x.rows() == 0 || x.cols() == 0) throw DimensionMismatch("empty design matrix");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != x.cols()) {
    throw DimensionMismatch("design has " + std::to_string(x.cols()) + " columns but " +
                            std::to_string(names.size()) + " names");
  }
  if ((x.col(0).array() != 1.0).any()) throw DimensionMismatch("first design column must be all ones");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw RankDeficientDesign("design rank " + std::to_string(qr.rank()) + " < " + std::to_string(x.cols()));
  }
}

CoefficientField CoefficientField::zeros(const GridDomain& domain, int columns) {
  CoefficientField f;
  f.domain = domain;
  f.columns = columns;
  for (auto& b : f.beta) b = Eigen::MatrixXd::Zero(domain.size(), columns);
  return f;
}

ScalarField CoefficientField::surface(int component, int column) const {
  return {domain, beta[component].col(column)};
}

LowerTriangular mean_cholesky(const Eigen::Ref<const Eigen::RowVectorXd>& x, const CoefficientField& beta,
                              int s) {
  if (x.size() != beta.columns) {
    throw DimensionMismatch("covariate row has " + std::to_string(x.size()) + " entries, coefficients " +
                            std::to_string(beta.columns));
  }
  if (s < 0 || s >= beta.domain.size()) throw DimensionMismatch("location out of range");
  LowerTriangular l;
  for (int c = 0; c < kComponents; ++c) {
    const double eta = x.dot(beta.beta[c].row(s));
    l.v[component_slot(c)] = is_diagonal_component(c) ? std::exp(eta) : eta;
  }
  return l;
}

void ScenarioConfig::validate() const {
  if (width < 1 || height < 1) throw InvalidParams("grid dimensions must be positive");
  if (subjects < 2) throw InvalidParams("need at least 2 subjects");
  if (m < 3) throw InvalidDof("m must be >= 3");
  if (!(sigma_beta >= 0.0)) throw InvalidParams("sigma_beta must be >= 0");
  if (sigma_m2 && !(*sigma_m2 >= 0.0)) throw InvalidParams("sigma_m2 must be >= 0");
  beta_kernel.validate();
  residual_kernel.validate();
}

bool in_region(const GridDomain& domain, int region_size, int s) {
  const int x0 = std::max(0, (domain.width - region_size) / 2);
  const int y0 = std::max(0, (domain.height - region_size) / 2);
  const int x = domain.ix(s), y = domain.iy(s);
  return x >= x0 && x < x0 + region_size && y >= y0 && y < y0 + region_size;
}

CoefficientField coefficient_means(const ScenarioConfig& scenario) {
  const GridDomain domain = scenario.domain();
  // Columns: intercept, drug, age.
  auto f = CoefficientField::zeros(domain, 3);
  for (int c = 0; c < kComponents; ++c) {
    for (int s = 0; s < domain.size(); ++s) {
      if (is_diagonal_component(c) && in_region(domain, scenario.region_size, s)) {
        f.beta[c](s, 1) = scenario.drug_effect;
      }
      f.beta[c](s, 2) = scenario.age_effect;
    }
  }
  return f;
}

CoefficientField sample_coefficients(const GridDomain& domain, const ScenarioConfig& scenario,
                                     std::uint64_t seed) {
  scenario.validate();
  if (!(domain == scenario.domain())) throw DimensionMismatch("domain differs from scenario grid");
  CoefficientField f = coefficient_means(scenario);
  if (scenario.sigma_beta == 0.0) return f;
  GpSampler sampler(domain, Kernel{scenario.beta_kernel, KernelForm::Matern});
  Rng rng = make_rng(seed, 0);
  const Eigen::MatrixXd draws = sampler.draw_many(rng, kComponents * f.columns);
  for (int c = 0; c < kComponents; ++c) {
    for (int j = 0; j < f.columns; ++j) f.beta[c].col(j) += scenario.sigma_beta * draws.col(c * f.columns + j);
  }
  return f;
}

DesignMatrix generate_covariates(int subjects, std::uint64_t seed) {
  if (subjects < 1) throw InvalidParams("subjects must be positive");
  DesignMatrix d;
  d.names = {"intercept", "drug", "age"};
  d.x.resize(subjects, 3);
  Rng rng = make_rng(seed, 0);
  const int users = (subjects + 1) / 2;
  for (int i = 0; i < subjects; ++i) {
    d.x(i, 0) = 1.0;
    d.x(i, 1) = i < users ? 1.0 : 0.0;
    d.x(i, 2) = std::abs(standard_normal(rng));
  }
  return d;
}

std::string_view model_name(GenerativeModel m) { return m == GenerativeModel::Swp ? "swp" : "cdp"; }

namespace {

TensorField generate_swp(const ScenarioConfig& sc, const DesignMatrix& design, const CoefficientField& beta,
                         std::uint64_t seed) {
  const GridDomain domain = sc.domain();
  const int n = domain.size();
  SwpSimulator sim(domain, SwpParams{sc.m, sc.residual_kernel, SpdMatrix::identity()});
  TensorField out{domain, design.subjects(), std::vector<SpdMatrix>(static_cast<std::size_t>(design.subjects()) * n)};
  for (int i = 0; i < design.subjects(); ++i) {
    Rng rng = make_rng(seed, 100 + static_cast<std::uint64_t>(i));
    const auto u = sim.draw(rng);
    for (int s = 0; s < n; ++s) {
      const Eigen::Matrix3d l = mean_cholesky(design.x.row(i), beta, s).dense();
      out.at(i, s) = SymMatrix3::from_dense(l * u[s].dense() * l.transpose());
    }
  }
  return out;
}

TensorField generate_cdp(const ScenarioConfig& sc, const DesignMatrix& design, const CoefficientField& beta,
                         std::uint64_t seed) {
  const GridDomain domain = sc.domain();
  const int n = domain.size();
  const double sd = std::sqrt(sc.residual_variance());
  GpSampler sampler(domain, Kernel{sc.residual_kernel, KernelForm::SquaredMatern});
  TensorField out{domain, design.subjects(), std::vector<SpdMatrix>(static_cast<std::size_t>(design.subjects()) * n)};
  for (int i = 0; i < design.subjects(); ++i) {
    Rng rng = make_rng(seed, 100 + static_cast<std::uint64_t>(i));
    const Eigen::MatrixXd w = sampler.draw_many(rng, kComponents);
    const Eigen::RowVectorXd x = design.x.row(i);
    for (int s = 0; s < n; ++s) {
      LowerTriangular t;
      for (int c = 0; c < kComponents; ++c) {
        const double eta = x.dot(beta.beta[c].row(s));
        if (is_diagonal_component(c)) {
          const double g = std::sqrt(2.0) * eta + sd * w(s, c);
          t.v[component_slot(c)] = std::exp(g / std::sqrt(2.0));
        } else {
          const double tbar = std::exp(x.dot(beta.beta[row_diagonal_component(c)].row(s)));
          t.v[component_slot(c)] = eta + sd * tbar * w(s, c);
        }
      }
      out.at(i, s) = compose(t);
    }
  }
  return out;
}

}  // namespace

Dataset generate_dataset(const ScenarioConfig& scenario, GenerativeModel model, std::uint64_t seed) {
  scenario.validate();
  Dataset d;
  d.scenario = scenario;
  d.model = model;
  d.seed = seed;
  d.design = generate_covariates(scenario.subjects, derive_seed(seed, 1));
  d.truth = sample_coefficients(scenario.domain(), scenario, derive_seed(seed, 2));
  d.data = model == GenerativeModel::Swp ? generate_swp(scenario, d.design, d.truth, derive_seed(seed, 3))
                                         : generate_cdp(scenario, d.design, d.truth, derive_seed(seed, 3));
  return d;
}

}  // namespace tensorfield
