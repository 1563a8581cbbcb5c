#include "tensorfield/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/QR>

#include "tensorfield/errors.hpp"
#include "tensorfield/spd.hpp"
#include "tensorfield/stats.hpp"

namespace tensorfield {

SampleSummary summarize_samples(std::span<const double> draws) {
  if (draws.empty()) throw InvalidParams("no draws to summarize");
  SampleSummary out;
  out.mean = stats::mean(draws);
  double ss = 0.0;
  for (double x : draws) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(draws.size()));
  out.z = out.sd > 0.0 ? out.mean / out.sd : 0.0;
  std::vector<double> v(draws.begin(), draws.end());
  out.lower = stats::quantile(v, 0.025);
  out.upper = stats::quantile(std::move(v), 0.975);
  return out;
}

PosteriorSummary summarize_chain(const McmcChain& chain) {
  PosteriorSummary out;
  const int n = chain.domain.size();
  const int t_count = chain.draws();
  std::vector<double> buf(static_cast<std::size_t>(t_count));
  for (int c = 0; c < chain.components; ++c) {
    for (int s = 0; s < n; ++s) {
      for (int j = 0; j < chain.columns; ++j) {
        for (int t = 0; t < t_count; ++t) buf[t] = chain.beta_at(t, c, s, j);
        ParameterSummary row;
        row.parameter = "beta";
        row.component = chain.component_names.at(c);
        row.covariate = j < static_cast<int>(chain.column_names.size()) ? chain.column_names[j] : std::to_string(j);
        row.voxel = s;
        row.stats = summarize_samples(buf);
        out.rows.push_back(std::move(row));
      }
    }
  }
  auto global = [&](const std::string& name, auto get) {
    for (int t = 0; t < t_count; ++t) buf[t] = get(t);
    ParameterSummary row;
    row.parameter = name;
    row.stats = summarize_samples(buf);
    out.rows.push_back(std::move(row));
  };
  global("prec_beta", [&](int t) { return chain.prec_beta[t]; });
  global("prec_m", [&](int t) { return chain.prec_m[t]; });
  for (int k = 0; k < kSpatialParams; ++k) {
    global(spatial_param_name(k), [&](int t) { return chain.spatial[t][k]; });
  }
  return out;
}

ScoreReport score_chain(const McmcChain& chain, const CoefficientField& truth) {
  if (!(truth.domain == chain.domain) || truth.columns != chain.columns || chain.components > kComponents) {
    throw MissingTruth("truth does not cover the chain's coefficients");
  }
  for (int c = 0; c < chain.components; ++c) {
    if (truth.beta[c].rows() != chain.domain.size() || truth.beta[c].cols() != chain.columns) {
      throw MissingTruth("truth for component " + chain.component_names.at(c) + " is incomplete");
    }
  }
  if (chain.draws() == 0) throw MissingTruth("chain holds no draws");

  const int n = chain.domain.size();
  const int t_count = chain.draws();
  std::vector<double> buf(static_cast<std::size_t>(t_count));
  ScoreReport report;
  report.overall.component = "all";
  for (int c = 0; c < chain.components; ++c) {
    ComponentScore score;
    score.component = chain.component_names.at(c);
    for (int s = 0; s < n; ++s) {
      for (int j = 0; j < chain.columns; ++j) {
        for (int t = 0; t < t_count; ++t) buf[t] = chain.beta_at(t, c, s, j);
        const SampleSummary sum = summarize_samples(buf);
        const double truth_value = truth.beta[c](s, j);
        score.mad += std::abs(sum.mean - truth_value);
        score.mcsd += sum.sd;
        score.coverage += truth_value >= sum.lower && truth_value <= sum.upper ? 1.0 : 0.0;
        score.parameters += 1;
      }
    }
    report.overall.mad += score.mad;
    report.overall.mcsd += score.mcsd;
    report.overall.coverage += score.coverage;
    report.overall.parameters += score.parameters;
    score.mad /= score.parameters;
    score.mcsd /= score.parameters;
    score.coverage /= score.parameters;
    report.components.push_back(score);
  }
  report.overall.mad /= report.overall.parameters;
  report.overall.mcsd /= report.overall.parameters;
  report.overall.coverage /= report.overall.parameters;
  return report;
}

std::vector<SampleSummary> DeltaFa::summary() const {
  std::vector<SampleSummary> out;
  out.reserve(static_cast<std::size_t>(draws.cols()));
  std::vector<double> buf(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index s = 0; s < draws.cols(); ++s) {
    for (Eigen::Index t = 0; t < draws.rows(); ++t) buf[t] = draws(t, s);
    out.push_back(summarize_samples(buf));
  }
  return out;
}

namespace {

void check_drug_column(const DesignMatrix& design, int drug_column, int columns) {
  if (design.columns() != columns) throw DimensionMismatch("design columns differ from the chain");
  if (drug_column < 1 || drug_column >= columns) throw InvalidParams("drug column out of range");
}

}  // namespace

DeltaFa delta_fa(const McmcChain& chain, const DesignMatrix& design, int drug_column) {
  if (chain.components != kComponents) throw DimensionMismatch("delta_fa needs a six-component chain");
  check_drug_column(design, drug_column, chain.columns);
  const int n = chain.domain.size();
  const int subjects = design.subjects();
  const int p = chain.columns;
  DeltaFa out{chain.domain, Eigen::MatrixXd::Zero(chain.draws(), n)};

  std::array<Eigen::MatrixXd, 2> x{design.x, design.x};
  x[0].col(drug_column).setZero();
  x[1].col(drug_column).setOnes();
  Eigen::MatrixXd b(n, p);
  std::array<Eigen::MatrixXd, 2> eta;
  std::array<std::array<Eigen::MatrixXd, kComponents>, 2> lin;
  for (int t = 0; t < chain.draws(); ++t) {
    for (int c = 0; c < kComponents; ++c) {
      for (int s = 0; s < n; ++s) {
        for (int j = 0; j < p; ++j) b(s, j) = chain.beta_at(t, c, s, j);
      }
      for (int d = 0; d < 2; ++d) lin[d][c] = x[d] * b.transpose();  // N x n
    }
    for (int s = 0; s < n; ++s) {
      double acc = 0.0;
      for (int i = 0; i < subjects; ++i) {
        double fa[2];
        for (int d = 0; d < 2; ++d) {
          LowerTriangular l;
          for (int c = 0; c < kComponents; ++c) {
            const double v = lin[d][c](i, s);
            l.v[component_slot(c)] = is_diagonal_component(c) ? std::exp(v) : v;
          }
          fa[d] = fractional_anisotropy(compose(l));
        }
        acc += fa[1] - fa[0];
      }
      out.draws(t, s) = acc / subjects;
    }
  }
  return out;
}

DeltaFa baseline_delta_fa(const McmcChain& chain, const DesignMatrix& design, int drug_column) {
  if (chain.components != 1) throw DimensionMismatch("baseline chain must hold one component");
  check_drug_column(design, drug_column, chain.columns);
  const int n = chain.domain.size();
  const int p = chain.columns;
  DeltaFa out{chain.domain, Eigen::MatrixXd::Zero(chain.draws(), n)};
  Eigen::MatrixXd x0 = design.x, x1 = design.x;
  x0.col(drug_column).setZero();
  x1.col(drug_column).setOnes();
  Eigen::MatrixXd b(n, p);
  for (int t = 0; t < chain.draws(); ++t) {
    for (int s = 0; s < n; ++s) {
      for (int j = 0; j < p; ++j) b(s, j) = chain.beta_at(t, 0, s, j);
    }
    const Eigen::MatrixXd e0 = x0 * b.transpose();
    const Eigen::MatrixXd e1 = x1 * b.transpose();
    for (int s = 0; s < n; ++s) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < e0.rows(); ++i) acc += stats::inv_logit(e1(i, s)) - stats::inv_logit(e0(i, s));
      out.draws(t, s) = acc / static_cast<double>(e0.rows());
    }
  }
  return out;
}

BaselineFit fit_univariate_baseline(const TensorField& data, const CdpModelSpec& spec, int drug_column) {
  spec.validate();
  if (!(data.domain == spec.domain)) throw DimensionMismatch("data grid differs from the model grid");
  if (spec.design.subjects() != data.subjects) throw DimensionMismatch("design rows differ from subjects");
  const int n = data.domain.size();
  ResponseComponent rc;
  rc.name = "logit_fa";
  rc.z.resize(data.subjects, n);
  rc.h = Eigen::MatrixXd::Ones(data.subjects, n);
  std::size_t degenerate = 0;
  for (int i = 0; i < data.subjects; ++i) {
    for (int s = 0; s < n; ++s) {
      double fa = 0.0;
      try {
        fa = fractional_anisotropy(data.at(i, s));
      } catch (const DegenerateTensor&) {
        fa = 0.0;
      }
      if (fa <= 0.0 || fa >= 1.0) ++degenerate;
      rc.z(i, s) = stats::logit(std::clamp(fa, kFaClamp, 1.0 - kFaClamp));
    }
  }
  if (static_cast<double>(degenerate) > 0.01 * static_cast<double>(data.values.size())) {
    throw DegenerateFA(std::to_string(degenerate) + " FA values lie on {0, 1}");
  }

  ResponseSet responses;
  responses.components.push_back(rc);
  SvcModel model(std::move(responses), spec);
  ChainState start = model.initial_state();
  start.beta[0] = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(spec.design.x).solve(rc.z).transpose();

  BaselineFit out;
  out.chain = run_chain(model, spec, start);
  out.delta = baseline_delta_fa(out.chain, spec.design, drug_column);
  return out;
}

}  // namespace tensorfield
