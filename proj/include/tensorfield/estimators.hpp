#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tensorfield/cdp.hpp"
#include "tensorfield/regression.hpp"

namespace tensorfield {

/// Posterior mean, SD (1/T normalization), z-score and 95% interval.
struct SampleSummary {
  double mean = 0.0;
  double sd = 0.0;
  double z = 0.0;  // mean / sd, 0 when sd == 0
  double lower = 0.0;
  double upper = 0.0;
};

SampleSummary summarize_samples(std::span<const double> draws);

struct ParameterSummary {
  std::string parameter;  // "beta" or a global name
  std::string component;
  std::string covariate;
  int voxel = -1;
  SampleSummary stats;
};

struct PosteriorSummary {
  std::vector<ParameterSummary> rows;
};

/// One row per coefficient (component, voxel, covariate) and per global.
PosteriorSummary summarize_chain(const McmcChain& chain);

struct ComponentScore {
  std::string component;
  double mad = 0.0;
  double coverage = 0.0;
  double mcsd = 0.0;
  int parameters = 0;
};

struct ScoreReport {
  std::vector<ComponentScore> components;
  ComponentScore overall;
};

/// MAD, 95% coverage and MCSD averaged over voxels and covariates per
/// component. Throws MissingTruth when truth does not cover the chain.
ScoreReport score_chain(const McmcChain& chain, const CoefficientField& truth);

/// Per-draw, per-voxel posterior samples of the treatment contrast.
struct DeltaFa {
  GridDomain domain;
  Eigen::MatrixXd draws;  // T x n

  std::vector<SampleSummary> summary() const;
};

/// (1/N) sum_i [FA(mean matrix with drug = 1) - FA(mean matrix with drug = 0)]
/// at every stored draw and voxel.
DeltaFa delta_fa(const McmcChain& chain, const DesignMatrix& design, int drug_column);

struct BaselineFit {
  McmcChain chain;
  DeltaFa delta;
};

/// Clamp bounds applied to FA before the logit.
inline constexpr double kFaClamp = 1e-6;

/// Univariate spatially varying coefficient model on logit FA with the same
/// priors and Vecchia settings. Throws DegenerateFA when more than 1% of
/// the FA values sit on {0, 1}.
BaselineFit fit_univariate_baseline(const TensorField& data, const CdpModelSpec& spec, int drug_column);

/// Inverse-logit contrast of the baseline linear predictor.
DeltaFa baseline_delta_fa(const McmcChain& chain, const DesignMatrix& design, int drug_column);

}  // namespace tensorfield
