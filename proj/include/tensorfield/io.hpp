#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "tensorfield/cdp.hpp"
#include "tensorfield/estimators.hpp"
#include "tensorfield/regression.hpp"
#include "tensorfield/validation.hpp"

namespace tensorfield::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Decimal text with 17 significant digits; reading it back is exact.
std::string format_double(double x);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view content);

/// Header `subject,ix,iy,a11,a21,a22,a31,a32,a33`, one row per subject and
/// voxel, subjects outer and voxels in lexicographic order.
void write_tensors(const fs::path& path, const TensorField& field);
/// Grid and subject count are inferred from the largest indices. Throws
/// FormatError naming the row of a malformed or non-SPD entry, or the
/// first missing (subject, voxel).
TensorField read_tensors(const fs::path& path);

/// Header `subject,<column names>`.
void write_covariates(const fs::path& path, const DesignMatrix& design);
DesignMatrix read_covariates(const fs::path& path);

json truth_to_json(const Dataset& dataset);
/// Throws FormatError.
CoefficientField truth_from_json(const json& j);

/// Long format `iteration,parameter,voxel,value`; coefficients are named
/// `beta:<component>:<covariate>`, globals carry voxel -1.
void write_chain(const fs::path& path, const McmcChain& chain);
/// Component and covariate names and the grid come from the fit record.
McmcChain read_chain(const fs::path& path, const GridDomain& domain, const std::vector<std::string>& components,
                     const std::vector<std::string>& columns);

/// parameter,component,covariate,voxel,ix,iy,mean,sd,z,lower,upper
void write_summary(const fs::path& path, const PosteriorSummary& summary, const GridDomain& domain);
/// component,mad,coverage,mcsd,parameters (plus an "all" row).
void write_scores(const fs::path& path, const ScoreReport& report);
/// height rows of width values.
void write_grid(const fs::path& path, const GridDomain& domain, const Eigen::Ref<const Eigen::VectorXd>& values);
/// voxel,ix,iy,mean,sd,z,lower,upper
void write_delta_fa(const fs::path& path, const DeltaFa& delta);

json suite_to_json(const validation::SuiteReport& report);

json design_to_json(const DesignMatrix& design);
DesignMatrix design_from_json(const json& j);

/// Every provenance record an output directory carries.
struct Manifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;  // file names inside the output directory
};

/// Writes manifest.json into `dir`. Inputs and outputs are recorded by
/// name and SHA-256; the creation time comes from SOURCE_DATE_EPOCH when
/// it is set.
void write_manifest(const fs::path& dir, const Manifest& manifest);

}  // namespace tensorfield::io
