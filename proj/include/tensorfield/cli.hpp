#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tensorfield/cdp.hpp"
#include "tensorfield/regression.hpp"

namespace tensorfield::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kGenerationError = 3,
  kMalformedData = 4,
  kDivergence = 5,
  kValidationFailed = 6,
  kTruthMismatch = 7,
};

/// Settings shared by every command. Loaded from a flat JSON object whose
/// keys are dotted paths (nested objects are flattened the same way).
struct RunConfig {
  ScenarioConfig scenario;
  GenerativeModel model = GenerativeModel::Swp;
  std::uint64_t seed = 1;
  CdpModelSpec mcmc;
  std::string drug_column = "drug";

  /// Every setting as a flat, key-sorted object.
  nlohmann::json effective() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Defaults overlaid with the file's keys. Throws ConfigError on an
/// unknown key, a wrong type or an unreadable file.
RunConfig load_config(const std::optional<std::filesystem::path>& path);
/// Apply one dotted key. Throws ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const nlohmann::json& value);

/// Entry point of the `tensorfield` executable. Never throws; returns an
/// ExitCode.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace tensorfield::cli
