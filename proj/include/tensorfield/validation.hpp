#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tensorfield::validation {

/// One oracle comparison: observed statistic against a reference with a
/// tolerance (or a p-value against a level).
struct Check {
  std::string name;
  double observed = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
  /// Check with the largest |observed - reference| / tolerance, or the
  /// first failing one.
  const Check* worst() const;
};

struct SuiteOptions {
  std::uint64_t seed = 20240501;
  /// Worker cap for fits; 0 = hardware.
  int threads = 0;
  /// Multiplier on replicate counts and chain lengths (1 = full size).
  double effort = 1.0;
};

SuiteReport variogram_suite(const SuiteOptions& opts = {});
SuiteReport separability_suite(const SuiteOptions& opts = {});
SuiteReport bartlett_suite(const SuiteOptions& opts = {});
SuiteReport cf_suite(const SuiteOptions& opts = {});
SuiteReport asymptotic_suite(const SuiteOptions& opts = {});
SuiteReport vecchia_suite(const SuiteOptions& opts = {});
SuiteReport recovery_suite(const SuiteOptions& opts = {});
SuiteReport geweke_suite(const SuiteOptions& opts = {});
SuiteReport delta_fa_suite(const SuiteOptions& opts = {});

const std::vector<std::string>& suite_names();
/// Throws InvalidParams for an unknown suite.
SuiteReport run_suite(const std::string& name, const SuiteOptions& opts = {});

}  // namespace tensorfield::validation
