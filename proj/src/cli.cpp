#include "tensorfield/cli.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <thread>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "tensorfield/errors.hpp"
#include "tensorfield/estimators.hpp"
#include "tensorfield/io.hpp"
#include "tensorfield/validation.hpp"

namespace tensorfield::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string direction_name(VecchiaDirection d) { return d == VecchiaDirection::Following ? "following" : "preceding"; }

template <class T>
T as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::pair<int, int> parse_grid(const std::string& text) {
  int w = 0, h = 0;
  char x = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &w, &x, &h, &extra) != 3 || (x != 'x' && x != 'X') || w < 1 || h < 1) {
    throw ConfigError("grid must look like WxH, got '" + text + "'");
  }
  return {w, h};
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["seed"] = [](RunConfig& c, const json& v, const std::string& k) { c.seed = as<std::uint64_t>(v, k); };
    t["grid"] = [](RunConfig& c, const json& v, const std::string& k) {
      std::tie(c.scenario.width, c.scenario.height) = parse_grid(as<std::string>(v, k));
    };
    t["subjects"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.subjects = as<int>(v, k); };
    t["model"] = [](RunConfig& c, const json& v, const std::string& k) {
      const auto name = as<std::string>(v, k);
      if (name == "swp") {
        c.model = GenerativeModel::Swp;
      } else if (name == "cdp") {
        c.model = GenerativeModel::Cdp;
      } else {
        throw ConfigError("model must be swp or cdp, got '" + name + "'");
      }
    };
    t["drug_column"] = [](RunConfig& c, const json& v, const std::string& k) { c.drug_column = as<std::string>(v, k); };
    t["scenario.m"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.m = as<int>(v, k); };
    t["scenario.sigma_beta"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.sigma_beta = as<double>(v, k);
    };
    t["scenario.sigma_m2"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.sigma_m2 = as<double>(v, k);
    };
    t["scenario.region_size"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.region_size = as<int>(v, k);
    };
    t["scenario.drug_effect"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.drug_effect = as<double>(v, k);
    };
    t["scenario.age_effect"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.age_effect = as<double>(v, k);
    };
    t["scenario.rho_beta"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.beta_kernel.rho = as<double>(v, k);
    };
    t["scenario.nu_beta"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.beta_kernel.nu = as<double>(v, k);
    };
    t["scenario.rho_u"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.residual_kernel.rho = as<double>(v, k);
    };
    t["scenario.nu_u"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.scenario.residual_kernel.nu = as<double>(v, k);
    };
    t["vecchia.q"] = [](RunConfig& c, const json& v, const std::string& k) { c.mcmc.q = as<int>(v, k); };
    t["vecchia.direction"] = [](RunConfig& c, const json& v, const std::string& k) {
      const auto name = as<std::string>(v, k);
      if (name == "following") {
        c.mcmc.direction = VecchiaDirection::Following;
      } else if (name == "preceding") {
        c.mcmc.direction = VecchiaDirection::Preceding;
      } else {
        throw ConfigError("vecchia.direction must be following or preceding");
      }
    };
    t["mcmc.iters"] = [](RunConfig& c, const json& v, const std::string& k) { c.mcmc.iters = as<int>(v, k); };
    t["mcmc.burnin"] = [](RunConfig& c, const json& v, const std::string& k) { c.mcmc.burnin = as<int>(v, k); };
    t["mcmc.thin"] = [](RunConfig& c, const json& v, const std::string& k) { c.mcmc.thin = as<int>(v, k); };
    t["mcmc.seed"] = [](RunConfig& c, const json& v, const std::string& k) { c.mcmc.seed = as<std::uint64_t>(v, k); };
    t["mcmc.threads"] = [](RunConfig& c, const json& v, const std::string& k) { c.mcmc.threads = as<int>(v, k); };
    t["priors.precision_shape"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.priors.precision_shape = as<double>(v, k);
    };
    t["priors.precision_rate"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.priors.precision_rate = as<double>(v, k);
    };
    t["priors.log_rho_mean"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.priors.log_rho_mean = as<double>(v, k);
    };
    t["priors.log_rho_sd"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.priors.log_rho_sd = as<double>(v, k);
    };
    t["priors.log_nu_mean"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.priors.log_nu_mean = as<double>(v, k);
    };
    t["priors.log_nu_sd"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.priors.log_nu_sd = as<double>(v, k);
    };
    t["proposal.adapt"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.proposal.adapt = as<bool>(v, k);
    };
    t["proposal.target_acceptance"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.proposal.target_acceptance = as<double>(v, k);
    };
    t["proposal.scale"] = [](RunConfig& c, const json& v, const std::string& k) {
      c.mcmc.proposal.scales.fill(as<double>(v, k));
    };
    for (int p = 0; p < kSpatialParams; ++p) {
      const std::string name = spatial_param_name(p);
      t["proposal.scale." + name] = [p](RunConfig& c, const json& v, const std::string& k) {
        c.mcmc.proposal.scales[p] = as<double>(v, k);
      };
      t["fixed." + name] = [p](RunConfig& c, const json& v, const std::string& k) { c.mcmc.fixed[p] = as<bool>(v, k); };
      t["init." + name] = [p](RunConfig& c, const json& v, const std::string& k) {
        c.mcmc.initial_spatial[p] = as<double>(v, k);
      };
    }
    return t;
  }();
  return table;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    // "proposal.scale" may be a number or an object of per-parameter scales.
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out.emplace_back(key, *it);
    }
  }
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const json& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, value, key);
}

RunConfig load_config(const std::optional<fs::path>& path) {
  RunConfig cfg;
  if (!path) return cfg;
  json j;
  try {
    j = json::parse(io::read_text(*path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path->string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  if (!j.is_object()) throw ConfigError(path->string() + ": config must be a JSON object");
  std::vector<std::pair<std::string, json>> entries;
  flatten(j, "", entries);
  for (const auto& [key, value] : entries) set_config_value(cfg, key, value);
  return cfg;
}

json RunConfig::effective() const {
  json j = {{"seed", seed},
            {"grid", fmt::format("{}x{}", scenario.width, scenario.height)},
            {"subjects", scenario.subjects},
            {"model", std::string(model_name(model))},
            {"drug_column", drug_column},
            {"scenario.m", scenario.m},
            {"scenario.sigma_beta", scenario.sigma_beta},
            {"scenario.sigma_m2", scenario.residual_variance()},
            {"scenario.region_size", scenario.region_size},
            {"scenario.drug_effect", scenario.drug_effect},
            {"scenario.age_effect", scenario.age_effect},
            {"scenario.rho_beta", scenario.beta_kernel.rho},
            {"scenario.nu_beta", scenario.beta_kernel.nu},
            {"scenario.rho_u", scenario.residual_kernel.rho},
            {"scenario.nu_u", scenario.residual_kernel.nu},
            {"vecchia.q", mcmc.q},
            {"vecchia.direction", direction_name(mcmc.direction)},
            {"mcmc.iters", mcmc.iters},
            {"mcmc.burnin", mcmc.burnin},
            {"mcmc.thin", mcmc.thin},
            {"mcmc.seed", mcmc.seed},
            {"priors.precision_shape", mcmc.priors.precision_shape},
            {"priors.precision_rate", mcmc.priors.precision_rate},
            {"priors.log_rho_mean", mcmc.priors.log_rho_mean},
            {"priors.log_rho_sd", mcmc.priors.log_rho_sd},
            {"priors.log_nu_mean", mcmc.priors.log_nu_mean},
            {"priors.log_nu_sd", mcmc.priors.log_nu_sd},
            {"proposal.adapt", mcmc.proposal.adapt},
            {"proposal.target_acceptance", mcmc.proposal.target_acceptance}};
  for (int p = 0; p < kSpatialParams; ++p) {
    const std::string name = spatial_param_name(p);
    j["proposal.scale." + name] = mcmc.proposal.scales[p];
    j["fixed." + name] = mcmc.fixed[p];
    j["init." + name] = mcmc.initial_spatial[p];
  }
  return j;
}

namespace {

std::shared_ptr<spdlog::logger> logger() {
  auto log = spdlog::get("tensorfield");
  if (!log) {
    log = spdlog::stderr_logger_mt("tensorfield");
    log->set_pattern("[%l] %v");
  }
  const char* env = std::getenv("TENSORFIELD_LOG");
  log->set_level(env && *env ? spdlog::level::from_str(env) : spdlog::level::info);
  return log;
}

// Failures that map onto one exit code.
struct CommandError : std::runtime_error {
  int code;
  CommandError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

struct CommonOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

RunConfig configure(const CommonOptions& o) {
  try {
    return load_config(o.config ? std::optional<fs::path>(*o.config) : std::nullopt);
  } catch (const ConfigError& e) {
    throw CommandError(kConfigError, e.what());
  }
}

int resolve_threads(std::optional<int> flag, int config_value) {
  const int t = flag.value_or(config_value);
  if (t < 0) throw CommandError(kConfigError, "threads must be >= 0");
  return t == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency())) : t;
}

std::vector<fs::path> config_inputs(const CommonOptions& o) {
  if (o.config) return {fs::path(*o.config)};
  return {};
}

struct DataPaths {
  fs::path tensors;
  fs::path covariates;
};

DataPaths resolve_data(const std::string& arg) {
  const fs::path p(arg);
  if (fs::is_directory(p)) return {p / "tensors.csv", p / "covariates.csv"};
  return {p, p.parent_path() / "covariates.csv"};
}

struct LoadedData {
  TensorField field;
  DesignMatrix design;
  DataPaths paths;
};

LoadedData load_data(const std::string& arg) {
  LoadedData d;
  d.paths = resolve_data(arg);
  try {
    d.field = io::read_tensors(d.paths.tensors);
    d.design = io::read_covariates(d.paths.covariates);
    if (d.design.subjects() != d.field.subjects) {
      throw FormatError("covariates list " + std::to_string(d.design.subjects()) + " subjects, tensors " +
                        std::to_string(d.field.subjects));
    }
    d.design.validate();
  } catch (const Error& e) {
    throw CommandError(kMalformedData, e.what());
  }
  return d;
}

CdpModelSpec model_spec(const RunConfig& cfg, const LoadedData& data, std::optional<int> threads) {
  CdpModelSpec spec = cfg.mcmc;
  spec.domain = data.field.domain;
  spec.design = data.design;
  spec.threads = resolve_threads(threads, cfg.mcmc.threads);
  try {
    spec.validate();
  } catch (const Error& e) {
    throw CommandError(kConfigError, e.what());
  }
  return spec;
}

void attach_progress(CdpModelSpec& spec, const std::string& label) {
  auto log = logger();
  const int every = std::max(1, spec.iters / 10);
  const int iters = spec.iters;
  spec.progress = [log, every, iters, label](int it, const ChainState& s, const McmcChain& chain) {
    if (it % every != 0 && it != iters) return;
    std::string rates;
    for (int k = 0; k < kSpatialParams; ++k) {
      rates += fmt::format(" {}={:.2f}", spatial_param_name(k), chain.acceptance.rate(k));
    }
    log->info("{} iteration {}/{} prec_m={:.4g} acceptance{}", label, it, iters, s.prec_m, rates);
  };
}

json chain_record(const std::string& kind, const McmcChain& chain, const CdpModelSpec& spec,
                  const std::string& drug_column) {
  json acceptance = json::object(), scales = json::object();
  for (int k = 0; k < kSpatialParams; ++k) {
    acceptance[spatial_param_name(k)] = {{"accepted", chain.acceptance.accepted[k]},
                                         {"proposed", chain.acceptance.proposed[k]},
                                         {"rate", chain.acceptance.rate(k)}};
    scales[spatial_param_name(k)] = chain.final_scales[k];
  }
  return {{"kind", kind},
          {"grid", {{"width", chain.domain.width}, {"height", chain.domain.height}}},
          {"components", chain.component_names},
          {"columns", chain.column_names},
          {"design", io::design_to_json(spec.design)},
          {"drug_column", drug_column},
          {"q", spec.q},
          {"direction", direction_name(spec.direction)},
          {"iters", spec.iters},
          {"burnin", spec.burnin},
          {"thin", spec.thin},
          {"seed", spec.seed},
          {"draws", chain.draws()},
          {"acceptance", acceptance},
          {"final_scales", scales}};
}

struct FitRecord {
  json meta;
  McmcChain chain;
  DesignMatrix design;
  fs::path meta_path;
  fs::path chain_path;
};

FitRecord load_fit(const std::string& arg) {
  FitRecord r;
  const fs::path dir(arg);
  r.meta_path = fs::is_directory(dir) ? dir / "fit.json" : dir.parent_path() / "fit.json";
  r.chain_path = fs::is_directory(dir) ? dir / "chain.csv" : dir;
  try {
    r.meta = json::parse(io::read_text(r.meta_path));
    const GridDomain domain(r.meta.at("grid").at("width").get<int>(), r.meta.at("grid").at("height").get<int>());
    r.design = io::design_from_json(r.meta.at("design"));
    r.chain = io::read_chain(r.chain_path, domain, r.meta.at("components").get<std::vector<std::string>>(),
                             r.meta.at("columns").get<std::vector<std::string>>());
    r.chain.seed = r.meta.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CommandError(kMalformedData, r.meta_path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw CommandError(kMalformedData, e.what());
  }
  if (r.chain.draws() == 0) throw CommandError(kMalformedData, "chain has no draws");
  return r;
}

DeltaFa fit_delta(const FitRecord& r, const std::string& drug_name) {
  const int drug = r.design.column(drug_name);
  if (drug < 0) throw CommandError(kConfigError, "design has no column '" + drug_name + "'");
  try {
    return r.meta.at("kind") == "baseline" ? baseline_delta_fa(r.chain, r.design, drug)
                                           : delta_fa(r.chain, r.design, drug);
  } catch (const Error& e) {
    throw CommandError(kMalformedData, e.what());
  }
}

std::vector<std::string> write_delta_outputs(const fs::path& out, const DeltaFa& delta) {
  io::write_delta_fa(out / "delta_fa.csv", delta);
  const auto summary = delta.summary();
  Eigen::VectorXd mean(delta.domain.size()), z(delta.domain.size());
  for (int s = 0; s < delta.domain.size(); ++s) {
    mean(s) = summary[s].mean;
    z(s) = summary[s].z;
  }
  io::write_grid(out / "delta_fa_mean.csv", delta.domain, mean);
  io::write_grid(out / "delta_fa_z.csv", delta.domain, z);
  return {"delta_fa.csv", "delta_fa_mean.csv", "delta_fa_z.csv"};
}

int cmd_simulate(const CommonOptions& o, const std::optional<std::string>& grid, std::optional<int> subjects,
                 const std::optional<std::string>& model) {
  RunConfig cfg = configure(o);
  try {
    if (grid) set_config_value(cfg, "grid", *grid);
    if (subjects) set_config_value(cfg, "subjects", *subjects);
    if (model) set_config_value(cfg, "model", *model);
    if (o.seed) cfg.seed = *o.seed;
    cfg.scenario.validate();
  } catch (const ConfigError& e) {
    throw CommandError(kConfigError, e.what());
  } catch (const Error& e) {
    throw CommandError(kConfigError, e.what());
  }
  auto log = logger();
  log->info("simulating {}x{} grid, {} subjects, {} route, seed {}", cfg.scenario.width, cfg.scenario.height,
            cfg.scenario.subjects, model_name(cfg.model), cfg.seed);
  Dataset ds;
  try {
    ds = generate_dataset(cfg.scenario, cfg.model, cfg.seed);
  } catch (const Error& e) {
    throw CommandError(kGenerationError, e.what());
  }
  const fs::path out(o.out);
  io::write_tensors(out / "tensors.csv", ds.data);
  io::write_covariates(out / "covariates.csv", ds.design);
  io::write_text(out / "truth.json", io::truth_to_json(ds).dump(2) + "\n");
  io::write_manifest(out, {"simulate", cfg.effective(), cfg.seed, config_inputs(o),
                           {"tensors.csv", "covariates.csv", "truth.json"}});
  log->info("wrote {} tensor rows to {}", ds.data.values.size(), (out / "tensors.csv").string());
  return kOk;
}

struct FitFlags {
  std::optional<int> q, iters, burnin;
};

RunConfig fit_config(const CommonOptions& o, const FitFlags& f) {
  RunConfig cfg = configure(o);
  if (f.q) cfg.mcmc.q = *f.q;
  if (f.iters) cfg.mcmc.iters = *f.iters;
  if (f.burnin) cfg.mcmc.burnin = *f.burnin;
  if (o.seed) cfg.mcmc.seed = *o.seed;
  return cfg;
}

int cmd_fit(const CommonOptions& o, const std::string& data_arg, const FitFlags& f, bool baseline) {
  const RunConfig cfg = fit_config(o, f);
  const LoadedData data = load_data(data_arg);
  CdpModelSpec spec = model_spec(cfg, data, o.threads);
  const std::string kind = baseline ? "baseline" : "cdp";
  attach_progress(spec, kind);
  auto log = logger();
  log->info("fitting {} model: {}x{} grid, {} subjects, q={}, {} iterations ({} burn-in)", kind,
            spec.domain.width, spec.domain.height, data.field.subjects, spec.q, spec.iters, spec.burnin);

  McmcChain chain;
  std::optional<DeltaFa> delta;
  try {
    if (baseline) {
      const int drug = data.design.column(cfg.drug_column);
      if (drug < 0) throw CommandError(kConfigError, "design has no column '" + cfg.drug_column + "'");
      auto result = fit_univariate_baseline(data.field, spec, drug);
      chain = std::move(result.chain);
      delta = std::move(result.delta);
    } else {
      chain = fit(data.field, spec);
    }
  } catch (const NonFiniteLikelihood& e) {
    throw CommandError(kDivergence, e.what());
  } catch (const CholeskyFailure& e) {
    throw CommandError(kDivergence, e.what());
  } catch (const DegenerateFA& e) {
    throw CommandError(kMalformedData, e.what());
  } catch (const NotPositiveDefinite& e) {
    throw CommandError(kMalformedData, e.what());
  }

  const fs::path out(o.out);
  io::write_chain(out / "chain.csv", chain);
  io::write_summary(out / "summary.csv", summarize_chain(chain), chain.domain);
  io::write_text(out / "fit.json", chain_record(kind, chain, spec, cfg.drug_column).dump(2) + "\n");
  std::vector<std::string> outputs{"chain.csv", "summary.csv", "fit.json"};
  if (delta) {
    for (auto& name : write_delta_outputs(out, *delta)) outputs.push_back(name);
  }
  auto inputs = config_inputs(o);
  inputs.push_back(data.paths.tensors);
  inputs.push_back(data.paths.covariates);
  io::write_manifest(out, {baseline ? "baseline-fit" : "fit", cfg.effective(), spec.seed, inputs, outputs});
  log->info("stored {} draws in {}", chain.draws(), (out / "chain.csv").string());
  return kOk;
}

int cmd_estimate_fa(const CommonOptions& o, const std::string& fit_arg) {
  const RunConfig cfg = configure(o);
  const FitRecord r = load_fit(fit_arg);
  const std::string drug = o.config ? cfg.drug_column : r.meta.value("drug_column", cfg.drug_column);
  const DeltaFa delta = fit_delta(r, drug);
  const fs::path out(o.out);
  const auto outputs = write_delta_outputs(out, delta);
  auto inputs = config_inputs(o);
  inputs.push_back(r.meta_path);
  inputs.push_back(r.chain_path);
  io::write_manifest(out, {"estimate-fa", cfg.effective(), r.chain.seed, inputs, outputs});
  logger()->info("wrote treatment-effect maps for {} voxels", delta.domain.size());
  return kOk;
}

int cmd_report(const CommonOptions& o, const std::string& fit_arg, const std::optional<std::string>& truth_path) {
  const RunConfig cfg = configure(o);
  const FitRecord r = load_fit(fit_arg);
  const fs::path out(o.out);
  std::vector<std::string> outputs;
  auto inputs = config_inputs(o);
  inputs.push_back(r.meta_path);
  inputs.push_back(r.chain_path);

  if (truth_path) {
    CoefficientField truth;
    try {
      const json j = json::parse(io::read_text(*truth_path));
      truth = io::truth_from_json(j);
      const auto names = j.at("columns").get<std::vector<std::string>>();
      if (names != r.chain.column_names) throw MissingTruth("truth covariates differ from the chain's");
      if (r.chain.components != kComponents) throw MissingTruth("truth covers six-component chains only");
      io::write_scores(out / "score.csv", score_chain(r.chain, truth));
    } catch (const json::exception& e) {
      throw CommandError(kTruthMismatch, *truth_path + ": " + e.what());
    } catch (const Error& e) {
      throw CommandError(kTruthMismatch, e.what());
    }
    outputs.push_back("score.csv");
    inputs.push_back(*truth_path);
  }

  const auto summary = summarize_chain(r.chain);
  io::write_summary(out / "summary.csv", summary, r.chain.domain);
  outputs.push_back("summary.csv");
  const int n = r.chain.domain.size();
  for (int c = 0; c < r.chain.components; ++c) {
    for (int j = 0; j < r.chain.columns; ++j) {
      Eigen::VectorXd z(n);
      for (const auto& row : summary.rows) {
        if (row.parameter == "beta" && row.component == r.chain.component_names[c] &&
            row.covariate == r.chain.column_names[j]) {
          z(row.voxel) = row.stats.z;
        }
      }
      const std::string name = "z_" + r.chain.component_names[c] + "_" + r.chain.column_names[j] + ".csv";
      io::write_grid(out / name, r.chain.domain, z);
      outputs.push_back(name);
    }
  }
  const std::string drug = o.config ? cfg.drug_column : r.meta.value("drug_column", cfg.drug_column);
  if (r.design.column(drug) > 0) {
    for (auto& name : write_delta_outputs(out, fit_delta(r, drug))) outputs.push_back(name);
  } else {
    logger()->warn("no '{}' column in the design; skipping treatment-effect maps", drug);
  }
  io::write_manifest(out, {"report", cfg.effective(), r.chain.seed, inputs, outputs});
  logger()->info("report written to {}", out.string());
  return kOk;
}

int cmd_validate(const CommonOptions& o, const std::string& suite, double effort) {
  const RunConfig cfg = configure(o);
  validation::SuiteOptions opts;
  if (o.seed) opts.seed = *o.seed;
  opts.threads = resolve_threads(o.threads, cfg.mcmc.threads);
  opts.effort = effort;
  validation::SuiteReport report;
  try {
    report = validation::run_suite(suite, opts);
  } catch (const InvalidParams& e) {
    throw CommandError(kConfigError, e.what());
  }
  for (const auto& c : report.checks) {
    fmt::print("{:<48} observed {:>14.6g}  reference {:>12.6g}  {}\n", c.name, c.observed, c.reference,
               c.passed ? "pass" : "FAIL");
  }
  fmt::print("{} {} ({:.1f} s)\n", report.suite, report.passed() ? "PASS" : "FAIL", report.seconds);
  if (!o.out.empty()) {
    const fs::path out(o.out);
    json j = io::suite_to_json(report);
    j["seed"] = opts.seed;
    j["effort"] = effort;
    io::write_text(out / "validate.json", j.dump(2) + "\n");
    json effective = cfg.effective();
    effective["validate.suite"] = suite;
    io::write_manifest(out, {"validate", effective, opts.seed, config_inputs(o), {"validate.json"}});
  }
  return report.passed() ? kOk : kValidationFailed;
}

void common_flags(CLI::App* sub, CommonOptions& o, const std::string& default_out) {
  o.out = default_out;
  sub->add_option("--config", o.config, "flat JSON config with dotted keys")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_option("--threads", o.threads, "worker cap (0 = all cores)");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Spatial tensor-field simulation, CDP fitting and reporting", "tensorfield"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TENSORFIELD_VERSION);

  CommonOptions sim_o, fit_o, base_o, fa_o, val_o, rep_o;
  std::optional<std::string> grid, model;
  std::optional<int> subjects;
  FitFlags fit_f, base_f;
  std::string fit_data, base_data, fa_fit, rep_fit, suite;
  std::optional<std::string> truth;
  double effort = 1.0;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic tensor-field dataset");
  common_flags(sim, sim_o, "simulation");
  sim->add_option("--grid", grid, "grid size WxH");
  sim->add_option("--subjects", subjects, "number of subjects");
  sim->add_option("--model", model, "generative route")->check(CLI::IsMember({"swp", "cdp"}));

  auto fit_flags = [](CLI::App* sub, FitFlags& f) {
    sub->add_option("--q", f.q, "Vecchia neighbor count");
    sub->add_option("--iters", f.iters, "total MCMC iterations including burn-in");
    sub->add_option("--burnin", f.burnin, "burn-in iterations");
  };
  auto* fit_cmd = app.add_subcommand("fit", "fit the Cholesky decomposition process model");
  common_flags(fit_cmd, fit_o, "fit");
  fit_cmd->add_option("data", fit_data, "dataset directory or tensors.csv")->required();
  fit_flags(fit_cmd, fit_f);

  auto* base = app.add_subcommand("baseline-fit", "fit the univariate logit-FA model");
  common_flags(base, base_o, "baseline");
  base->add_option("data", base_data, "dataset directory or tensors.csv")->required();
  fit_flags(base, base_f);

  auto* fa = app.add_subcommand("estimate-fa", "treatment effect on fractional anisotropy from a fit");
  common_flags(fa, fa_o, "fa");
  fa->add_option("fit", fa_fit, "fit output directory")->required();

  auto* val = app.add_subcommand("validate", "run a Monte Carlo oracle suite");
  common_flags(val, val_o, "");
  val->add_option("suite", suite, "suite name")->required()->check(CLI::IsMember(validation::suite_names()));
  val->add_option("--effort", effort, "multiplier on replicate counts")->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "posterior summaries, z-score maps and scores against truth");
  common_flags(rep, rep_o, "report");
  rep->add_option("chain", rep_fit, "fit output directory")->required();
  rep->add_option("--truth", truth, "truth.json from simulate")->check(CLI::ExistingFile);

  std::vector<const char*> argv{"tensorfield"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_o, grid, subjects, model);
    if (fit_cmd->parsed()) return cmd_fit(fit_o, fit_data, fit_f, false);
    if (base->parsed()) return cmd_fit(base_o, base_data, base_f, true);
    if (fa->parsed()) return cmd_estimate_fa(fa_o, fa_fit);
    if (val->parsed()) return cmd_validate(val_o, suite, effort);
    if (rep->parsed()) return cmd_report(rep_o, rep_fit, truth);
  } catch (const CommandError& e) {
    logger()->error("{}", e.what());
    return e.code;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return kFailure;
  }
  return kFailure;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace tensorfield::cli
