#include "tensorfield/io.hpp"

#include <charconv>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/version.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "tensorfield/errors.hpp"
#include "tensorfield/spd.hpp"

#ifndef TENSORFIELD_VERSION
#define TENSORFIELD_VERSION "0.0.0"
#endif

namespace tensorfield::io {

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw FormatError("SHA-256 digest failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Lines of a CSV file with their 1-based line numbers; blank lines dropped.
std::vector<std::pair<std::size_t, std::string>> csv_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    out.emplace_back(number, line);
  }
  return out;
}

double parse_double(std::string_view s, const std::string& where) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw FormatError(where + ": '" + std::string(s) + "' is not a finite number");
  }
  return v;
}

long parse_int(std::string_view s, const std::string& where) {
  s = trim(s);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(where + ": '" + std::string(s) + "' is not an integer");
  }
  return v;
}

void expect_header(const std::vector<std::string_view>& got, const std::vector<std::string>& want,
                   const fs::path& path) {
  bool ok = got.size() == want.size();
  for (std::size_t k = 0; ok && k < want.size(); ++k) ok = trim(got[k]) == want[k];
  if (!ok) {
    std::string joined;
    for (const auto& w : want) joined += (joined.empty() ? "" : ",") + w;
    throw FormatError(path.string() + ": expected header '" + joined + "'");
  }
}

}  // namespace

void write_tensors(const fs::path& path, const TensorField& field) {
  std::string out = "subject,ix,iy,a11,a21,a22,a31,a32,a33\n";
  const GridDomain& d = field.domain;
  for (int i = 0; i < field.subjects; ++i) {
    for (int s = 0; s < d.size(); ++s) {
      out += fmt::format("{},{},{}", i, d.ix(s), d.iy(s));
      for (double v : field.at(i, s).v) out += "," + format_double(v);
      out += '\n';
    }
  }
  write_text(path, out);
}

TensorField read_tensors(const fs::path& path) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw FormatError(path.string() + " is empty");
  expect_header(split(lines[0].second), {"subject", "ix", "iy", "a11", "a21", "a22", "a31", "a32", "a33"}, path);

  struct Row {
    long subject, ix, iy;
    SpdMatrix a;
    std::size_t line;
  };
  std::vector<Row> rows;
  long max_subject = -1, max_x = -1, max_y = -1;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto& [number, text] = lines[k];
    const std::string where = "row " + std::to_string(number);
    const auto f = split(text);
    if (f.size() != 9) throw FormatError(where + ": expected 9 fields, found " + std::to_string(f.size()));
    Row r{parse_int(f[0], where), parse_int(f[1], where), parse_int(f[2], where), {}, number};
    if (r.subject < 0 || r.ix < 0 || r.iy < 0) throw FormatError(where + ": negative index");
    for (int j = 0; j < 6; ++j) r.a.v[j] = parse_double(f[3 + j], where);
    max_subject = std::max(max_subject, r.subject);
    max_x = std::max(max_x, r.ix);
    max_y = std::max(max_y, r.iy);
    rows.push_back(r);
  }
  if (rows.empty()) throw FormatError(path.string() + " has no data rows");

  TensorField field;
  field.domain = GridDomain(static_cast<int>(max_x + 1), static_cast<int>(max_y + 1));
  field.subjects = static_cast<int>(max_subject + 1);
  const int n = field.domain.size();
  field.values.assign(static_cast<std::size_t>(field.subjects) * n, SpdMatrix::zero());
  std::vector<char> seen(field.values.size(), 0);
  for (const auto& r : rows) {
    const int s = field.domain.index(static_cast<int>(r.ix), static_cast<int>(r.iy));
    const std::size_t slot = static_cast<std::size_t>(r.subject) * n + s;
    const std::string where = "row " + std::to_string(r.line);
    if (seen[slot]) {
      throw FormatError(where + ": duplicate entry for subject " + std::to_string(r.subject) + ", voxel " +
                        std::to_string(s));
    }
    if (!is_positive_definite(r.a)) throw FormatError(where + ": tensor is not positive definite");
    seen[slot] = 1;
    field.values[slot] = r.a;
  }
  for (std::size_t slot = 0; slot < seen.size(); ++slot) {
    if (!seen[slot]) {
      const int i = static_cast<int>(slot / n), s = static_cast<int>(slot % n);
      throw FormatError("missing row for subject " + std::to_string(i) + ", voxel " + std::to_string(s) + " (ix " +
                        std::to_string(field.domain.ix(s)) + ", iy " + std::to_string(field.domain.iy(s)) + ")");
    }
  }
  return field;
}

void write_covariates(const fs::path& path, const DesignMatrix& design) {
  std::string out = "subject";
  for (const auto& name : design.names) out += "," + name;
  out += '\n';
  for (Eigen::Index i = 0; i < design.x.rows(); ++i) {
    out += std::to_string(i);
    for (Eigen::Index j = 0; j < design.x.cols(); ++j) out += "," + format_double(design.x(i, j));
    out += '\n';
  }
  write_text(path, out);
}

DesignMatrix read_covariates(const fs::path& path) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw FormatError(path.string() + " is empty");
  const auto header = split(lines[0].second);
  if (header.size() < 2 || trim(header[0]) != "subject") {
    throw FormatError(path.string() + ": header must start with 'subject'");
  }
  DesignMatrix d;
  for (std::size_t j = 1; j < header.size(); ++j) d.names.emplace_back(trim(header[j]));
  const auto p = static_cast<Eigen::Index>(d.names.size());
  d.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lines.size() - 1), p);
  std::vector<char> seen(lines.size() - 1, 0);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const std::string where = "row " + std::to_string(lines[k].first);
    const auto f = split(lines[k].second);
    if (static_cast<Eigen::Index>(f.size()) != p + 1) throw FormatError(where + ": wrong number of fields");
    const long i = parse_int(f[0], where);
    if (i < 0 || i >= d.x.rows() || seen[i]) throw FormatError(where + ": bad or repeated subject index");
    seen[i] = 1;
    for (Eigen::Index j = 0; j < p; ++j) d.x(i, j) = parse_double(f[j + 1], where);
  }
  return d;
}

json design_to_json(const DesignMatrix& design) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < design.x.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < design.x.cols(); ++j) row.push_back(design.x(i, j));
    rows.push_back(row);
  }
  return {{"columns", design.names}, {"rows", rows}};
}

DesignMatrix design_from_json(const json& j) {
  try {
    DesignMatrix d;
    d.names = j.at("columns").get<std::vector<std::string>>();
    const auto& rows = j.at("rows");
    d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d.names.size()) throw FormatError("design row length differs from columns");
      for (std::size_t k = 0; k < d.names.size(); ++k) d.x(i, k) = rows[i][k].get<double>();
    }
    return d;
  } catch (const json::exception& e) {
    throw FormatError(std::string("design record: ") + e.what());
  }
}

json truth_to_json(const Dataset& dataset) {
  const auto& sc = dataset.scenario;
  json beta = json::object();
  for (int c = 0; c < kComponents; ++c) {
    json comp = json::object();
    for (int j = 0; j < dataset.truth.columns; ++j) {
      const auto col = dataset.truth.beta[c].col(j);
      comp[dataset.design.names.at(j)] = std::vector<double>(col.data(), col.data() + col.size());
    }
    beta[component_name(c)] = comp;
  }
  json scenario = {{"m", sc.m},
                   {"sigma_beta", sc.sigma_beta},
                   {"region_size", sc.region_size},
                   {"drug_effect", sc.drug_effect},
                   {"age_effect", sc.age_effect},
                   {"rho_beta", sc.beta_kernel.rho},
                   {"nu_beta", sc.beta_kernel.nu},
                   {"rho_u", sc.residual_kernel.rho},
                   {"nu_u", sc.residual_kernel.nu},
                   {"sigma_m2", sc.residual_variance()}};
  return {{"grid", {{"width", sc.width}, {"height", sc.height}}},
          {"subjects", sc.subjects},
          {"model", std::string(model_name(dataset.model))},
          {"seed", dataset.seed},
          {"columns", dataset.design.names},
          {"scenario", scenario},
          {"beta", beta}};
}

CoefficientField truth_from_json(const json& j) {
  try {
    const GridDomain domain(j.at("grid").at("width").get<int>(), j.at("grid").at("height").get<int>());
    const auto columns = j.at("columns").get<std::vector<std::string>>();
    auto f = CoefficientField::zeros(domain, static_cast<int>(columns.size()));
    for (int c = 0; c < kComponents; ++c) {
      const auto& comp = j.at("beta").at(component_name(c));
      for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto v = comp.at(columns[k]).get<std::vector<double>>();
        if (static_cast<int>(v.size()) != domain.size()) throw MissingTruth("truth surface has the wrong length");
        f.beta[c].col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(v.data(), domain.size());
      }
    }
    return f;
  } catch (const json::exception& e) {
    throw FormatError(std::string("truth record: ") + e.what());
  }
}

void write_chain(const fs::path& path, const McmcChain& chain) {
  std::string out = "iteration,parameter,voxel,value\n";
  const int n = chain.domain.size();
  std::vector<std::string> names;
  for (int c = 0; c < chain.components; ++c) {
    for (int j = 0; j < chain.columns; ++j) {
      names.push_back("beta:" + chain.component_names.at(c) + ":" + chain.column_names.at(j));
    }
  }
  for (int t = 0; t < chain.draws(); ++t) {
    const std::string it = std::to_string(chain.iterations[t]);
    for (int c = 0; c < chain.components; ++c) {
      for (int s = 0; s < n; ++s) {
        for (int j = 0; j < chain.columns; ++j) {
          out += fmt::format("{},{},{},{}\n", it, names[c * chain.columns + j], s,
                             format_double(chain.beta_at(t, c, s, j)));
        }
      }
    }
    out += fmt::format("{},prec_beta,-1,{}\n", it, format_double(chain.prec_beta[t]));
    out += fmt::format("{},prec_m,-1,{}\n", it, format_double(chain.prec_m[t]));
    for (int k = 0; k < kSpatialParams; ++k) {
      out += fmt::format("{},{},-1,{}\n", it, spatial_param_name(k), format_double(chain.spatial[t][k]));
    }
    out += fmt::format("{},log_posterior,-1,{}\n", it, format_double(chain.log_posterior[t]));
  }
  write_text(path, out);
}

McmcChain read_chain(const fs::path& path, const GridDomain& domain, const std::vector<std::string>& components,
                     const std::vector<std::string>& columns) {
  McmcChain chain;
  chain.domain = domain;
  chain.components = static_cast<int>(components.size());
  chain.columns = static_cast<int>(columns.size());
  chain.component_names = components;
  chain.column_names = columns;
  std::map<std::string, int> beta_slot;
  for (int c = 0; c < chain.components; ++c) {
    for (int j = 0; j < chain.columns; ++j) beta_slot["beta:" + components[c] + ":" + columns[j]] = c * chain.columns + j;
  }
  const int n = domain.size();
  const Eigen::Index size = static_cast<Eigen::Index>(chain.components) * n * chain.columns;

  const auto lines = csv_lines(path);
  if (lines.empty()) throw FormatError(path.string() + " is empty");
  expect_header(split(lines[0].second), {"iteration", "parameter", "voxel", "value"}, path);
  long current = -1;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const std::string where = "row " + std::to_string(lines[k].first);
    const auto f = split(lines[k].second);
    if (f.size() != 4) throw FormatError(where + ": expected 4 fields");
    const long it = parse_int(f[0], where);
    if (it != current) {
      current = it;
      chain.iterations.push_back(static_cast<int>(it));
      chain.beta.push_back(Eigen::VectorXd::Constant(size, std::numeric_limits<double>::quiet_NaN()));
      chain.prec_beta.push_back(std::numeric_limits<double>::quiet_NaN());
      chain.prec_m.push_back(std::numeric_limits<double>::quiet_NaN());
      chain.spatial.push_back({});
      chain.log_posterior.push_back(0.0);
    }
    const std::string name(trim(f[1]));
    const long voxel = parse_int(f[2], where);
    const double value = parse_double(f[3], where);
    if (const auto b = beta_slot.find(name); b != beta_slot.end()) {
      if (voxel < 0 || voxel >= n) throw FormatError(where + ": voxel out of range");
      const int c = b->second / chain.columns, j = b->second % chain.columns;
      chain.beta.back()(static_cast<Eigen::Index>(chain.beta_index(c, static_cast<int>(voxel), j))) = value;
    } else if (name == "prec_beta") {
      chain.prec_beta.back() = value;
    } else if (name == "prec_m") {
      chain.prec_m.back() = value;
    } else if (name == "log_posterior") {
      chain.log_posterior.back() = value;
    } else {
      bool matched = false;
      for (int p = 0; p < kSpatialParams && !matched; ++p) {
        if (name == spatial_param_name(p)) {
          chain.spatial.back()[p] = value;
          matched = true;
        }
      }
      if (!matched) throw FormatError(where + ": unknown parameter '" + name + "'");
    }
  }
  for (int t = 0; t < chain.draws(); ++t) {
    if (!chain.beta[t].allFinite() || std::isnan(chain.prec_beta[t]) || std::isnan(chain.prec_m[t])) {
      throw FormatError("iteration " + std::to_string(chain.iterations[t]) + " is incomplete in " + path.string());
    }
  }
  return chain;
}

void write_summary(const fs::path& path, const PosteriorSummary& summary, const GridDomain& domain) {
  std::string out = "parameter,component,covariate,voxel,ix,iy,mean,sd,z,lower,upper\n";
  for (const auto& r : summary.rows) {
    const bool local = r.voxel >= 0;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.parameter, r.component, r.covariate, r.voxel,
                       local ? domain.ix(r.voxel) : -1, local ? domain.iy(r.voxel) : -1, format_double(r.stats.mean),
                       format_double(r.stats.sd), format_double(r.stats.z), format_double(r.stats.lower),
                       format_double(r.stats.upper));
  }
  write_text(path, out);
}

void write_scores(const fs::path& path, const ScoreReport& report) {
  std::string out = "component,mad,coverage,mcsd,parameters\n";
  auto row = [&](const ComponentScore& s) {
    out += fmt::format("{},{},{},{},{}\n", s.component, format_double(s.mad), format_double(s.coverage),
                       format_double(s.mcsd), s.parameters);
  };
  for (const auto& s : report.components) row(s);
  row(report.overall);
  write_text(path, out);
}

void write_grid(const fs::path& path, const GridDomain& domain, const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (values.size() != domain.size()) throw DimensionMismatch("grid values do not match the domain");
  std::string out;
  for (int y = 0; y < domain.height; ++y) {
    for (int x = 0; x < domain.width; ++x) {
      if (x) out += ',';
      out += format_double(values(domain.index(x, y)));
    }
    out += '\n';
  }
  write_text(path, out);
}

void write_delta_fa(const fs::path& path, const DeltaFa& delta) {
  std::string out = "voxel,ix,iy,mean,sd,z,lower,upper\n";
  const auto summary = delta.summary();
  for (int s = 0; s < delta.domain.size(); ++s) {
    const auto& m = summary[s];
    out += fmt::format("{},{},{},{},{},{},{},{}\n", s, delta.domain.ix(s), delta.domain.iy(s), format_double(m.mean),
                       format_double(m.sd), format_double(m.z), format_double(m.lower), format_double(m.upper));
  }
  write_text(path, out);
}

json suite_to_json(const validation::SuiteReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"observed", c.observed},
                      {"reference", c.reference},
                      {"tolerance", c.tolerance},
                      {"passed", c.passed}});
  }
  return {{"suite", report.suite}, {"passed", report.passed()}, {"checks", checks}};
}

namespace {

std::string creation_time() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(epoch, &end, 10);
    if (end != epoch && *end == '\0') t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void write_manifest(const fs::path& dir, const Manifest& manifest) {
  json inputs = json::array();
  for (const auto& p : manifest.inputs) inputs.push_back({{"file", p.filename().string()}, {"sha256", sha256_file(p)}});
  json outputs = json::array();
  for (const auto& name : manifest.outputs) {
    outputs.push_back({{"file", name}, {"sha256", sha256_file(dir / name)}});
  }
  const json m = {
      {"command", manifest.command},
      {"config", manifest.config},
      {"config_sha256", sha256_hex(manifest.config.dump())},
      {"seed", manifest.seed},
      {"versions",
       {{"tensorfield", TENSORFIELD_VERSION},
        {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
        {"boost", BOOST_LIB_VERSION},
        {"compiler", __VERSION__}}},
      {"timestamps", {{"created", creation_time()}}},
      {"inputs", inputs},
      {"outputs", outputs}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace tensorfield::io
