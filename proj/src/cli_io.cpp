#include "cqs/cli_io.hpp"

#include "cqs/error.hpp"
#include "cqs/subspace_metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace cqs::io {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string normalize_key(std::string key) {
  for (auto& c : key) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (c == '_') c = '-';
  }
  return key;
}

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& response, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Schema, source + ": empty file, header row expected");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  std::vector<std::string> header = split(line, ',');
  for (auto& h : header) h = unquote(h);
  const auto it = std::find(header.begin(), header.end(), response);
  if (it == header.end()) throw Error(ErrorKind::Schema, source + ": response column '" + response + "' not found");
  const auto response_col = static_cast<std::size_t>(it - header.begin());

  std::vector<std::vector<double>> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << source << ": row " << row << " has " << cells.size() << " cells, header has " << header.size();
      throw Error(ErrorKind::Schema, os.str());
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = to_double(unquote(cells[c]));
      if (!v) {
        std::ostringstream os;
        os << source << ": row " << row << ", column '" << header[c] << "': "
           << (cells[c].empty() ? "blank cell" : "non-numeric value '" + cells[c] + "'");
        throw Error(ErrorKind::Parse, os.str());
      }
      values[c] = *v;
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw Error(ErrorKind::Schema, source + ": no data rows");

  Dataset data;
  data.response_name = response;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(header.size() - 1);
  data.x.resize(n, p);
  data.y.resize(n);
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != response_col) data.names.push_back(header[c]);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c == response_col) data.y(i) = r[c];
      else data.x(i, j++) = r[c];
    }
  }
  return data;
}

Dataset load_csv(const std::string& path, const std::string& response) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Configuration, "cannot open input file '" + path + "'");
  return parse_csv(in, response, path);
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Configuration, "cannot write '" + path + "'");
  out << std::setprecision(17);
  for (const auto& name : data.names) out << name << ',';
  out << data.response_name << '\n';
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out << data.x(i, j) << ',';
    out << data.y(i) << '\n';
  }
}

const std::vector<std::string>& ozone_predictors() {
  static const std::vector<std::string> names = {"TMP", "InvHt", "PR", "VIS", "HT", "HUM", "TMP2", "WindSpeed"};
  return names;
}

void validate_ozone_schema(const Dataset& data) {
  if (data.response_name != "O3") throw Error(ErrorKind::Schema, "ozone response column must be O3");
  const auto& expected = ozone_predictors();
  for (const auto& name : expected)
    if (std::find(data.names.begin(), data.names.end(), name) == data.names.end())
      throw Error(ErrorKind::Schema, "ozone file lacks predictor column '" + name + "'");
  if (data.names.size() != expected.size())
    throw Error(ErrorKind::Schema, "ozone file must have exactly 8 predictors besides O3");
  if (data.x.rows() < 50) throw Error(ErrorKind::Schema, "ozone file has too few rows");
}

KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Configuration, "cannot open config file '" + path + "'");
  KeyValues out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Configuration, path + ":" + std::to_string(lineno) + ": expected key = value");
    const auto key = normalize_key(trim(line.substr(0, eq)));
    const auto value = unquote(trim(line.substr(eq + 1)));
    if (key.empty()) throw Error(ErrorKind::Configuration, path + ":" + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

void reject_unknown_keys(const KeyValues& values, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : values)
    if (!allowed.count(key)) throw Error(ErrorKind::Configuration, "unknown configuration key '" + key + "'");
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    const auto v = to_double(part);
    if (!v) throw Error(ErrorKind::Configuration, "not a number: '" + part + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw Error(ErrorKind::Configuration, "empty list");
  return out;
}

std::vector<double> parse_tau_list(const std::string& text) {
  auto taus = parse_double_list(text);
  for (double t : taus)
    if (!(t > 0 && t < 1)) throw Error(ErrorKind::Configuration, "quantile level outside (0,1): " + std::to_string(t));
  return taus;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& part : split(text, ',')) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size())
      throw Error(ErrorKind::Configuration, "not an integer: '" + part + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorKind::Configuration, "empty list");
  return out;
}

std::optional<std::string> resolve_timestamp(const std::optional<std::string>& flag) {
  if (flag) return flag;
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (!epoch || !*epoch) return std::nullopt;
  char* end = nullptr;
  const long long secs = std::strtoll(epoch, &end, 10);
  if (*end != '\0' || secs < 0) throw Error(ErrorKind::Configuration, "SOURCE_DATE_EPOCH is not a timestamp");
  const std::time_t t = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

nlohmann::json meta_json(const Meta& meta) {
  nlohmann::json j;
  j["seed"] = meta.seed;
  j["version"] = kVersion;
  j["timestamp"] = meta.timestamp ? nlohmann::json(*meta.timestamp) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json basis_to_json(const Basis<double>& basis, const std::vector<std::string>& names) {
  nlohmann::json j;
  j["scale"] = basis.scale == Scale::OriginalX ? "original-x" : "standardized-z";
  j["names"] = names;
  nlohmann::json cols = nlohmann::json::array();
  for (Eigen::Index c = 0; c < basis.dim(); ++c) {
    std::vector<double> col(basis.columns.col(c).data(), basis.columns.col(c).data() + basis.ambient());
    cols.push_back(col);
  }
  j["columns"] = cols;
  return j;
}

Basis<double> basis_from_json(const nlohmann::json& j) {
  try {
    const auto& cols = j.at("columns");
    if (!cols.is_array() || cols.empty()) throw Error(ErrorKind::Schema, "basis has no columns");
    const auto p = static_cast<Eigen::Index>(cols.at(0).size());
    Matrix m(p, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (static_cast<Eigen::Index>(cols[c].size()) != p) throw Error(ErrorKind::Schema, "ragged basis columns");
      for (Eigen::Index r = 0; r < p; ++r) m(r, static_cast<Eigen::Index>(c)) = cols[c][static_cast<std::size_t>(r)].get<double>();
    }
    const auto scale = j.value("scale", std::string("original-x")) == "standardized-z" ? Scale::StandardizedZ
                                                                                       : Scale::OriginalX;
    return make_basis(m, scale);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("malformed basis: ") + e.what());
  }
}

DirectionReport estimate_direction(const Dataset& data, double tau, std::optional<int> d_tau,
                                   std::optional<int> cs_dim) {
  CqsConfig<double> config;
  config.tau = tau;
  config.d_tau = d_tau;
  config.initial_cs_dim = cs_dim;
  DirectionReport report;
  report.tau = tau;
  report.estimate = estimate_cqs(data.x, data.y, config);
  canonicalize_signs(report.estimate.basis.columns);
  return report;
}

namespace {

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json bic_json(const std::optional<BicResult>& bic) {
  if (!bic) return nullptr;
  return {{"selected", bic->dimension}, {"penalty", bic->penalty}, {"profile", bic->profile}};
}

}  // namespace

nlohmann::json direction_json(const DirectionReport& report, const std::vector<std::string>& names) {
  const auto& est = report.estimate;
  nlohmann::json j;
  j["tau"] = report.tau;
  j["d_tau"] = est.d_tau;
  j["cs_dim"] = est.cs_dim;
  j["basis"] = basis_to_json(est.basis, names);
  j["sir_eigenvalues"] = vector_json(est.sir_eigenvalues);
  j["singular_values"] = est.trace.singular_values.size() ? vector_json(est.trace.singular_values) : nlohmann::json(nullptr);
  j["cs_selection"] = bic_json(est.cs_selection);
  j["d_tau_selection"] = bic_json(est.d_tau_selection);
  return j;
}

BootstrapCell bootstrap_tau(const Dataset& data, double tau, const BootstrapOptions& options) {
  if (options.resamples < 1) throw Error(ErrorKind::Configuration, "bootstrap needs at least one resample");
  if (options.size < 2) throw Error(ErrorKind::Configuration, "bootstrap resample size must be at least 2");
  const auto n = data.x.rows();
  if (!options.with_replacement && options.size > n)
    throw Error(ErrorKind::Configuration, "sampling without replacement needs size <= n");

  BootstrapCell cell;
  cell.tau = tau;
  cell.resamples = options.resamples;
  cell.size = options.size;
  const auto full = estimate_direction(data, tau, options.d_tau, options.cs_dim);
  cell.full_sample = full.estimate.basis;
  cell.d_tau = full.estimate.d_tau;
  cell.cs_dim = full.estimate.cs_dim;

  std::vector<double> errors;
  for (int b = 0; b < options.resamples; ++b) {
    auto rng = sim::make_rng(options.seed, static_cast<std::uint64_t>(b));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(options.size));
    if (options.with_replacement) {
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), Eigen::Index{0});
      std::shuffle(all.begin(), all.end(), rng);
      std::copy_n(all.begin(), options.size, rows.begin());
    }
    Matrix x(options.size, data.x.cols());
    Vector y(options.size);
    for (int i = 0; i < options.size; ++i) {
      x.row(i) = data.x.row(rows[static_cast<std::size_t>(i)]);
      y(i) = data.y(rows[static_cast<std::size_t>(i)]);
    }
    try {
      CqsConfig<double> config;
      config.tau = tau;
      config.d_tau = cell.d_tau;
      config.initial_cs_dim = cell.cs_dim;
      const auto est = estimate_cqs(x, y, config);
      errors.push_back(estimation_error(est.basis, cell.full_sample));
    } catch (const Error& e) {
      ++cell.failures;
      cell.failure_messages.push_back("resample " + std::to_string(b) + ": " + e.what());
    }
  }
  cell.successes = static_cast<int>(errors.size());
  cell.mean_error = sim::mean_of(errors);
  cell.sd_error = sim::sd_of(errors);
  return cell;
}

nlohmann::json bootstrap_json(const BootstrapCell& cell) {
  nlohmann::json j;
  j["tau"] = cell.tau;
  j["resamples"] = cell.resamples;
  j["size"] = cell.size;
  j["successes"] = cell.successes;
  j["failures"] = cell.failures;
  j["mean_error"] = cell.mean_error;
  j["sd_error"] = cell.sd_error;
  j["d_tau"] = cell.d_tau;
  j["cs_dim"] = cell.cs_dim;
  j["failure_messages"] = cell.failure_messages;
  return j;
}

nlohmann::json cell_json(const sim::CellReport& cell, bool timing) {
  nlohmann::json j;
  j["model"] = sim::to_string(cell.spec.model);
  j["n"] = cell.spec.n;
  j["p"] = cell.spec.p;
  j["error_dist"] = sim::to_string(cell.spec.error);
  j["cov"] = sim::to_string(cell.spec.cov);
  j["seed"] = cell.spec.seed;
  j["tau"] = cell.tau;
  j["replications"] = cell.requested;
  j["successes"] = cell.successes;
  j["failures"] = cell.failures;
  j["failed"] = cell.failed;
  j["mean"] = std::isfinite(cell.mean) ? nlohmann::json(cell.mean) : nlohmann::json(nullptr);
  j["sd"] = std::isfinite(cell.sd) ? nlohmann::json(cell.sd) : nlohmann::json(nullptr);
  if (timing) j["wall_seconds"] = cell.wall_seconds;
  nlohmann::json fails = nlohmann::json::array();
  for (std::size_t k = 0; k < cell.replications.size(); ++k)
    if (!cell.replications[k].ok) fails.push_back({{"replication", k}, {"reason", cell.replications[k].failure}});
  j["failure_log"] = fails;
  return j;
}

std::string cells_table(const std::vector<sim::CellReport>& cells) {
  // Rows are (model, n, p, error, cov); columns are the distinct tau values.
  std::vector<double> taus;
  for (const auto& c : cells)
    if (std::find(taus.begin(), taus.end(), c.tau) == taus.end()) taus.push_back(c.tau);
  std::sort(taus.begin(), taus.end());
  struct Row {
    std::string label;
    std::map<double, std::string> entries;
  };
  std::vector<Row> rows;
  for (const auto& c : cells) {
    std::ostringstream label;
    label << std::left << std::setw(8) << sim::to_string(c.spec.model) << std::right << std::setw(6) << c.spec.n
          << std::setw(5) << c.spec.p << "  " << std::left << std::setw(7) << sim::to_string(c.spec.error)
          << std::setw(12) << sim::to_string(c.spec.cov);
    auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& r) { return r.label == label.str(); });
    if (it == rows.end()) {
      rows.push_back({label.str(), {}});
      it = rows.end() - 1;
    }
    std::ostringstream cellstr;
    cellstr << std::fixed << std::setprecision(4) << c.mean << " (" << c.sd << ")";
    if (c.failed) cellstr << '!';
    else if (c.failures > 0) cellstr << '*';
    it->entries[c.tau] = cellstr.str();
  }
  std::ostringstream os;
  os << std::left << std::setw(8) << "model" << std::right << std::setw(6) << "n" << std::setw(5) << "p" << "  "
     << std::left << std::setw(7) << "error" << std::setw(12) << "cov";
  for (double t : taus) os << std::right << std::setw(18) << t;
  os << '\n';
  for (const auto& r : rows) {
    os << r.label;
    for (double t : taus) {
      const auto e = r.entries.find(t);
      os << std::right << std::setw(18) << (e == r.entries.end() ? "-" : e->second);
    }
    os << '\n';
  }
  return os.str();
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Configuration:
    case ErrorKind::Usage:
    case ErrorKind::ParameterDomain:
      return 2;
    case ErrorKind::Parse:
    case ErrorKind::Schema:
      return 3;
    default:
      return 4;
  }
}

}  // namespace cqs::io
