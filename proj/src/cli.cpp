#include "cqs/cli_io.hpp"

#include "cqs/error.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace cqs::io {

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string output = "-";
  std::string format = "json";
  std::optional<std::string> timestamp;
  std::string config;
};

struct EstimateArgs {
  std::string input;
  std::string response = "Y";
  std::string tau = "0.5";
  std::optional<int> d_tau;
  std::optional<int> cs_dim;
  std::string schema = "none";
};

struct SimulateArgs {
  std::string preset;
  std::string model;
  int n = 600;
  int p = 10;
  std::string error = "normal";
  std::string cov = "independent";
  std::string tau;
  int replications = 100;
  int threads = 0;
  std::optional<int> d_tau;
  std::optional<int> cs_dim;
  std::string functional;
  bool raw_columns = false;
  std::string consistency;
  bool timing = false;
};

struct BootstrapArgs {
  EstimateArgs data;
  int resamples = 500;
  int size = 100;
  bool without_replacement = false;
};

struct DimensionArgs {
  std::string eigenvalues;
  long n = 0;
  std::string input;
  std::string response = "Y";
  std::string source = "sir";
  double tau = 0.5;
  std::optional<double> penalty;
  std::optional<int> cs_dim;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--output", c.output, "Output path, '-' for stdout");
  cmd->add_option("--format", c.format, "json or table")->check(CLI::IsMember({"json", "table"}));
  cmd->add_option("--timestamp", c.timestamp, "Timestamp recorded in the report metadata");
  cmd->add_option("--config", c.config, "Flat key = value file");
}

void add_data(CLI::App* cmd, EstimateArgs& e) {
  cmd->add_option("--input", e.input, "CSV file with a header row")->required();
  cmd->add_option("--response", e.response, "Response column name");
  cmd->add_option("--tau", e.tau, "Comma-separated quantile levels");
  cmd->add_option("--d-tau", e.d_tau, "Subspace dimension (selected when omitted)");
  cmd->add_option("--cs-dim", e.cs_dim, "Initial reduction dimension (selected when omitted)");
  cmd->add_option("--schema", e.schema, "none or ozone")->check(CLI::IsMember({"none", "ozone"}));
}

/// Long option names of a subcommand, without the leading dashes.
std::set<std::string> option_keys(const CLI::App* cmd) {
  std::set<std::string> keys;
  for (const CLI::Option* opt : cmd->get_options()) {
    for (const auto& name : opt->get_lnames())
      if (name != "help" && name != "config") keys.insert(name);
  }
  return keys;
}

bool mentioned(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  for (const auto& a : args)
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  return false;
}

std::optional<std::string> config_path(const std::vector<std::string>& args) {
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) return args[k + 1];
    if (args[k].rfind("--config=", 0) == 0) return args[k].substr(9);
  }
  return std::nullopt;
}

void emit(const Common& common, const std::string& text) {
  if (common.output == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(common.output);
  if (!out) throw Error(ErrorKind::Configuration, "cannot write '" + common.output + "'");
  out << text;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

Meta make_meta(const Common& common) { return {common.seed, resolve_timestamp(common.timestamp)}; }

Dataset load_for(const EstimateArgs& e) {
  Dataset data = load_csv(e.input, e.response);
  if (e.schema == "ozone") validate_ozone_schema(data);
  return data;
}

int cmd_estimate(const Common& common, const EstimateArgs& args) {
  const auto taus = parse_tau_list(args.tau);
  const Dataset data = load_for(args);
  nlohmann::json dirs = nlohmann::json::array();
  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << std::left << std::setw(8) << "tau" << std::setw(6) << "d_tau";
  for (const auto& name : data.names) table << std::right << std::setw(11) << name;
  table << '\n';
  for (double tau : taus) {
    const auto report = estimate_direction(data, tau, args.d_tau, args.cs_dim);
    dirs.push_back(direction_json(report, data.names));
    const auto& b = report.estimate.basis.columns;
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
      table << std::left << std::setw(8) << tau << std::setw(6) << report.estimate.d_tau;
      for (Eigen::Index r = 0; r < b.rows(); ++r) table << std::right << std::setw(11) << b(r, c);
      table << '\n';
    }
  }
  nlohmann::json j;
  j["meta"] = meta_json(make_meta(common));
  j["directions"] = dirs;
  emit(common, common.format == "json" ? dump(j) : table.str());
  return 0;
}

int cmd_simulate(const Common& common, const SimulateArgs& args) {
  std::vector<sim::CellRequest> requests;
  if (!args.preset.empty() && !args.model.empty())
    throw Error(ErrorKind::Configuration, "give either a preset or a model, not both");
  if (!args.preset.empty()) {
    requests = sim::preset(args.preset, common.seed);
    if (!args.tau.empty())
      for (auto& r : requests) r.taus = parse_tau_list(args.tau);
  } else if (!args.model.empty()) {
    sim::CellRequest r;
    r.spec = {sim::parse_model(args.model), args.n, args.p, sim::parse_error_dist(args.error),
              sim::parse_covariance(args.cov), common.seed};
    r.setup = sim::default_setup(r.spec.model);
    r.taus = parse_tau_list(args.tau.empty() ? "0.25,0.5,0.75" : args.tau);
    requests.push_back(r);
  }
  if (requests.empty()) throw Error(ErrorKind::Configuration, "no simulation cells requested");
  if (args.replications < 1) throw Error(ErrorKind::Configuration, "replications must be at least 1");
  for (auto& r : requests) {
    if (args.d_tau) r.setup.d_tau = args.d_tau;
    if (args.cs_dim) r.setup.cs_dim = args.cs_dim;
    if (!args.functional.empty()) {
      if (args.functional == "quantile") r.setup.functional = sim::Functional::Quantile;
      else if (args.functional == "mean") r.setup.functional = sim::Functional::Mean;
      else throw Error(ErrorKind::Configuration, "functional must be quantile or mean");
    }
    if (args.raw_columns) r.setup.normalize_columns = false;
    sim::true_basis(r.spec.model, r.spec.p);
  }
  std::optional<std::vector<int>> grid;
  if (!args.consistency.empty()) {
    if (requests.size() != 1) throw Error(ErrorKind::Configuration, "a consistency study takes a single model");
    grid = parse_int_list(args.consistency);
    if (grid->size() < 3) throw Error(ErrorKind::Configuration, "a consistency study needs at least three sizes");
  }

  nlohmann::json j;
  j["meta"] = meta_json(make_meta(common));
  std::vector<sim::CellReport> cells;
  nlohmann::json studies = nlohmann::json::array();
  if (grid) {
    for (double tau : requests[0].taus) {
      const auto study = sim::consistency_study(requests[0].spec, *grid, tau, requests[0].setup, args.replications,
                                                args.threads);
      cells.insert(cells.end(), study.cells.begin(), study.cells.end());
      nlohmann::json s;
      s["tau"] = tau;
      s["sizes"] = *grid;
      s["valid"] = study.valid;
      s["slope"] = study.fit.slope;
      s["intercept"] = study.fit.intercept;
      s["r_squared"] = study.fit.r_squared;
      studies.push_back(s);
    }
    j["consistency"] = studies;
  } else {
    for (const auto& r : requests)
      for (double tau : r.taus) cells.push_back(sim::run_cell(r.spec, tau, r.setup, args.replications, args.threads));
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells) rows.push_back(cell_json(c, args.timing));
  j["cells"] = rows;
  std::string text = common.format == "json" ? dump(j) : cells_table(cells);
  if (common.format == "table" && grid) {
    std::ostringstream os;
    for (const auto& s : studies)
      os << "tau " << s["tau"].get<double>() << ": slope " << s["slope"].get<double>() << ", intercept "
         << s["intercept"].get<double>() << ", R^2 " << s["r_squared"].get<double>() << '\n';
    text += os.str();
  }
  emit(common, text);
  bool any_failed = false;
  for (const auto& c : cells) any_failed = any_failed || c.failed;
  return any_failed ? 4 : 0;
}

int cmd_bootstrap(const Common& common, const BootstrapArgs& args) {
  const auto taus = parse_tau_list(args.data.tau);
  const Dataset data = load_for(args.data);
  BootstrapOptions options;
  options.resamples = args.resamples;
  options.size = args.size;
  options.with_replacement = !args.without_replacement;
  options.seed = common.seed;
  options.d_tau = args.data.d_tau;
  options.cs_dim = args.data.cs_dim;
  nlohmann::json j;
  j["meta"] = meta_json(make_meta(common));
  nlohmann::json cells = nlohmann::json::array();
  std::ostringstream table;
  table << std::fixed << std::setprecision(4) << std::left << std::setw(8) << "tau" << std::right << std::setw(12)
        << "mean error" << std::setw(10) << "sd" << std::setw(8) << "ok" << std::setw(8) << "failed" << '\n';
  for (double tau : taus) {
    const auto cell = bootstrap_tau(data, tau, options);
    cells.push_back(bootstrap_json(cell));
    table << std::left << std::setw(8) << tau << std::right << std::setw(12) << cell.mean_error << std::setw(10)
          << cell.sd_error << std::setw(8) << cell.successes << std::setw(8) << cell.failures << '\n';
  }
  j["bootstrap"] = cells;
  emit(common, common.format == "json" ? dump(j) : table.str());
  return 0;
}

int cmd_dimension(const Common& common, const DimensionArgs& args) {
  Vector values;
  long n = args.n;
  std::string source;
  if (!args.eigenvalues.empty()) {
    if (!args.input.empty()) throw Error(ErrorKind::Configuration, "give either eigenvalues or an input file");
    if (n < 1) throw Error(ErrorKind::Configuration, "hand-fed eigenvalues need --n");
    const auto list = parse_double_list(args.eigenvalues);
    values = Eigen::Map<const Vector>(list.data(), static_cast<Eigen::Index>(list.size()));
    source = "given";
  } else if (!args.input.empty()) {
    CheckLoss<double> check(args.tau);
    const Dataset data = load_csv(args.input, args.response);
    n = static_cast<long>(data.x.rows());
    CqsConfig<double> config;
    config.tau = args.tau;
    config.initial_cs_dim = args.cs_dim;
    if (args.source == "sir") {
      SirConfig sc;
      sc.n_slices = default_slice_count(data.x.rows(), data.x.cols());
      values = sir(data.x, data.y, sc).eigenvalues;
    } else {
      values = estimate_cqs(data.x, data.y, config).trace.singular_values;
    }
    source = args.source;
  } else {
    throw Error(ErrorKind::Configuration, "dimension needs --eigenvalues or --input");
  }
  const auto bic = bic_dimension(values, n, args.penalty);
  nlohmann::json j;
  j["meta"] = meta_json(make_meta(common));
  j["dimension"] = {{"source", source},
                    {"n", n},
                    {"p", values.size()},
                    {"selected", bic.dimension},
                    {"penalty", bic.penalty},
                    {"values", std::vector<double>(values.data(), values.data() + values.size())},
                    {"profile", bic.profile}};
  std::ostringstream table;
  table << "selected " << bic.dimension << " (penalty " << bic.penalty << ")\n";
  for (std::size_t k = 0; k < bic.profile.size(); ++k) table << "G(" << k + 1 << ") = " << bic.profile[k] << '\n';
  emit(common, common.format == "json" ? dump(j) : table.str());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Central quantile subspace estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  EstimateArgs est;
  SimulateArgs simargs;
  BootstrapArgs boot;
  DimensionArgs dim;

  auto* estimate = app.add_subcommand("estimate", "Estimate directions from a CSV file");
  add_common(estimate, common);
  add_data(estimate, est);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of the estimator");
  add_common(simulate, common);
  simulate->add_option("--preset", simargs.preset, "Named batch of cells");
  simulate->add_option("--model", simargs.model, "Model name");
  simulate->add_option("--n", simargs.n, "Sample size");
  simulate->add_option("--p", simargs.p, "Predictor count");
  simulate->add_option("--error", simargs.error, "normal, t3 or chisq3");
  simulate->add_option("--cov", simargs.cov, "independent or ar_half");
  simulate->add_option("--tau", simargs.tau, "Comma-separated quantile levels");
  simulate->add_option("--replications", simargs.replications, "Replications per cell");
  simulate->add_option("--threads", simargs.threads, "Worker threads, 0 for all cores");
  simulate->add_option("--d-tau", simargs.d_tau, "Subspace dimension (selected when omitted)");
  simulate->add_option("--cs-dim", simargs.cs_dim, "Initial reduction dimension");
  simulate->add_option("--functional", simargs.functional, "quantile or mean");
  simulate->add_flag("--raw-columns", simargs.raw_columns, "Do not rescale iterates before the eigendecomposition");
  simulate->add_option("--consistency", simargs.consistency, "Comma-separated sample sizes for a root-n study");
  simulate->add_flag("--timing", simargs.timing, "Include wall time in the report");

  auto* bootstrap = app.add_subcommand("bootstrap", "Bootstrap stability of the estimate");
  add_common(bootstrap, common);
  add_data(bootstrap, boot.data);
  bootstrap->add_option("--resamples", boot.resamples, "Number of resamples");
  bootstrap->add_option("--size", boot.size, "Rows per resample");
  bootstrap->add_flag("--without-replacement", boot.without_replacement, "Sample rows without replacement");

  auto* dimension = app.add_subcommand("dimension", "Dimension selection profile");
  add_common(dimension, common);
  dimension->add_option("--eigenvalues", dim.eigenvalues, "Comma-separated eigenvalues, non-increasing");
  dimension->add_option("--n", dim.n, "Sample size for hand-fed eigenvalues");
  dimension->add_option("--input", dim.input, "CSV file with a header row");
  dimension->add_option("--response", dim.response, "Response column name");
  dimension->add_option("--source", dim.source, "sir or cqs")->check(CLI::IsMember({"sir", "cqs"}));
  dimension->add_option("--tau", dim.tau, "Quantile level for the cqs source");
  dimension->add_option("--penalty", dim.penalty, "Override the penalty constant");
  dimension->add_option("--cs-dim", dim.cs_dim, "Initial reduction dimension for the cqs source");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (const auto path = config_path(args); path && !args.empty()) {
      const CLI::App* sub = nullptr;
      for (const auto* cmd : {estimate, simulate, bootstrap, dimension})
        if (args[0] == cmd->get_name()) sub = cmd;
      if (!sub) throw Error(ErrorKind::Configuration, "--config must follow a subcommand");
      const auto values = read_config_file(*path);
      reject_unknown_keys(values, option_keys(sub));
      for (const auto& [key, value] : values)
        if (!mentioned(args, key)) args.push_back("--" + key + "=" + value);
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);

    if (*estimate) return cmd_estimate(common, est);
    if (*simulate) return cmd_simulate(common, simargs);
    if (*bootstrap) return cmd_bootstrap(common, boot);
    return cmd_dimension(common, dim);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}

}  // namespace cqs::io
