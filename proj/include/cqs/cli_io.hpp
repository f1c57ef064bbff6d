#pragma once

#include "cqs/central_subspace.hpp"
#include "cqs/cqs_estimator.hpp"
#include "cqs/dataset.hpp"
#include "cqs/simulation.hpp"

#include <json.hpp>

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cqs::io {

inline constexpr const char* kVersion = "0.1.0";

Dataset parse_csv(std::istream& in, const std::string& response, const std::string& source = "<stream>");
Dataset load_csv(const std::string& path, const std::string& response);
void write_csv(const std::string& path, const Dataset& data);

/// Predictor names of the ozone file, in file order; the response is O3.
const std::vector<std::string>& ozone_predictors();
void validate_ozone_schema(const Dataset& data);

using KeyValues = std::map<std::string, std::string>;

/// Flat `key = value` lines; '#' starts a comment. Keys are normalized to
/// lower case with '_' read as '-'.
KeyValues read_config_file(const std::string& path);
void reject_unknown_keys(const KeyValues& values, const std::set<std::string>& allowed);

std::vector<double> parse_tau_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

struct Meta {
  std::uint64_t seed = 0;
  std::optional<std::string> timestamp;
};

/// --timestamp wins, then SOURCE_DATE_EPOCH; absent otherwise.
std::optional<std::string> resolve_timestamp(const std::optional<std::string>& flag);
nlohmann::json meta_json(const Meta& meta);

nlohmann::json basis_to_json(const Basis<double>& basis, const std::vector<std::string>& names);
Basis<double> basis_from_json(const nlohmann::json& j);

struct DirectionReport {
  double tau = 0.5;
  CqsEstimate<double> estimate;
};

DirectionReport estimate_direction(const Dataset& data, double tau, std::optional<int> d_tau,
                                   std::optional<int> cs_dim);
nlohmann::json direction_json(const DirectionReport& report, const std::vector<std::string>& names);

struct BootstrapOptions {
  int resamples = 500;
  int size = 100;
  bool with_replacement = true;
  std::uint64_t seed = 1;
  std::optional<int> d_tau;
  std::optional<int> cs_dim;
};

struct BootstrapCell {
  double tau = 0.5;
  int resamples = 0;
  int size = 0;
  int successes = 0;
  int failures = 0;
  double mean_error = 0;
  double sd_error = 0;
  Basis<double> full_sample;
  int d_tau = 0;
  int cs_dim = 0;
  std::vector<std::string> failure_messages;
};

/// Mean estimation error between resample estimates and the full-sample
/// estimate. Resamples use the full-sample dimensions unless overridden.
BootstrapCell bootstrap_tau(const Dataset& data, double tau, const BootstrapOptions& options);
nlohmann::json bootstrap_json(const BootstrapCell& cell);

nlohmann::json cell_json(const sim::CellReport& cell, bool timing);
std::string cells_table(const std::vector<sim::CellReport>& cells);

/// Maps a library error kind to the process exit code.
int exit_code(ErrorKind kind);

/// Entry point of the command-line tool.
int run_cli(int argc, const char* const* argv);

}  // namespace cqs::io
