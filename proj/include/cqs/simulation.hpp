#pragma once

#include "cqs/central_subspace.hpp"
#include "cqs/cqs_estimator.hpp"
#include "cqs/dataset.hpp"
#include "cqs/linalg.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace cqs::sim {

enum class ModelId { Ex1a, I, II, III, IV, Ex2a, V, VI, VII, VIII, Hetero2c, Ex3 };
enum class ErrorDist { Normal, T3, ChiSq3 };
enum class Covariance { Independent, ArHalf };

std::string to_string(ModelId id);
std::string to_string(ErrorDist dist);
std::string to_string(Covariance cov);
ModelId parse_model(const std::string& name);
ErrorDist parse_error_dist(const std::string& name);
Covariance parse_covariance(const std::string& name);

struct ModelSpec {
  ModelId model = ModelId::Ex1a;
  int n = 600;
  int p = 10;
  ErrorDist error = ErrorDist::Normal;
  Covariance cov = Covariance::Independent;
  std::uint64_t seed = 1;
};

struct GeneratedData {
  Dataset data;
  Basis<double> truth;
  Vector noise;
};

/// Replaces the drawn error vector (length n) when set.
using NoiseHook = std::function<Vector(Eigen::Index n)>;

/// Number of leading coordinates the model equation uses.
int active_coordinates(ModelId id);
Basis<double> true_basis(ModelId id, int p);

/// Generator for replication `replication` of a cell: streams for distinct
/// (seed, replication) pairs are independent of one another.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t replication);

Vector draw_errors(ErrorDist dist, Eigen::Index n, std::mt19937_64& rng);
Matrix draw_predictors(Covariance cov, Eigen::Index n, Eigen::Index p, std::mt19937_64& rng);
double model_response(ModelId id, const Eigen::Ref<const Vector>& x, double eps);

GeneratedData generate(const ModelSpec& spec, std::uint64_t replication = 0, const NoiseHook& noise = {});

enum class Functional { Quantile, Mean };

struct EstimatorSetup {
  std::optional<int> cs_dim;
  std::optional<int> d_tau;
  Functional functional = Functional::Quantile;
  bool normalize_columns = true;
};

/// The setup each model is studied under: its known dimensions and functional.
EstimatorSetup default_setup(ModelId id);

struct Replication {
  bool ok = false;
  double error = 0;
  int cs_dim = 0;
  int d_tau = 0;
  std::string failure;
};

struct CellReport {
  ModelSpec spec;
  double tau = 0.5;
  int requested = 0;
  int successes = 0;
  int failures = 0;
  double mean = 0;
  double sd = 0;
  double wall_seconds = 0;
  bool failed = false;  // more than 20% of replications failed
  std::vector<Replication> replications;
};

/// Runs one replication: generate, estimate, score against the truth.
Replication run_replication(const ModelSpec& spec, double tau, const EstimatorSetup& setup,
                            std::uint64_t replication, const NoiseHook& noise = {});

/// N replications with per-replication streams; threads <= 0 uses hardware
/// concurrency. Results are assembled in replication order.
CellReport run_cell(const ModelSpec& spec, double tau, const EstimatorSetup& setup, int replications,
                    int threads = 0);

struct LineFit {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
};

/// Least-squares line of mean error on 1/sqrt(n).
LineFit fit_root_n(const std::vector<int>& sizes, const std::vector<double>& mean_errors);

struct ConsistencyReport {
  std::vector<CellReport> cells;
  LineFit fit;
  bool valid = false;
};

ConsistencyReport consistency_study(const ModelSpec& base, const std::vector<int>& sizes, double tau,
                                    const EstimatorSetup& setup, int replications, int threads = 0);

struct CellRequest {
  ModelSpec spec;
  std::vector<double> taus;
  EstimatorSetup setup;
};

/// Named batches of simulation cells.
std::vector<CellRequest> preset(const std::string& name, std::uint64_t seed);
std::vector<std::string> preset_names();

double mean_of(const std::vector<double>& values);
double sd_of(const std::vector<double>& values);

}  // namespace cqs::sim
