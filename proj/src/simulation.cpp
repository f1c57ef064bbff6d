#include "cqs/simulation.hpp"

#include "cqs/error.hpp"
#include "cqs/subspace_metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace cqs::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct ModelInfo {
  ModelId id;
  const char* name;
};

constexpr ModelInfo kModels[] = {
    {ModelId::Ex1a, "ex1a"}, {ModelId::I, "I"},       {ModelId::II, "II"},     {ModelId::III, "III"},
    {ModelId::IV, "IV"},     {ModelId::Ex2a, "ex2a"}, {ModelId::V, "V"},       {ModelId::VI, "VI"},
    {ModelId::VII, "VII"},   {ModelId::VIII, "VIII"}, {ModelId::Hetero2c, "hetero"}, {ModelId::Ex3, "ex3"},
};

}  // namespace

std::string to_string(ModelId id) {
  for (const auto& m : kModels)
    if (m.id == id) return m.name;
  return "unknown";
}

std::string to_string(ErrorDist dist) {
  switch (dist) {
    case ErrorDist::Normal: return "normal";
    case ErrorDist::T3: return "t3";
    case ErrorDist::ChiSq3: return "chisq3";
  }
  return "unknown";
}

std::string to_string(Covariance cov) { return cov == Covariance::Independent ? "independent" : "ar_half"; }

ModelId parse_model(const std::string& name) {
  for (const auto& m : kModels)
    if (name == m.name) return m.id;
  throw Error(ErrorKind::Configuration, "unknown model '" + name + "'");
}

ErrorDist parse_error_dist(const std::string& name) {
  if (name == "normal" || name == "N") return ErrorDist::Normal;
  if (name == "t3") return ErrorDist::T3;
  if (name == "chisq3") return ErrorDist::ChiSq3;
  throw Error(ErrorKind::Configuration, "unknown error distribution '" + name + "'");
}

Covariance parse_covariance(const std::string& name) {
  if (name == "independent") return Covariance::Independent;
  if (name == "ar_half") return Covariance::ArHalf;
  throw Error(ErrorKind::Configuration, "unknown covariance '" + name + "'");
}

int active_coordinates(ModelId id) {
  switch (id) {
    case ModelId::I: return 4;
    case ModelId::IV: return 1;
    default: return 2;
  }
}

Basis<double> true_basis(ModelId id, int p) {
  if (p < active_coordinates(id)) throw Error(ErrorKind::Configuration, "p is below the model's active coordinates");
  Matrix b;
  switch (id) {
    case ModelId::Ex1a:
      b = Matrix::Zero(p, 1);
      b(0, 0) = 3;
      b(1, 0) = 1;
      break;
    case ModelId::I:
      b = Matrix::Zero(p, 1);
      b.col(0).head(4).setOnes();
      break;
    case ModelId::II:
      b = Matrix::Zero(p, 1);
      b.col(0).head(2).setOnes();
      break;
    case ModelId::III:
      b = Matrix::Zero(p, 1);
      b(0, 0) = 1;
      b(1, 0) = 0.4;
      break;
    case ModelId::IV:
    case ModelId::Ex3:
      b = Matrix::Zero(p, 1);
      b(0, 0) = 1;
      break;
    default:
      b = Matrix::Zero(p, 2);
      b(0, 0) = 1;
      b(1, 1) = 1;
      break;
  }
  return make_basis(b);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t replication) {
  const std::uint64_t key = splitmix64(splitmix64(seed) ^ (replication * 0xd1b54a32d192ed03ULL + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(replication)};
  return std::mt19937_64(seq);
}

Vector draw_errors(ErrorDist dist, Eigen::Index n, std::mt19937_64& rng) {
  Vector e(n);
  switch (dist) {
    case ErrorDist::Normal: {
      std::normal_distribution<double> d;
      for (Eigen::Index i = 0; i < n; ++i) e(i) = d(rng);
      break;
    }
    case ErrorDist::T3: {
      std::student_t_distribution<double> d(3.0);
      for (Eigen::Index i = 0; i < n; ++i) e(i) = d(rng);
      break;
    }
    case ErrorDist::ChiSq3: {
      std::chi_squared_distribution<double> d(3.0);
      for (Eigen::Index i = 0; i < n; ++i) e(i) = d(rng);
      break;
    }
  }
  return e;
}

Matrix draw_predictors(Covariance cov, Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = d(rng);
  if (cov == Covariance::ArHalf) {
    Matrix sigma(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j) sigma(i, j) = std::pow(0.5, std::abs(static_cast<double>(i - j)));
    const Matrix l = sigma.llt().matrixL();
    x = x * l.transpose();
  }
  return x;
}

double model_response(ModelId id, const Eigen::Ref<const Vector>& x, double eps) {
  const double x1 = x(0);
  const double x2 = x.size() > 1 ? x(1) : 0.0;
  switch (id) {
    case ModelId::Ex1a: return 3 * x1 + x2 + eps;
    case ModelId::I: return x(0) + x(1) + x(2) + x(3) + eps;
    case ModelId::II: return std::exp(x1 + x2) + eps;
    case ModelId::III: return 1 + x1 + 0.4 * x2 + eps;
    case ModelId::IV: return x1 / ((1 + x1) * (1 + x1)) + eps;
    case ModelId::Ex2a: return x1 * x1 * x1 + x2 + eps;
    case ModelId::V: return x1 * x1 * x1 + std::exp(x2) + eps;
    case ModelId::VI: return x1 * (x1 + x2 + 1) + 0.5 * eps;
    case ModelId::VII: return x1 / (0.5 + (x2 + 1.5) * (x2 + 1.5)) + 0.5 * eps;
    case ModelId::VIII: return std::cos(1.5 * x1) + x2 * x2 * x2 / 2 + eps;
    case ModelId::Hetero2c: return x1 + x2 * x2 * x2 + 0.5 * x2 * eps;
    case ModelId::Ex3: return x1 * x1 * x1 + x2 * eps;
  }
  throw Error(ErrorKind::Configuration, "unknown model");
}

GeneratedData generate(const ModelSpec& spec, std::uint64_t replication, const NoiseHook& noise) {
  if (spec.n < 2) throw Error(ErrorKind::Configuration, "n must be at least 2");
  GeneratedData out;
  out.truth = true_basis(spec.model, spec.p);
  auto rng = make_rng(spec.seed, replication);
  out.data.x = draw_predictors(spec.cov, spec.n, spec.p, rng);
  out.noise = draw_errors(spec.error, spec.n, rng);
  if (noise) {
    out.noise = noise(spec.n);
    if (out.noise.size() != spec.n) throw Error(ErrorKind::Usage, "noise hook returned the wrong length");
  }
  out.data.y.resize(spec.n);
  for (int i = 0; i < spec.n; ++i) out.data.y(i) = model_response(spec.model, out.data.x.row(i).transpose(), out.noise(i));
  out.data.names.reserve(static_cast<std::size_t>(spec.p));
  for (int j = 0; j < spec.p; ++j) out.data.names.push_back("X" + std::to_string(j + 1));
  return out;
}

EstimatorSetup default_setup(ModelId id) {
  EstimatorSetup s;
  switch (id) {
    case ModelId::Ex1a:
    case ModelId::I:
    case ModelId::II:
    case ModelId::III:
    case ModelId::IV:
      s.cs_dim = 1;
      s.d_tau = 1;
      break;
    case ModelId::Ex3:
      s.cs_dim = 2;
      s.d_tau = 1;
      s.functional = Functional::Mean;
      break;
    default:
      s.cs_dim = 2;
      s.d_tau = 2;
      break;
  }
  return s;
}

Replication run_replication(const ModelSpec& spec, double tau, const EstimatorSetup& setup,
                            std::uint64_t replication, const NoiseHook& noise) {
  Replication r;
  try {
    const auto gen = generate(spec, replication, noise);
    CqsConfig<double> config;
    config.tau = tau;
    config.d_tau = setup.d_tau;
    config.initial_cs_dim = setup.cs_dim;
    config.iteration.normalize_columns = setup.normalize_columns;
    if (setup.functional == Functional::Mean) config.functional = mean_functional<double>();
    const auto est = estimate_cqs(gen.data.x, gen.data.y, config);
    r.error = estimation_error(est.basis, gen.truth);
    r.cs_dim = est.cs_dim;
    r.d_tau = est.d_tau;
    r.ok = true;
  } catch (const Error& e) {
    r.failure = std::string(cqs::to_string(e.kind())) + ": " + e.what();
  }
  return r;
}

CellReport run_cell(const ModelSpec& spec, double tau, const EstimatorSetup& setup, int replications, int threads) {
  if (replications < 1) throw Error(ErrorKind::Configuration, "replication count must be at least 1");
  CheckLoss<double> check(tau);
  const auto start = std::chrono::steady_clock::now();
  CellReport cell;
  cell.spec = spec;
  cell.tau = tau;
  cell.requested = replications;
  cell.replications.resize(static_cast<std::size_t>(replications));

  unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(replications));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int k = next++; k < replications; k = next++)
      cell.replications[static_cast<std::size_t>(k)] = run_replication(spec, tau, setup, static_cast<std::uint64_t>(k));
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<double> errors;
  for (const auto& r : cell.replications) {
    if (r.ok) errors.push_back(r.error);
    else ++cell.failures;
  }
  cell.successes = static_cast<int>(errors.size());
  cell.mean = mean_of(errors);
  cell.sd = sd_of(errors);
  cell.failed = 5 * cell.failures > replications;
  cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return cell;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return std::nan("");
  double s = 0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sd_of(const std::vector<double>& values) {
  if (values.size() < 2) return values.empty() ? std::nan("") : 0.0;
  const double m = mean_of(values);
  double s = 0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(values.size() - 1));
}

LineFit fit_root_n(const std::vector<int>& sizes, const std::vector<double>& mean_errors) {
  if (sizes.size() != mean_errors.size() || sizes.size() < 3)
    throw Error(ErrorKind::Configuration, "the root-n fit needs at least three (n, error) points");
  const auto k = static_cast<Eigen::Index>(sizes.size());
  Vector u(k), e(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (sizes[static_cast<std::size_t>(i)] < 1) throw Error(ErrorKind::Configuration, "sample sizes must be positive");
    u(i) = 1.0 / std::sqrt(static_cast<double>(sizes[static_cast<std::size_t>(i)]));
    e(i) = mean_errors[static_cast<std::size_t>(i)];
  }
  const auto ols = ols_fit(Matrix(u), e);
  LineFit fit;
  fit.slope = ols.slope(0);
  fit.intercept = ols.intercept;
  const Vector resid = e - (Vector::Constant(k, fit.intercept) + fit.slope * u);
  const double tss = (e.array() - e.mean()).square().sum();
  fit.r_squared = tss > 0 ? 1.0 - resid.squaredNorm() / tss : 1.0;
  return fit;
}

ConsistencyReport consistency_study(const ModelSpec& base, const std::vector<int>& sizes, double tau,
                                    const EstimatorSetup& setup, int replications, int threads) {
  if (sizes.size() < 3) throw Error(ErrorKind::Configuration, "consistency study needs at least three sample sizes");
  ConsistencyReport report;
  std::vector<double> means;
  bool any_failed = false;
  for (int n : sizes) {
    ModelSpec spec = base;
    spec.n = n;
    report.cells.push_back(run_cell(spec, tau, setup, replications, threads));
    means.push_back(report.cells.back().mean);
    any_failed = any_failed || report.cells.back().failed;
  }
  if (any_failed) return report;
  report.fit = fit_root_n(sizes, means);
  report.valid = true;
  return report;
}

namespace {

std::vector<CellRequest> grid(ModelId id, const std::vector<std::pair<int, int>>& np, std::uint64_t seed,
                              ErrorDist dist = ErrorDist::Normal, Covariance cov = Covariance::Independent,
                              std::optional<EstimatorSetup> setup = std::nullopt) {
  std::vector<CellRequest> out;
  for (const auto& [n, p] : np) {
    CellRequest r;
    r.spec = {id, n, p, dist, cov, seed};
    r.taus = {0.25, 0.5, 0.75};
    r.setup = setup.value_or(default_setup(id));
    out.push_back(r);
  }
  return out;
}

const std::vector<std::pair<int, int>> kSizeGrid = {{200, 10}, {200, 20}, {200, 40}, {400, 10}, {400, 20},
                                                    {400, 40}, {600, 10}, {600, 20}, {600, 40}};

}  // namespace

std::vector<std::string> preset_names() {
  return {"ex1a-grid", "models-1-4", "models-1-4-ar", "models-1-4-unknown-d", "ex2a-grid",
          "models-5-8", "hetero",     "model-5-ar",    "ex3"};
}

std::vector<CellRequest> preset(const std::string& name, std::uint64_t seed) {
  std::vector<CellRequest> out;
  auto append = [&](std::vector<CellRequest> more) { out.insert(out.end(), more.begin(), more.end()); };
  const ErrorDist dists[] = {ErrorDist::Normal, ErrorDist::T3, ErrorDist::ChiSq3};
  if (name == "ex1a-grid") {
    append(grid(ModelId::Ex1a, kSizeGrid, seed));
  } else if (name == "models-1-4") {
    for (ModelId id : {ModelId::I, ModelId::II, ModelId::III, ModelId::IV})
      for (ErrorDist d : dists) append(grid(id, {{600, 10}}, seed, d));
  } else if (name == "models-1-4-ar") {
    for (ErrorDist d : dists) append(grid(ModelId::I, {{600, 10}}, seed, d, Covariance::ArHalf));
  } else if (name == "models-1-4-unknown-d") {
    EstimatorSetup s;
    s.d_tau = 1;
    for (ModelId id : {ModelId::I, ModelId::II, ModelId::III, ModelId::IV})
      append(grid(id, {{600, 10}}, seed, ErrorDist::Normal, Covariance::Independent, s));
  } else if (name == "ex2a-grid") {
    append(grid(ModelId::Ex2a, kSizeGrid, seed));
  } else if (name == "models-5-8") {
    for (ModelId id : {ModelId::V, ModelId::VI, ModelId::VII, ModelId::VIII}) append(grid(id, {{600, 10}}, seed));
  } else if (name == "hetero") {
    append(grid(ModelId::Hetero2c, {{600, 10}}, seed));
  } else if (name == "model-5-ar") {
    append(grid(ModelId::V, {{600, 10}}, seed, ErrorDist::Normal, Covariance::ArHalf));
  } else if (name == "ex3") {
    auto cells = grid(ModelId::Ex3, {{600, 10}}, seed);
    for (auto& c : cells) c.taus = {0.5};
    append(cells);
  } else {
    throw Error(ErrorKind::Configuration, "unknown preset '" + name + "'");
  }
  return out;
}

}  // namespace cqs::sim
