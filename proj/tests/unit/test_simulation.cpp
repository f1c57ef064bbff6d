#include "cqs/simulation.hpp"
#include "cqs/subspace_metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using cqs::Matrix;
using cqs::Vector;
namespace sim = cqs::sim;

namespace {

template <typename Cdf>
double ks_statistic(Vector sample, Cdf cdf) {
  std::sort(sample.data(), sample.data() + sample.size());
  const double n = static_cast<double>(sample.size());
  double d = 0;
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample(i));
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

double student_t3_cdf(double t) {
  const double s = std::sqrt(3.0);
  return 0.5 + (t / (s * (1 + t * t / 3)) + std::atan(t / s)) / std::numbers::pi;
}

double chisq3_cdf(double x) {
  if (x <= 0) return 0;
  return std::erf(std::sqrt(x / 2)) - std::sqrt(2 * x / std::numbers::pi) * std::exp(-x / 2);
}

}  // namespace

TEST(Generate, ZeroNoiseHookGivesModelCurve) {
  sim::ModelSpec spec{sim::ModelId::IV, 200, 5, sim::ErrorDist::Normal, sim::Covariance::Independent, 3};
  const auto g = sim::generate(spec, 0, [](Eigen::Index n) { return Vector(Vector::Zero(n)); });
  for (int i = 0; i < spec.n; ++i) {
    const double x1 = g.data.x(i, 0);
    EXPECT_DOUBLE_EQ(g.data.y(i), x1 / ((1 + x1) * (1 + x1)));
  }
  EXPECT_EQ(g.truth.dim(), 1);
  EXPECT_EQ(g.data.names.front(), "X1");
}

TEST(Generate, HookLengthChecked) {
  sim::ModelSpec spec;
  spec.n = 50;
  try {
    sim::generate(spec, 0, [](Eigen::Index) { return Vector(Vector::Zero(3)); });
    FAIL();
  } catch (const cqs::Error& e) {
    EXPECT_EQ(e.kind(), cqs::ErrorKind::Usage);
  }
}

TEST(Generate, DependentPredictorCorrelation) {
  auto rng = sim::make_rng(4, 0);
  const Matrix x = sim::draw_predictors(sim::Covariance::ArHalf, 100000, 10, rng);
  const Matrix c = cqs::sample_covariance(x);
  EXPECT_NEAR(c(0, 2) / std::sqrt(c(0, 0) * c(2, 2)), 0.25, 0.01);
  EXPECT_NEAR(c(1, 2) / std::sqrt(c(1, 1) * c(2, 2)), 0.5, 0.01);
}

TEST(Generate, ErrorDistributionsMatchCdfs) {
  const int n = 50000;
  auto rng = sim::make_rng(5, 0);
  EXPECT_LT(ks_statistic(sim::draw_errors(sim::ErrorDist::Normal, n, rng), cqs::detail::normal_cdf<double>), 0.01);
  EXPECT_LT(ks_statistic(sim::draw_errors(sim::ErrorDist::T3, n, rng), student_t3_cdf), 0.01);
  const Vector chi = sim::draw_errors(sim::ErrorDist::ChiSq3, n, rng);
  EXPECT_LT(ks_statistic(chi, chisq3_cdf), 0.01);
  const double mean = chi.mean();
  const double sd = std::sqrt((chi.array() - mean).square().mean());
  const double skew = ((chi.array() - mean) / sd).cube().mean();
  EXPECT_GT(skew, 1.0);
}

TEST(Generate, SeedDeterminism) {
  sim::ModelSpec spec;
  spec.model = sim::ModelId::V;
  spec.n = 100;
  const auto a = sim::generate(spec, 7);
  const auto b = sim::generate(spec, 7);
  const auto c = sim::generate(spec, 8);
  EXPECT_EQ((a.data.x - b.data.x).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.data.y - b.data.y).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((a.data.x - c.data.x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Generate, TrueBases) {
  const auto ex1a = sim::true_basis(sim::ModelId::Ex1a, 10);
  EXPECT_NEAR(ex1a.columns(0, 0), 3 / std::sqrt(10.0), 1e-15);
  EXPECT_EQ(sim::true_basis(sim::ModelId::VIII, 10).dim(), 2);
  EXPECT_EQ(sim::true_basis(sim::ModelId::Ex3, 10).dim(), 1);
  EXPECT_THROW(sim::true_basis(sim::ModelId::I, 3), cqs::Error);
}

TEST(Names, RoundTrip) {
  for (auto id : {sim::ModelId::Ex1a, sim::ModelId::I, sim::ModelId::II, sim::ModelId::III, sim::ModelId::IV,
                  sim::ModelId::Ex2a, sim::ModelId::V, sim::ModelId::VI, sim::ModelId::VII, sim::ModelId::VIII,
                  sim::ModelId::Hetero2c, sim::ModelId::Ex3})
    EXPECT_EQ(sim::parse_model(sim::to_string(id)), id);
  EXPECT_EQ(sim::parse_error_dist("t3"), sim::ErrorDist::T3);
  EXPECT_EQ(sim::parse_covariance("ar_half"), sim::Covariance::ArHalf);
  try {
    sim::parse_model("IX");
    FAIL();
  } catch (const cqs::Error& e) {
    EXPECT_EQ(e.kind(), cqs::ErrorKind::Configuration);
  }
}

TEST(Summary, MeanAndSd) {
  EXPECT_EQ(sim::sd_of({0.3}), 0.0);
  EXPECT_TRUE(std::isnan(sim::mean_of({})));
  EXPECT_NEAR(sim::mean_of({1, 2, 3}), 2.0, 1e-15);
  EXPECT_NEAR(sim::sd_of({1, 2, 3}), 1.0, 1e-15);
}

TEST(Summary, RootNFitOnExactCurve) {
  const std::vector<int> sizes{200, 400, 600, 800, 1000};
  std::vector<double> errors;
  for (int n : sizes) errors.push_back(1.7 / std::sqrt(static_cast<double>(n)));
  const auto fit = sim::fit_root_n(sizes, errors);
  EXPECT_NEAR(fit.slope, 1.7, 1e-10);
  EXPECT_NEAR(fit.intercept, 0.0, 1e-10);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
}

TEST(Cell, SingleReplicationHasZeroSd) {
  sim::ModelSpec spec;
  spec.n = 200;
  spec.p = 5;
  const auto cell = sim::run_cell(spec, 0.5, sim::default_setup(spec.model), 1, 1);
  EXPECT_EQ(cell.successes, 1);
  EXPECT_EQ(cell.sd, 0.0);
  EXPECT_FALSE(cell.failed);
}

TEST(Cell, DeterministicAcrossThreadCounts) {
  sim::ModelSpec spec;
  spec.model = sim::ModelId::III;
  spec.n = 200;
  spec.p = 5;
  const auto setup = sim::default_setup(spec.model);
  const auto a = sim::run_cell(spec, 0.25, setup, 4, 1);
  const auto b = sim::run_cell(spec, 0.25, setup, 4, 3);
  ASSERT_EQ(a.replications.size(), b.replications.size());
  for (std::size_t r = 0; r < a.replications.size(); ++r)
    EXPECT_EQ(a.replications[r].error, b.replications[r].error);
}

TEST(Cell, ErrorsStayInUnitIntervalAcrossLevels) {
  sim::ModelSpec spec;
  spec.model = sim::ModelId::II;
  spec.n = 200;
  spec.p = 5;
  spec.error = sim::ErrorDist::T3;
  for (double tau : {0.1, 0.5, 0.9}) {
    const auto cell = sim::run_cell(spec, tau, sim::default_setup(spec.model), 3, 1);
    for (const auto& r : cell.replications) {
      ASSERT_TRUE(r.ok) << r.failure;
      EXPECT_GE(r.error, 0.0);
      EXPECT_LE(r.error, 1.0);
    }
    EXPECT_LT(cell.mean, 0.5);
  }
}

TEST(Cell, QuantileLevelRobustness) {
  sim::ModelSpec spec;
  spec.seed = 11;
  const auto setup = sim::default_setup(spec.model);
  std::vector<double> means;
  for (double tau : {0.25, 0.5, 0.75}) means.push_back(sim::run_cell(spec, tau, setup, 20, 0).mean);
  for (std::size_t a = 0; a < means.size(); ++a)
    for (std::size_t b = a + 1; b < means.size(); ++b) EXPECT_LT(std::abs(means[a] - means[b]), 0.01);
}

TEST(Presets, TableShapes) {
  const auto grid = sim::preset("ex1a-grid", 1);
  EXPECT_EQ(grid.size(), 9u);
  for (const auto& r : grid) EXPECT_EQ(r.taus.size(), 3u);
  EXPECT_EQ(sim::preset("models-1-4", 1).size(), 12u);
}

TEST(Presets, AllNamesResolve) {
  for (const auto& name : sim::preset_names()) EXPECT_FALSE(sim::preset(name, 1).empty()) << name;
  EXPECT_THROW(sim::preset("nothing", 1), cqs::Error);
}
