#include "cqs/cqs_estimator.hpp"
#include "cqs/subspace_metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using cqs::Matrix;
using cqs::Vector;

namespace {

Matrix gaussian(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  Matrix x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = N(rng);
  return x;
}

Vector noise(int n, std::uint64_t seed) { return gaussian(n, 1, seed).col(0); }

Matrix first_two_axes(int p, double a, double b) {
  Matrix m = Matrix::Zero(p, 1);
  m(0, 0) = a;
  m(1, 0) = b;
  return m;
}

bool throws_kind(const std::function<void()>& f, cqs::ErrorKind kind, std::string* message = nullptr) {
  try {
    f();
  } catch (const cqs::Error& e) {
    if (message) *message = e.what();
    return e.kind() == kind;
  }
  return false;
}

}  // namespace

TEST(Ols, ExactLine) {
  Matrix x(4, 1);
  x << 0, 1, 2, 3;
  Vector y(4);
  y << 1, 3, 5, 7;
  const auto fit = cqs::ols_fit(x, y);
  EXPECT_NEAR(fit.intercept, 1.0, 1e-12);
  EXPECT_NEAR(fit.slope(0), 2.0, 1e-12);
}

TEST(Ols, TwoPredictorsByHand) {
  // Centred, orthogonal columns make the slopes simple ratios.
  Matrix x(4, 2);
  x << 1, 1, -1, 1, 1, -1, -1, -1;
  Vector y(4);
  y << 4, 0, 2, -2;
  const auto fit = cqs::ols_fit(x, y);
  EXPECT_NEAR(fit.intercept, 1.0, 1e-12);
  EXPECT_NEAR(fit.slope(0), 2.0, 1e-12);
  EXPECT_NEAR(fit.slope(1), 1.0, 1e-12);
}

TEST(Ols, MatchesGradientDescent) {
  const Matrix x = gaussian(50, 5, 1);
  const Vector y = x * Vector::LinSpaced(5, -1, 1) + noise(50, 2);
  const auto fit = cqs::ols_fit(x, y);

  Matrix design(50, 6);
  design.col(0).setOnes();
  design.rightCols(5) = x;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(design.transpose() * design);
  const double step = 1.0 / eig.eigenvalues().maxCoeff();
  Vector theta = Vector::Zero(6);
  for (int it = 0; it < 200000; ++it) theta -= step * design.transpose() * (design * theta - y);
  EXPECT_NEAR(fit.intercept, theta(0), 1e-8);
  EXPECT_LT((fit.slope - theta.tail(5)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, AffineEquivariance) {
  const Matrix x = gaussian(80, 4, 3);
  const Vector y = x.col(0) - 2 * x.col(3) + noise(80, 4);
  const Matrix a = gaussian(4, 4, 5) + 2 * Matrix::Identity(4, 4);
  Vector shift(4);
  shift << 3, -1, 0.5, 2;
  const Matrix moved = (x * a).rowwise() + shift.transpose();
  const auto base = cqs::ols_fit(x, y);
  const auto other = cqs::ols_fit(moved, y);
  EXPECT_LT((other.slope - a.inverse() * base.slope).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, RankDeficientNamesColumns) {
  Matrix x = gaussian(30, 3, 6);
  x.col(2) = 2 * x.col(1);
  std::string message;
  EXPECT_TRUE(throws_kind([&] { cqs::ols_fit(x, noise(30, 7)); }, cqs::ErrorKind::RankDeficiency, &message));
  EXPECT_NE(message.find("x"), std::string::npos);
}

TEST(SeedDirection, NoiselessLinearModel) {
  const Matrix x = gaussian(200, 4, 8);
  const Matrix truth = first_two_axes(4, 1, -2);
  const Vector y = x * truth;
  const auto seed = cqs::quantile_seed_direction(x, y, 0.5, cqs::make_basis(truth));
  EXPECT_LT(cqs::subspace_angle(Matrix(seed), truth), 1e-3);
}

TEST(SeedDirection, SingleIndexRecovered) {
  const Matrix x = gaussian(400, 6, 9);
  const Matrix truth = first_two_axes(6, 3, 1);
  const Vector t = x * truth;
  const Vector y = t.array() + 0.5 * noise(400, 10).array();
  const auto seed = cqs::quantile_seed_direction(x, y, 0.25, cqs::make_basis(truth));
  EXPECT_LT(cqs::estimation_error(Matrix(seed), truth), 0.1);
}

TEST(Directions, DimensionOneIsTheSeed) {
  const Matrix x = gaussian(300, 5, 11);
  const Vector y = x.col(0).array().square().matrix() + 0.3 * noise(300, 12);
  const Matrix cs = Matrix::Identity(5, 2);
  const auto est = cqs::functional_directions(x, y, cqs::quantile_functional(0.5), 1, cqs::make_basis(cs));
  const auto seed = cqs::quantile_seed_direction(x, y, 0.5, cqs::make_basis(cs));
  EXPECT_EQ((est.basis.columns - cqs::make_basis(Matrix(seed)).columns).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Directions, GenericQuantileMatchesQuantilePath) {
  const Matrix x = gaussian(200, 4, 13);
  const Vector y = x.col(0) + x.col(1).cwiseAbs() + 0.3 * noise(200, 14);
  const auto cs = cqs::make_basis(Matrix(Matrix::Identity(4, 2)));
  const auto a = cqs::quantile_subspace_basis(x, y, 0.3, 2, cs);
  const auto b = cqs::functional_subspace_basis(x, y, cqs::quantile_functional(0.3), 2, cs);
  EXPECT_EQ((a.columns - b.columns).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Directions, ConstantFunctionalDegenerates) {
  const Matrix x = gaussian(100, 3, 15);
  const Vector y = noise(100, 16);
  const cqs::FunctionalEstimator<double> constant = [](const Matrix& t, const Vector&) {
    return Vector(Vector::Constant(t.rows(), 2.5));
  };
  const auto cs = cqs::make_basis(Matrix(Matrix::Identity(3, 1)));
  for (int dim : {1, 2}) {
    std::string message;
    EXPECT_TRUE(throws_kind([&] { cqs::functional_directions(x, y, constant, dim, cs); },
                            cqs::ErrorKind::DegenerateIterate, &message));
    EXPECT_NE(message.find("step 1"), std::string::npos) << message;
  }
}

TEST(Directions, IterationTraceIsOrdered) {
  const Matrix x = gaussian(300, 4, 17);
  const Vector y = x.col(0) + 0.5 * noise(300, 18);
  const auto cs = cqs::make_basis(Matrix(Matrix::Identity(4, 1)));
  const auto est = cqs::functional_directions(x, y, cqs::mean_functional<double>(), 2, cs);
  ASSERT_EQ(est.trace.vectors.cols(), 4);
  for (int k = 0; k + 1 < 4; ++k) EXPECT_GE(est.trace.eigenvalues(k), est.trace.eigenvalues(k + 1));
  EXPECT_GE(est.trace.eigenvalues.minCoeff(), 0.0);
  EXPECT_NEAR(est.trace.eigenvalues.sum(), 4.0, 1e-9);
  EXPECT_LT(cqs::estimation_error(Matrix(est.basis.columns.col(0)), Matrix(Matrix::Identity(4, 1))), 0.1);
}

TEST(Bic, TwoEqualEigenvalues) {
  Vector eig = Vector::Zero(10);
  eig(0) = 5;
  eig(1) = 5;
  const auto r = cqs::bic_dimension(eig, 600);
  EXPECT_NEAR(r.penalty, 24.246, 5e-4);
  EXPECT_EQ(r.dimension, 2);
  EXPECT_NEAR(r.profile[0], 300 - r.penalty, 1e-9);
  EXPECT_NEAR(r.profile[1], 600 - 3 * r.penalty, 1e-9);
}

TEST(Bic, SingleDominantEigenvalue) {
  Vector eig(5);
  eig << 1, 0.01, 0.01, 0, 0;
  EXPECT_EQ(cqs::bic_dimension(eig, 600).dimension, 1);
}

TEST(Bic, TiesGoToSmallerDimension) {
  // With zero penalty every k past the support scores the same maximum.
  Vector eig(4);
  eig << 2, 1, 0, 0;
  EXPECT_EQ(cqs::bic_dimension(eig, 100, 0.0).dimension, 2);
}

TEST(Bic, ScaleInvariance) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> U(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    Vector eig(8);
    for (int k = 0; k < 8; ++k) eig(k) = U(rng);
    std::sort(eig.data(), eig.data() + 8, std::greater<>());
    const double c = std::exp(4 * U(rng) - 2);
    EXPECT_EQ(cqs::bic_dimension(eig, 500).dimension, cqs::bic_dimension(Vector(c * eig), 500).dimension);
  }
}

TEST(Bic, LargerPenaltyNeverIncreasesDimension) {
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> U(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    Vector eig(6);
    for (int k = 0; k < 6; ++k) eig(k) = U(rng);
    std::sort(eig.data(), eig.data() + 6, std::greater<>());
    int previous = 6;
    for (double c : {0.0, 1.0, 10.0, 50.0, 200.0, 1000.0}) {
      const int d = cqs::bic_dimension(eig, 400, c).dimension;
      EXPECT_LE(d, previous);
      previous = d;
    }
  }
}

TEST(Bic, InvalidInput) {
  EXPECT_TRUE(throws_kind([] { cqs::bic_dimension(Vector(Vector::Zero(3)), 100); }, cqs::ErrorKind::UndefinedRatio));
  Vector unsorted(3);
  unsorted << 1, 2, 0;
  EXPECT_TRUE(throws_kind([&] { cqs::bic_dimension(unsorted, 100); }, cqs::ErrorKind::Usage));
  Vector bad(2);
  bad << 1, std::nan("");
  EXPECT_TRUE(throws_kind([&] { cqs::bic_dimension(bad, 100); }, cqs::ErrorKind::NumericDomain));
}

TEST(Estimate, BasisIsWellFormedAndDeterministic) {
  const Matrix x = gaussian(300, 5, 21);
  const Vector y = x.col(0) + x.col(1).array().square().matrix() + 0.5 * noise(300, 22);
  cqs::CqsConfig<double> config;
  config.tau = 0.5;
  config.d_tau = 2;
  config.initial_cs_dim = 2;
  const auto a = cqs::estimate_cqs(x, y, config);
  const auto b = cqs::estimate_cqs(x, y, config);
  ASSERT_EQ(a.basis.dim(), 2);
  EXPECT_EQ(a.basis.scale, cqs::Scale::OriginalX);
  EXPECT_EQ(a.basis_z.scale, cqs::Scale::StandardizedZ);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(a.basis.columns.col(c).norm(), 1.0, 1e-12);
  EXPECT_GT((a.basis.columns.transpose() * a.basis.columns).determinant(), 1e-10);
  EXPECT_EQ((a.basis.columns - b.basis.columns).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Estimate, DimensionOneStopsAtSeed) {
  const Matrix x = gaussian(300, 6, 23);
  const Vector y = 3 * x.col(0) + x.col(1) + noise(300, 24);
  cqs::CqsConfig<double> config;
  config.tau = 0.4;
  config.d_tau = 1;
  config.initial_cs_dim = 1;
  const auto est = cqs::estimate_cqs(x, y, config);

  const auto s = cqs::standardize(x);
  const auto reduced = cqs::sir(x, y, cqs::SirConfig{10, 6});
  const auto cs = cqs::make_basis(Matrix(reduced.basis_z.columns.leftCols(1)), cqs::Scale::StandardizedZ);
  const Vector seed = cqs::functional_beta(s.z, y, cqs::quantile_functional(0.4), cs);
  EXPECT_EQ((est.basis_z.columns - cqs::make_basis(Matrix(seed)).columns).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT(cqs::estimation_error(est.basis.columns, first_two_axes(6, 3, 1)), 0.1);
}

TEST(Estimate, StandardInputKeepsScale) {
  const Matrix raw = gaussian(300, 4, 25);
  const Matrix z = cqs::standardize(raw).z;
  const Vector y = z.col(0) - z.col(2) + 0.5 * noise(300, 26);
  cqs::CqsConfig<double> config;
  config.d_tau = 1;
  const auto est = cqs::estimate_cqs(z, y, config);
  EXPECT_LT((est.basis.columns - est.basis_z.columns).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Estimate, BicChoosesDimensions) {
  const Matrix x = gaussian(400, 6, 27);
  const Vector y = 2 * x.col(0) + noise(400, 28);
  cqs::CqsConfig<double> config;
  const auto est = cqs::estimate_cqs(x, y, config);
  ASSERT_TRUE(est.cs_selection.has_value());
  ASSERT_TRUE(est.d_tau_selection.has_value());
  EXPECT_EQ(est.cs_dim, 1);
  EXPECT_EQ(est.d_tau, 1);
}

TEST(Estimate, InvalidLevelsRejected) {
  const Matrix x = gaussian(100, 3, 29);
  const Vector y = noise(100, 30);
  cqs::CqsConfig<double> config;
  config.tau = 1.5;
  EXPECT_TRUE(throws_kind([&] { cqs::estimate_cqs(x, y, config); }, cqs::ErrorKind::ParameterDomain));
  config.tau = 0.5;
  config.d_tau = 4;
  EXPECT_TRUE(throws_kind([&] { cqs::estimate_cqs(x, y, config); }, cqs::ErrorKind::ParameterDomain));
}
