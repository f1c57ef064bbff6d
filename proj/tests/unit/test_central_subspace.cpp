#include "cqs/central_subspace.hpp"
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

Matrix ar_half(int n, int p, std::uint64_t seed) {
  Matrix sigma(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(0.5, std::abs(i - j));
  const Matrix l = sigma.llt().matrixL();
  return gaussian(n, p, seed) * l.transpose();
}

Matrix covariance(const Matrix& z) {
  const Matrix c = z.rowwise() - z.colwise().mean();
  return c.transpose() * c / double(z.rows() - 1);
}

Vector ex1a_response(const Matrix& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  Vector y(x.rows());
  for (int i = 0; i < x.rows(); ++i) y(i) = 3 * x(i, 0) + x(i, 1) + N(rng);
  return y;
}

Matrix ex1a_direction(int p) {
  Matrix b = Matrix::Zero(p, 1);
  b(0, 0) = 3;
  b(1, 0) = 1;
  return b;
}

}  // namespace

TEST(Standardize, AlreadyStandardInput) {
  const auto first = cqs::standardize(gaussian(200, 4, 1));
  const auto second = cqs::standardize(first.z);
  EXPECT_LT((second.z - first.z).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((second.transform.whitener - Matrix::Identity(4, 4)).norm(), 1e-10);
}

TEST(Standardize, DuplicatedColumnIsSingular) {
  Matrix x = gaussian(100, 3, 2);
  x.col(2) = x.col(0);
  try {
    cqs::standardize(x);
    FAIL();
  } catch (const cqs::Error& e) {
    EXPECT_EQ(e.kind(), cqs::ErrorKind::RankDeficiency);
    EXPECT_NE(std::string(e.what()).find("eigenvalue"), std::string::npos);
  }
}

TEST(Standardize, DependentDesignWhitened) {
  const auto s = cqs::standardize(ar_half(600, 10, 3));
  EXPECT_LT(s.z.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((covariance(s.z) - Matrix::Identity(10, 10)).norm(), 1e-8);
  EXPECT_LT((s.transform.whitener * s.transform.dewhitener - Matrix::Identity(10, 10)).norm(), 1e-8);
  EXPECT_LT((s.transform.whitener - s.transform.whitener.transpose()).norm(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s.transform.whitener);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(BackTransform, IdentityAndAxis) {
  cqs::StandardizeTransform<double> t{Vector::Zero(3), Matrix::Identity(3, 3), Matrix::Identity(3, 3)};
  Matrix eta(3, 2);
  eta << 1, 0, 1, 1, 0, 2;
  const auto out = cqs::back_transform(cqs::make_basis(eta, cqs::Scale::StandardizedZ), t);
  EXPECT_EQ(out.scale, cqs::Scale::OriginalX);
  EXPECT_LT(cqs::subspace_angle(out.columns, eta), 1e-12);

  Matrix w = Matrix::Identity(3, 3);
  w(0, 0) = 2;
  t.whitener = w;
  t.dewhitener = w.inverse();
  Matrix e1 = Matrix::Zero(3, 1);
  e1(0, 0) = 1;
  const auto axis = cqs::back_transform(cqs::make_basis(e1, cqs::Scale::StandardizedZ), t);
  EXPECT_LT((axis.columns - e1).norm(), 1e-15);
}

TEST(BackTransform, RandomWhitenerInverts) {
  const Matrix a = gaussian(5, 5, 4);
  const Matrix spd = a * a.transpose() + Matrix::Identity(5, 5);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(spd);
  cqs::StandardizeTransform<double> t;
  t.mean = Vector::Zero(5);
  t.whitener = eig.operatorInverseSqrt();
  t.dewhitener = eig.operatorSqrt();
  const Matrix eta = gaussian(5, 2, 5);
  const auto out = cqs::back_transform(cqs::make_basis(eta, cqs::Scale::StandardizedZ), t);
  const Matrix recovered = t.dewhitener * out.columns;
  for (int c = 0; c < 2; ++c) {
    const double ratio = recovered.col(c).norm() / eta.col(c).norm();
    EXPECT_LT((recovered.col(c) - ratio * eta.col(c)).norm(), 1e-10);
  }
}

TEST(BackTransform, ScaleTagChecked) {
  cqs::StandardizeTransform<double> t{Vector::Zero(2), Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  try {
    cqs::back_transform(cqs::make_basis(Matrix(Matrix::Identity(2, 1)), cqs::Scale::OriginalX), t);
    FAIL();
  } catch (const cqs::Error& e) {
    EXPECT_EQ(e.kind(), cqs::ErrorKind::Usage);
  }
}

TEST(Slices, SizesAndTies) {
  Vector y(23);
  for (int i = 0; i < 23; ++i) y(i) = i % 5;
  const auto labels = cqs::detail::slice_labels(y, 4);
  std::vector<int> counts(4, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  EXPECT_EQ(counts, (std::vector<int>{6, 6, 6, 5}));
  // Tied responses are ordered by index, so the lowest-index zero lands first.
  EXPECT_EQ(labels[0], 0);
  EXPECT_EQ(cqs::default_slice_count(600, 10), 10);
  EXPECT_EQ(cqs::default_slice_count(200, 40), 10);
}

TEST(Sir, RecoversLinearDirection) {
  double total = 0;
  for (int r = 0; r < 20; ++r) {
    const Matrix x = gaussian(600, 10, 100 + r);
    const auto res = cqs::sir(x, ex1a_response(x, 200 + r), cqs::SirConfig{10, 1});
    total += cqs::estimation_error(res.basis.columns, ex1a_direction(10));
  }
  EXPECT_LT(total / 20, 0.05);
}

TEST(Sir, NullModelHasNoDominantDirection) {
  const Matrix x = gaussian(600, 10, 7);
  const Vector y = gaussian(600, 1, 8).col(0);
  const auto null = cqs::sir(x, y, cqs::SirConfig{10, 1});
  const auto signal = cqs::sir(x, ex1a_response(x, 9), cqs::SirConfig{10, 1});
  EXPECT_LT(null.eigenvalues(0), 0.1);
  EXPECT_GT(signal.eigenvalues(0), 0.5);
}

TEST(Sir, KernelMatrixIsPsdAndSorted) {
  const Matrix x = gaussian(300, 6, 10);
  const auto res = cqs::sir(x, ex1a_response(x, 11), cqs::SirConfig{10, 3});
  for (int k = 0; k + 1 < res.eigenvalues.size(); ++k) EXPECT_GE(res.eigenvalues(k), res.eigenvalues(k + 1));
  EXPECT_GE(res.eigenvalues.minCoeff(), 0.0);
  const auto z = cqs::standardize(x).z;
  const Matrix m = cqs::sir_kernel_matrix(z, ex1a_response(x, 11), 10);
  EXPECT_LT((m - m.transpose()).norm(), 1e-14);
}

TEST(Sir, FullDimensionSpansSpace) {
  const Matrix x = gaussian(400, 5, 12);
  const auto res = cqs::sir(x, ex1a_response(x, 13), cqs::SirConfig{10, 5});
  EXPECT_EQ(res.basis.dim(), 5);
  Eigen::FullPivLU<Matrix> lu(res.basis.columns);
  EXPECT_EQ(lu.rank(), 5);
}

TEST(Sir, TooFewDistinctResponses) {
  const Matrix x = gaussian(100, 3, 14);
  Vector y(100);
  for (int i = 0; i < 100; ++i) y(i) = i % 4;
  try {
    cqs::sir(x, y, cqs::SirConfig{10, 1});
    FAIL();
  } catch (const cqs::Error& e) {
    EXPECT_EQ(e.kind(), cqs::ErrorKind::Slicing);
  }
}

TEST(Sir, AffineEquivariance) {
  const Matrix x = gaussian(500, 6, 15);
  const Vector y = ex1a_response(x, 16);
  const Matrix w = gaussian(6, 6, 17) + 3 * Matrix::Identity(6, 6);
  Vector b(6);
  b << 1, -2, 3, 0.5, 4, -1;
  const Matrix moved = (x * w).rowwise() + b.transpose();
  const auto base = cqs::sir(x, y, cqs::SirConfig{10, 2});
  const auto other = cqs::sir(moved, y, cqs::SirConfig{10, 2});
  const Matrix mapped = w.inverse() * base.basis.columns;
  EXPECT_LT(cqs::subspace_angle(other.basis.columns, mapped), 1e-6);
}

TEST(Sir, MonotoneResponseTransform) {
  const Matrix x = gaussian(300, 5, 18);
  const Vector y = ex1a_response(x, 19);
  const Vector ey = (0.1 * y.array()).exp().matrix();
  const auto a = cqs::sir(x, y, cqs::SirConfig{10, 2});
  const auto b = cqs::sir(x, ey, cqs::SirConfig{10, 2});
  EXPECT_EQ((a.basis.columns - b.basis.columns).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Sir, InjectedBasisReplacesSir) {
  const Matrix x = gaussian(300, 4, 20);
  const Vector y = ex1a_response(x, 21);
  Matrix alt = Matrix::Zero(4, 1);
  alt(3, 0) = 2;
  const auto res = cqs::sir(x, y, cqs::SirConfig{10, 1}, std::optional<cqs::Basis<double>>(cqs::make_basis(alt)));
  EXPECT_LT(cqs::subspace_angle(res.basis.columns, alt), 1e-12);
  EXPECT_EQ(res.basis_z.scale, cqs::Scale::StandardizedZ);
}

TEST(Standardize, RoundTripPartialBasis) {
  const auto s = cqs::standardize(ar_half(300, 4, 22));
  const Matrix e = Matrix::Identity(4, 2);
  const auto back = cqs::back_transform(cqs::make_basis(e, cqs::Scale::StandardizedZ), s.transform);
  EXPECT_LT(cqs::subspace_angle(back.columns, Matrix(s.transform.whitener.leftCols(2))), 1e-10);
  const auto forward = cqs::forward_transform(back, s.transform);
  EXPECT_EQ(forward.scale, cqs::Scale::StandardizedZ);
  EXPECT_LT(cqs::subspace_angle(forward.columns, e), 1e-8);
}
