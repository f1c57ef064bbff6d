#pragma once

#include "cqs/error.hpp"
#include "cqs/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cqs {

enum class Scale { OriginalX, StandardizedZ };

/// Column span of interest, stored with unit-norm columns.
template <typename Scalar = double>
struct Basis {
  MatrixX<Scalar> columns;
  Scale scale = Scale::OriginalX;

  Eigen::Index ambient() const { return columns.rows(); }
  Eigen::Index dim() const { return columns.cols(); }
};

template <typename Derived>
Basis<typename Derived::Scalar> make_basis(const Eigen::MatrixBase<Derived>& columns,
                                           Scale scale = Scale::OriginalX) {
  using Scalar = typename Derived::Scalar;
  Basis<Scalar> b{columns, scale};
  for (Eigen::Index j = 0; j < b.columns.cols(); ++j) {
    const Scalar norm = b.columns.col(j).norm();
    if (!(norm > Scalar(0))) throw Error(ErrorKind::RankDeficiency, "basis column " + std::to_string(j) + " is zero");
    b.columns.col(j) /= norm;
  }
  return b;
}

template <typename Scalar = double>
struct StandardizeTransform {
  VectorX<Scalar> mean;
  MatrixX<Scalar> whitener;    // inverse square root of the sample covariance
  MatrixX<Scalar> dewhitener;  // its square root
};

template <typename Scalar = double>
struct Standardized {
  MatrixX<Scalar> z;
  StandardizeTransform<Scalar> transform;
};

/// Centre and whiten X by the spectral inverse square root of its sample
/// covariance.
template <typename Derived>
Standardized<typename Derived::Scalar> standardize(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const auto n = x.rows();
  const auto p = x.cols();
  if (p < 1 || n <= p) throw Error(ErrorKind::RankDeficiency, "standardization needs n > p >= 1");
  if (!x.allFinite()) throw Error(ErrorKind::NumericDomain, "predictor matrix has non-finite entries");

  Standardized<Scalar> out;
  out.transform.mean = x.colwise().mean().transpose();
  const MatrixX<Scalar> cov = sample_covariance(x);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(cov);
  const VectorX<Scalar>& values = eig.eigenvalues();
  const Scalar largest = values.maxCoeff();
  const Scalar smallest = values.minCoeff();
  if (!(largest > Scalar(0)) || !(smallest > Scalar(1e-10) * largest)) {
    std::ostringstream os;
    os << "sample covariance is singular: eigenvalue " << smallest << " against largest " << largest;
    throw Error(ErrorKind::RankDeficiency, os.str());
  }
  const MatrixX<Scalar>& vectors = eig.eigenvectors();
  out.transform.whitener = vectors * values.cwiseSqrt().cwiseInverse().asDiagonal() * vectors.transpose();
  out.transform.dewhitener = vectors * values.cwiseSqrt().asDiagonal() * vectors.transpose();
  out.z = (x.rowwise() - out.transform.mean.transpose()) * out.transform.whitener;
  return out;
}

template <typename Scalar>
Basis<Scalar> back_transform(const Basis<Scalar>& eta, const StandardizeTransform<Scalar>& t) {
  if (eta.scale != Scale::StandardizedZ) throw Error(ErrorKind::Usage, "back_transform expects a Z-scale basis");
  if (eta.ambient() != t.whitener.rows()) throw Error(ErrorKind::Usage, "basis and transform dimensions differ");
  return make_basis(MatrixX<Scalar>(t.whitener * eta.columns), Scale::OriginalX);
}

/// Z-scale image of an X-scale basis: dewhitener columns span the same
/// directions after whitening.
template <typename Scalar>
Basis<Scalar> forward_transform(const Basis<Scalar>& beta, const StandardizeTransform<Scalar>& t) {
  if (beta.scale != Scale::OriginalX) throw Error(ErrorKind::Usage, "forward_transform expects an X-scale basis");
  if (beta.ambient() != t.dewhitener.rows()) throw Error(ErrorKind::Usage, "basis and transform dimensions differ");
  return make_basis(MatrixX<Scalar>(t.dewhitener * beta.columns), Scale::StandardizedZ);
}

struct SirConfig {
  int n_slices = 10;
  int target_dim = 1;
};

/// max(10, ceil(2p/n)).
inline int default_slice_count(Eigen::Index n, Eigen::Index p) {
  const auto ratio = static_cast<int>((2 * p + n - 1) / n);
  return std::max(10, ratio);
}

template <typename Scalar = double>
struct SirResult {
  Basis<Scalar> basis;          // X-scale
  Basis<Scalar> basis_z;        // Z-scale, before back-transformation
  VectorX<Scalar> eigenvalues;  // all p eigenvalues of M, non-increasing
  Eigen::Index rank = 0;        // numerically nonzero eigenvalues
  std::string warning;          // set when fewer than target_dim directions exist
};

namespace detail {

/// Slice labels from the order of y; ties are ranked by sample index and the
/// first n mod H slices hold one extra member.
template <typename Derived>
std::vector<int> slice_labels(const Eigen::MatrixBase<Derived>& y, int n_slices) {
  const auto n = static_cast<std::size_t>(y.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return y(a) < y(b); });
  const std::size_t base = n / static_cast<std::size_t>(n_slices);
  const std::size_t extra = n % static_cast<std::size_t>(n_slices);
  std::vector<int> labels(n);
  std::size_t pos = 0;
  for (int h = 0; h < n_slices; ++h) {
    const std::size_t size = base + (static_cast<std::size_t>(h) < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) labels[static_cast<std::size_t>(order[pos++])] = h;
  }
  return labels;
}

}  // namespace detail

/// Weighted covariance of slice means of standardized predictors.
template <typename DerivedZ, typename DerivedY>
MatrixX<typename DerivedZ::Scalar> sir_kernel_matrix(const Eigen::MatrixBase<DerivedZ>& z,
                                                     const Eigen::MatrixBase<DerivedY>& y, int n_slices) {
  using Scalar = typename DerivedZ::Scalar;
  const auto n = z.rows();
  const auto p = z.cols();
  if (y.size() != n) throw Error(ErrorKind::Usage, "response length differs from predictor rows");
  if (n_slices < 2) throw Error(ErrorKind::Slicing, "at least two slices are required");
  if (n_slices > n) throw Error(ErrorKind::Slicing, "more slices than observations");
  std::vector<Scalar> distinct(y.derived().data(), y.derived().data() + n);
  std::sort(distinct.begin(), distinct.end());
  const auto unique = std::unique(distinct.begin(), distinct.end()) - distinct.begin();
  if (unique < n_slices) {
    std::ostringstream os;
    os << n_slices << " slices requested but the response has " << unique << " distinct values";
    throw Error(ErrorKind::Slicing, os.str());
  }

  const auto labels = detail::slice_labels(y, n_slices);
  MatrixX<Scalar> sums = MatrixX<Scalar>::Zero(p, n_slices);
  VectorX<Scalar> counts = VectorX<Scalar>::Zero(n_slices);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int h = labels[static_cast<std::size_t>(i)];
    sums.col(h) += z.row(i).transpose();
    counts(h) += Scalar(1);
  }
  MatrixX<Scalar> m = MatrixX<Scalar>::Zero(p, p);
  for (int h = 0; h < n_slices; ++h) {
    const VectorX<Scalar> mean = sums.col(h) / counts(h);
    m.noalias() += (counts(h) / Scalar(n)) * mean * mean.transpose();
  }
  return m;
}

/// Eigenpairs of a symmetric matrix in non-increasing order, eigenvector
/// signs canonicalized.
template <typename Derived>
std::pair<VectorX<typename Derived::Scalar>, MatrixX<typename Derived::Scalar>> sorted_eigen(
    const Eigen::MatrixBase<Derived>& sym) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> dense = sym;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(dense);
  if (eig.info() != Eigen::Success) throw Error(ErrorKind::NumericDomain, "eigendecomposition failed");
  const auto p = sym.rows();
  VectorX<Scalar> values = eig.eigenvalues().reverse();
  MatrixX<Scalar> vectors = eig.eigenvectors().rowwise().reverse();
  for (Eigen::Index k = 0; k < p; ++k) values(k) = std::max(values(k), Scalar(0));
  canonicalize_signs(vectors);
  return {values, vectors};
}

/// Sliced inverse regression. `alternative`, when given, replaces the SIR
/// directions (any X-scale basis from another reducer) while the rest of the
/// pipeline stays unchanged.
template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
SirResult<Scalar> sir(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                      const SirConfig& config, const std::optional<Basis<Scalar>>& alternative = std::nullopt) {
  const auto p = x.cols();
  if (config.n_slices < 2) throw Error(ErrorKind::Slicing, "at least two slices are required");
  if (config.target_dim < 1 || config.target_dim > p || config.target_dim > config.n_slices - 1)
    throw Error(ErrorKind::ParameterDomain, "target dimension must lie in [1, min(p, slices - 1)]");
  const auto std_x = standardize(x);
  SirResult<Scalar> out;
  const MatrixX<Scalar> m = sir_kernel_matrix(std_x.z, y.derived().template cast<Scalar>(), config.n_slices);
  auto [values, vectors] = sorted_eigen(m);
  out.eigenvalues = values;
  const Scalar floor = values.size() > 0 ? Scalar(1e-12) * std::max(values(0), Scalar(1e-300)) : Scalar(0);
  out.rank = (values.array() > floor).count();

  if (alternative) {
    out.basis = make_basis(alternative->columns, Scale::OriginalX);
    out.basis_z = forward_transform(out.basis, std_x.transform);
    return out;
  }
  Eigen::Index k = config.target_dim;
  if (out.rank < k) {
    std::ostringstream os;
    os << "kernel matrix has rank " << out.rank << " below the requested " << k << " directions";
    out.warning = os.str();
    k = std::max<Eigen::Index>(out.rank, 1);
  }
  out.basis_z = make_basis(MatrixX<Scalar>(vectors.leftCols(k)), Scale::StandardizedZ);
  out.basis = back_transform(out.basis_z, std_x.transform);
  return out;
}

}  // namespace cqs
