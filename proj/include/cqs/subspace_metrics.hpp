#pragma once

#include "cqs/central_subspace.hpp"
#include "cqs/error.hpp"
#include "cqs/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cqs {

/// Orthonormal basis of the column span via column-pivoted QR.
template <typename Derived>
MatrixX<typename Derived::Scalar> orthonormal_basis(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.cols() < 1 || a.rows() < a.cols()) throw Error(ErrorKind::RankDeficiency, "basis must have 1 <= k <= p columns");
  if (!a.allFinite()) throw Error(ErrorKind::NumericDomain, "basis has non-finite entries");
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(a);
  qr.setThreshold(Scalar(1e-10));
  if (qr.rank() < a.cols()) throw Error(ErrorKind::RankDeficiency, "basis is not of full column rank");
  return qr.householderQ() * MatrixX<Scalar>::Identity(a.rows(), a.cols());
}

/// Largest principal angle between the smaller span and the larger one, in
/// [0, pi/2]. A span contained in the other scores 0.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar subspace_angle(const Eigen::MatrixBase<DerivedA>& left,
                                         const Eigen::MatrixBase<DerivedB>& right) {
  using Scalar = typename DerivedA::Scalar;
  if (left.rows() != right.rows()) throw Error(ErrorKind::Usage, "bases live in different ambient dimensions");
  MatrixX<Scalar> qa = orthonormal_basis(left);
  MatrixX<Scalar> qb = orthonormal_basis(right);
  if (qa.cols() > qb.cols()) std::swap(qa, qb);
  const MatrixX<Scalar> residual = qa - qb * (qb.transpose() * qa);
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(residual);
  const Scalar s = std::clamp(svd.singularValues()(0), Scalar(0), Scalar(1));
  using std::asin;
  return std::clamp(asin(s), Scalar(0), std::numbers::pi_v<Scalar> / 2);
}

template <typename Scalar>
Scalar subspace_angle(const Basis<Scalar>& left, const Basis<Scalar>& right) {
  if (left.scale != right.scale) throw Error(ErrorKind::Usage, "bases are on different scales");
  return subspace_angle(left.columns, right.columns);
}

/// Angle divided by pi/2.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar estimation_error(const Eigen::MatrixBase<DerivedA>& left,
                                           const Eigen::MatrixBase<DerivedB>& right) {
  using Scalar = typename DerivedA::Scalar;
  return subspace_angle(left, right) / (std::numbers::pi_v<Scalar> / 2);
}

template <typename Scalar>
Scalar estimation_error(const Basis<Scalar>& left, const Basis<Scalar>& right) {
  return subspace_angle(left, right) / (std::numbers::pi_v<Scalar> / 2);
}

}  // namespace cqs
