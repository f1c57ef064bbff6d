#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace cqs {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

namespace detail {

/// Standard normal density.
template <typename Scalar>
Scalar normal_pdf(Scalar x) {
  using std::exp;
  using std::sqrt;
  const Scalar inv_sqrt_2pi = Scalar(1) / sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
  return inv_sqrt_2pi * exp(Scalar(-0.5) * x * x);
}

template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  using std::erfc;
  using std::sqrt;
  return Scalar(0.5) * erfc(-x / sqrt(Scalar(2)));
}

/// Inverse standard normal CDF: Acklam's rational approximation followed by
/// one Halley step, good to near machine precision on (0,1).
template <typename Scalar>
Scalar normal_quantile(Scalar p) {
  using std::log;
  using std::sqrt;
  using std::exp;
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  const Scalar p_low = Scalar(0.02425);
  Scalar x;
  if (p < p_low) {
    const Scalar q = sqrt(Scalar(-2) * log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const Scalar q = p - Scalar(0.5);
    const Scalar r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const Scalar q = sqrt(Scalar(-2) * log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const Scalar e = normal_cdf(x) - p;
  const Scalar u = e * sqrt(Scalar(2) * std::numbers::pi_v<Scalar>) * exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

template <typename Scalar>
Scalar median(std::vector<Scalar> values) {
  const auto n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const Scalar upper = *mid;
  const Scalar lower = *std::max_element(values.begin(), mid);
  return (lower + upper) / 2;
}

/// Median absolute deviation (unscaled).
template <typename Derived>
typename Derived::Scalar median_absolute_deviation(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> dense = v;
  std::vector<Scalar> values(dense.data(), dense.data() + dense.size());
  const Scalar center = median(values);
  for (auto& x : values) x = std::abs(x - center);
  return median(std::move(values));
}

}  // namespace detail

/// Flip each column so its largest-magnitude entry is positive.
template <typename Derived>
void canonicalize_signs(Eigen::MatrixBase<Derived>& columns) {
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    Eigen::Index arg = 0;
    columns.col(j).cwiseAbs().maxCoeff(&arg);
    if (columns(arg, j) < 0) columns.col(j) *= -1;
  }
}

/// Sample covariance with divisor n - 1.
template <typename Derived>
MatrixX<typename Derived::Scalar> sample_covariance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> centered = x.rowwise() - x.colwise().mean();
  return (centered.adjoint() * centered) / Scalar(x.rows() - 1);
}

}  // namespace cqs
