#pragma once

// Local linear estimation of conditional quantiles (and conditional means)
// of a response given a low-dimensional projection of the predictors.

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "cqs/check_regression.hpp"
#include "cqs/error.hpp"
#include "cqs/linalg.hpp"

namespace cqs {

/// Asymmetric absolute loss rho_tau(u) = (tau - 1{u < 0}) * u.
template <typename Scalar = double>
class CheckLoss {
 public:
  explicit CheckLoss(Scalar tau) : tau_(tau) {
    if (!(tau > Scalar(0) && tau < Scalar(1))) {
      std::ostringstream os;
      os << "quantile level must lie in (0,1), got " << tau;
      throw Error(ErrorKind::ParameterDomain, os.str());
    }
  }

  Scalar tau() const noexcept { return tau_; }

  Scalar operator()(Scalar u) const noexcept {
    return (u < Scalar(0) ? tau_ - Scalar(1) : tau_) * u;
  }

 private:
  Scalar tau_;
};

template <typename Scalar>
Scalar check_loss(Scalar u, Scalar tau) {
  return CheckLoss<Scalar>(tau)(u);
}

/// Product Gaussian kernel on R^d.
template <typename Derived>
typename Derived::Scalar gaussian_kernel_weight(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  if (z.size() < 1) throw Error(ErrorKind::Usage, "kernel dimension must be at least 1");
  if (!z.allFinite()) throw Error(ErrorKind::NumericDomain, "kernel argument is not finite");
  using std::exp;
  using std::pow;
  const Scalar norm = pow(Scalar(2) * std::numbers::pi_v<Scalar>, Scalar(-0.5) * Scalar(z.size()));
  return norm * exp(Scalar(-0.5) * z.squaredNorm());
}

template <typename Scalar = double>
class GaussianKernel {
 public:
  explicit GaussianKernel(Eigen::Index dimension) : dimension_(dimension) {
    if (dimension < 1) throw Error(ErrorKind::Usage, "kernel dimension must be at least 1");
  }

  Eigen::Index dimension() const noexcept { return dimension_; }

  template <typename Derived>
  Scalar operator()(const Eigen::MatrixBase<Derived>& z) const {
    if (z.size() != dimension_) throw Error(ErrorKind::Usage, "kernel argument has wrong dimension");
    return gaussian_kernel_weight(z);
  }

 private:
  Eigen::Index dimension_;
};

/// Kernel bandwidth for a projected design. Coordinates are pre-scaled by
/// their sample standard deviation, so the bandwidth applied to coordinate j
/// is h * scale(j). For d = 1 this gives the mean-regression rule
/// sd * n^(-1/5).
template <typename Scalar = double>
struct Bandwidth {
  Scalar h_mean{};          // mean-regression base bandwidth (scaled units)
  Scalar h{};               // applied bandwidth (scaled units)
  VectorX<Scalar> scale;    // per-coordinate standard deviation

  Scalar coordinate(Eigen::Index j) const { return h * scale(j); }
  Scalar mean_coordinate(Eigen::Index j) const { return h_mean * scale(j); }
};

/// [tau(1-tau) / phi(Phi^-1(tau))^2]^(1/5), the factor converting a mean
/// regression bandwidth into one for the tau-th quantile.
template <typename Scalar>
Scalar quantile_bandwidth_factor(Scalar tau) {
  CheckLoss<Scalar> check(tau);
  const Scalar density = detail::normal_pdf(detail::normal_quantile(tau));
  using std::pow;
  return pow(tau * (Scalar(1) - tau) / (density * density), Scalar(0.2));
}

template <typename Derived>
Bandwidth<typename Derived::Scalar> mean_regression_bandwidth(
    const Eigen::MatrixBase<Derived>& projected) {
  using Scalar = typename Derived::Scalar;
  const auto n = projected.rows();
  const auto d = projected.cols();
  if (n < 2 || d < 1) throw Error(ErrorKind::DegenerateDesign, "bandwidth rule needs n >= 2 and d >= 1");
  Bandwidth<Scalar> bw;
  bw.scale.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto col = projected.col(j);
    const Scalar mean = col.mean();
    const Scalar var = (col.array() - mean).square().sum() / Scalar(n - 1);
    if (!(var > Scalar(0)) || !std::isfinite(var)) {
      std::ostringstream os;
      os << "projected coordinate " << j << " has zero variance";
      throw Error(ErrorKind::DegenerateDesign, os.str());
    }
    bw.scale(j) = std::sqrt(var);
  }
  using std::pow;
  bw.h_mean = pow(Scalar(n), Scalar(-1) / Scalar(4 + d));
  bw.h = bw.h_mean;
  return bw;
}

/// Rule of thumb for quantile smoothing: h = h_m * quantile_bandwidth_factor(tau).
template <typename Derived, typename Scalar = typename Derived::Scalar>
Bandwidth<Scalar> rule_of_thumb_bandwidth(const Eigen::MatrixBase<Derived>& projected, Scalar tau) {
  Bandwidth<Scalar> bw = mean_regression_bandwidth(projected);
  bw.h = bw.h_mean * quantile_bandwidth_factor(tau);
  return bw;
}

template <typename Scalar = double>
struct SmootherOptions {
  Scalar smoothing = 0;       // IRLS floor on |residual|; 0 means 1e-6 * MAD(y)
  Scalar tolerance = 1e-4;    // IRLS warm-start stopping rule (relative)
  int max_iterations = 200;
  int max_pivots = 200;       // exact vertex exchanges after IRLS
  int max_doublings = 5;
  Scalar weight_cutoff = 1e-14;  // relative; smaller weights are dropped
};

template <typename Scalar = double>
struct LocalQuantileEstimate {
  Scalar q{};
  VectorX<Scalar> s;
  Scalar objective{};
  Scalar h_used{};  // applied bandwidth after any doubling
  int iterations = 0;
  int pivots = 0;
};

template <typename Scalar = double>
struct QuantileFit {
  VectorX<Scalar> fitted;
  MatrixX<Scalar> slopes;
  Scalar tau{};
  Bandwidth<Scalar> bandwidth;
};

namespace detail {

template <typename DerivedP, typename DerivedA, typename Scalar>
VectorX<Scalar> kernel_weights(const Eigen::MatrixBase<DerivedP>& projected,
                               const Eigen::MatrixBase<DerivedA>& at, Scalar h,
                               const VectorX<Scalar>& scale) {
  const auto n = projected.rows();
  const auto d = projected.cols();
  VectorX<Scalar> sq = VectorX<Scalar>::Zero(n);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Scalar c = h * scale(j);
    sq.array() += ((projected.col(j).array() - at(j)) / c).square();
  }
  using std::pow;
  const Scalar norm = pow(Scalar(2) * std::numbers::pi_v<Scalar>, Scalar(-0.5) * Scalar(d));
  VectorX<Scalar> w = norm * (Scalar(-0.5) * sq.array()).exp();
  // vectorized exp saturates at a subnormal instead of zero
  w = (w.array() < std::numeric_limits<Scalar>::min()).select(Scalar(0), w);
  return w;
}

template <typename Scalar>
Scalar effective_sample_size(const VectorX<Scalar>& w) {
  const Scalar top = w.maxCoeff();
  if (!(top > Scalar(0))) return Scalar(0);
  return w.sum() / top;
}

/// Kernel weights at `at`, doubling the bandwidth while the effective sample
/// size sum(w)/max(w) stays below d + 2.
template <typename DerivedP, typename DerivedA, typename Scalar>
std::pair<VectorX<Scalar>, Scalar> adaptive_weights(const Eigen::MatrixBase<DerivedP>& projected,
                                                    const Eigen::MatrixBase<DerivedA>& at,
                                                    const Bandwidth<Scalar>& bw, int max_doublings) {
  const Scalar needed = Scalar(projected.cols() + 2);
  Scalar h = bw.h;
  for (int attempt = 0;; ++attempt) {
    VectorX<Scalar> w = kernel_weights(projected, at, h, bw.scale);
    if (effective_sample_size(w) >= needed) return {std::move(w), h};
    if (attempt == max_doublings) break;
    h *= Scalar(2);
  }
  std::ostringstream os;
  os << "effective kernel sample below " << needed << " after " << max_doublings
     << " bandwidth doublings (h = " << h << ")";
  throw Error(ErrorKind::BandwidthTooSmall, os.str());
}

template <typename Derived>
void check_dimensions(Eigen::Index n, Eigen::Index d, const Eigen::MatrixBase<Derived>& y,
                      Eigen::Index at_size) {
  if (y.size() != n) throw Error(ErrorKind::Usage, "response length differs from projected rows");
  if (at_size != d) throw Error(ErrorKind::Usage, "query point dimension differs from projection");
  if (n < 1 || d < 1) throw Error(ErrorKind::Usage, "empty projected design");
}

template <typename Scalar>
Scalar default_smoothing(const VectorX<Scalar>& y) {
  const Scalar mad = median_absolute_deviation(y);
  return Scalar(1e-6) * (mad > Scalar(0) ? mad : Scalar(1));
}

}  // namespace detail

/// sum_k w_k rho_tau(y_k - q - s'(t_k - at)) with w the kernel weights at
/// `at` under the applied bandwidth h. This is the objective the local fit
/// minimizes; it is exposed so callers can audit a returned solution.
template <typename DerivedP, typename DerivedY, typename DerivedA, typename DerivedS,
          typename Scalar = typename DerivedP::Scalar>
Scalar local_check_objective(const Eigen::MatrixBase<DerivedP>& projected,
                             const Eigen::MatrixBase<DerivedY>& y,
                             const Eigen::MatrixBase<DerivedA>& at, Scalar tau, Scalar h,
                             const VectorX<Scalar>& scale, Scalar q,
                             const Eigen::MatrixBase<DerivedS>& s) {
  const CheckLoss<Scalar> loss(tau);
  const VectorX<Scalar> w = detail::kernel_weights(projected, at, h, scale);
  const VectorX<Scalar> fitted =
      (projected.rowwise() - at.derived().transpose().template cast<Scalar>()) * s.derived() +
      VectorX<Scalar>::Constant(projected.rows(), q);
  Scalar total = 0;
  for (Eigen::Index k = 0; k < projected.rows(); ++k) total += w(k) * loss(y(k) - fitted(k));
  return total;
}

/// Local linear check-loss fit at `at`: the intercept estimates the
/// conditional quantile, the slope its gradient in projected coordinates.
/// Bandwidth is doubled (at most options.max_doublings times) where the
/// kernel sample is too thin.
template <typename DerivedP, typename DerivedY, typename DerivedA,
          typename Scalar = typename DerivedP::Scalar>
LocalQuantileEstimate<Scalar> local_linear_quantile(const Eigen::MatrixBase<DerivedP>& projected,
                                                    const Eigen::MatrixBase<DerivedY>& y,
                                                    const Eigen::MatrixBase<DerivedA>& at, Scalar tau,
                                                    const Bandwidth<Scalar>& bandwidth,
                                                    SmootherOptions<Scalar> options = {}) {
  const CheckLoss<Scalar> loss(tau);
  const auto n = projected.rows();
  const auto d = projected.cols();
  detail::check_dimensions(n, d, y, at.size());
  if (bandwidth.scale.size() != d) throw Error(ErrorKind::Usage, "bandwidth scale has wrong dimension");
  if (!at.allFinite()) throw Error(ErrorKind::NumericDomain, "query point is not finite");

  auto [weights, h] = detail::adaptive_weights(projected, at, bandwidth, options.max_doublings);

  // Active set with the local design scaled by the coordinate bandwidths;
  // column k is (1, (t_k - at) / spread).
  const Scalar cutoff = options.weight_cutoff * weights.maxCoeff();
  Eigen::Index m = 0;
  for (Eigen::Index k = 0; k < n; ++k) m += weights(k) > cutoff ? 1 : 0;
  CheckRegressionProblem<Scalar> problem;
  problem.design.resize(d + 1, m);
  problem.weights.resize(m);
  problem.response.resize(m);
  VectorX<Scalar> spread(d);
  for (Eigen::Index j = 0; j < d; ++j) spread(j) = h * bandwidth.scale(j);
  for (Eigen::Index k = 0, r = 0; k < n; ++k) {
    if (!(weights(k) > cutoff)) continue;
    problem.design(0, r) = Scalar(1);
    for (Eigen::Index j = 0; j < d; ++j) problem.design(j + 1, r) = (projected(k, j) - at(j)) / spread(j);
    problem.weights(r) = weights(k);
    problem.response(r) = y(k);
    ++r;
  }

  CheckRegressionOptions<Scalar> solver;
  solver.smoothing = options.smoothing > Scalar(0) ? options.smoothing
                                                   : detail::default_smoothing(VectorX<Scalar>(y));
  solver.tolerance = options.tolerance;
  solver.max_iterations = options.max_iterations;
  solver.max_pivots = options.max_pivots;
  const auto result = solve_check_regression(problem, tau, solver);

  LocalQuantileEstimate<Scalar> est;
  est.q = result.coef(0);
  est.s = result.coef.tail(d).cwiseQuotient(spread);
  est.objective = result.objective;
  est.h_used = h;
  est.iterations = result.iterations;
  est.pivots = result.pivots;
  return est;
}

/// Local linear quantile fit at every sample row (leave-self-in).
template <typename DerivedP, typename DerivedY, typename Scalar = typename DerivedP::Scalar>
QuantileFit<Scalar> fit_all_quantiles(const Eigen::MatrixBase<DerivedP>& projected,
                                      const Eigen::MatrixBase<DerivedY>& y, Scalar tau,
                                      const Bandwidth<Scalar>& bandwidth,
                                      SmootherOptions<Scalar> options = {}) {
  const auto n = projected.rows();
  const auto d = projected.cols();
  detail::check_dimensions(n, d, y, d);
  if (!(options.smoothing > Scalar(0))) options.smoothing = detail::default_smoothing(VectorX<Scalar>(y));
  QuantileFit<Scalar> fit;
  fit.fitted.resize(n);
  fit.slopes.resize(n, d);
  fit.tau = tau;
  fit.bandwidth = bandwidth;
  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      const auto est = local_linear_quantile(projected, y, projected.row(i).transpose(), tau, bandwidth, options);
      fit.fitted(i) = est.q;
      fit.slopes.row(i) = est.s.transpose();
    } catch (const Error& e) {
      std::ostringstream os;
      os << "local quantile fit failed at sample " << i << ": " << e.what();
      throw Error(e.kind(), os.str());
    }
  }
  if (!fit.fitted.allFinite()) throw Error(ErrorKind::NumericDomain, "non-finite fitted quantile");
  return fit;
}

/// Kernel-weighted mean sum_k y_k K_k / sum_k K_k at `at`.
template <typename DerivedP, typename DerivedY, typename DerivedA,
          typename Scalar = typename DerivedP::Scalar>
Scalar nadaraya_watson_mean(const Eigen::MatrixBase<DerivedP>& projected,
                            const Eigen::MatrixBase<DerivedY>& y,
                            const Eigen::MatrixBase<DerivedA>& at, const Bandwidth<Scalar>& bandwidth) {
  detail::check_dimensions(projected.rows(), projected.cols(), y, at.size());
  if (!at.allFinite()) throw Error(ErrorKind::NumericDomain, "query point is not finite");
  const VectorX<Scalar> w = detail::kernel_weights(projected, at, bandwidth.h, bandwidth.scale);
  const Scalar total = w.sum();
  if (!(total > Scalar(0))) throw Error(ErrorKind::BandwidthTooSmall, "all kernel weights vanish");
  return w.dot(y.derived().template cast<Scalar>()) / total;
}

template <typename DerivedP, typename DerivedY, typename Scalar = typename DerivedP::Scalar>
VectorX<Scalar> fit_all_means(const Eigen::MatrixBase<DerivedP>& projected,
                              const Eigen::MatrixBase<DerivedY>& y, const Bandwidth<Scalar>& bandwidth) {
  VectorX<Scalar> fitted(projected.rows());
  for (Eigen::Index i = 0; i < projected.rows(); ++i) {
    try {
      fitted(i) = nadaraya_watson_mean(projected, y, projected.row(i).transpose(), bandwidth);
    } catch (const Error& e) {
      std::ostringstream os;
      os << "kernel mean failed at sample " << i << ": " << e.what();
      throw Error(e.kind(), os.str());
    }
  }
  return fitted;
}

}  // namespace cqs
