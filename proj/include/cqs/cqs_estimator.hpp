#pragma once

#include "cqs/central_subspace.hpp"
#include "cqs/error.hpp"
#include "cqs/linalg.hpp"
#include "cqs/quantile_smoother.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cqs {

template <typename Scalar = double>
struct OlsFit {
  Scalar intercept{};
  VectorX<Scalar> slope;
};

/// Least squares of `response` on [1, X] by column-pivoted QR.
template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
OlsFit<Scalar> ols_fit(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& response) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (response.size() != n) throw Error(ErrorKind::Usage, "response length differs from predictor rows");
  if (!x.allFinite() || !response.allFinite()) throw Error(ErrorKind::NumericDomain, "regression input is not finite");
  MatrixX<Scalar> design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = x;
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(design);
  qr.setThreshold(Scalar(1e-10));
  if (qr.rank() < p + 1) {
    std::ostringstream os;
    os << "design [1, X] is rank deficient (rank " << qr.rank() << " of " << p + 1 << "); dependent columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p + 1; ++k) {
      const auto c = perm(k);
      if (c == 0) os << " intercept";
      else os << " x" << c - 1;
    }
    throw Error(ErrorKind::RankDeficiency, os.str());
  }
  const VectorX<Scalar> coef = qr.solve(VectorX<Scalar>(response.template cast<Scalar>()));
  return {coef(0), coef.tail(p)};
}

/// (projected predictors, response) -> fitted functional at every row.
template <typename Scalar = double>
using FunctionalEstimator = std::function<VectorX<Scalar>(const MatrixX<Scalar>&, const VectorX<Scalar>&)>;

/// Conditional tau-quantile by local linear fitting, bandwidth recomputed
/// from each projection.
template <typename Scalar = double>
FunctionalEstimator<Scalar> quantile_functional(Scalar tau, SmootherOptions<Scalar> options = {}) {
  CheckLoss<Scalar> check(tau);
  return [tau, options](const MatrixX<Scalar>& projected, const VectorX<Scalar>& y) {
    const auto bw = rule_of_thumb_bandwidth(projected, tau);
    return fit_all_quantiles(projected, y, tau, bw, options).fitted;
  };
}

/// Conditional mean by Nadaraya-Watson with the mean-regression bandwidth.
template <typename Scalar = double>
FunctionalEstimator<Scalar> mean_functional() {
  return [](const MatrixX<Scalar>& projected, const VectorX<Scalar>& y) {
    return fit_all_means(projected, y, mean_regression_bandwidth(projected));
  };
}

template <typename Scalar = double>
struct IterationOptions {
  std::function<Scalar(Scalar)> map;  // applied to fitted values; identity when empty
  bool normalize_columns = true;
};

template <typename Scalar = double>
struct IterationTrace {
  MatrixX<Scalar> vectors;         // p x p, column j is the j-th iterate (column 0 unnormalized seed)
  VectorX<Scalar> eigenvalues;     // of V V', non-increasing
  VectorX<Scalar> singular_values; // of V (after optional column scaling)
  MatrixX<Scalar> eigenvectors;
};

/// Seed direction: OLS slope of the fitted functional on the cs_basis
/// projection, regressed on X. Unnormalized.
template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
VectorX<Scalar> functional_beta(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                                const FunctionalEstimator<Scalar>& functional, const Basis<Scalar>& cs_basis) {
  if (cs_basis.ambient() != x.cols()) throw Error(ErrorKind::Usage, "basis dimension differs from predictor count");
  const MatrixX<Scalar> projected = x * cs_basis.columns;
  const VectorX<Scalar> yy = y.template cast<Scalar>();
  const VectorX<Scalar> fitted = functional(projected, yy);
  if (fitted.size() != x.rows() || !fitted.allFinite())
    throw Error(ErrorKind::NumericDomain, "functional estimate has wrong length or non-finite entries");
  return ols_fit(x, fitted).slope;
}

template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
VectorX<Scalar> quantile_seed_direction(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                                Scalar tau, const Basis<Scalar>& cs_basis, SmootherOptions<Scalar> options = {}) {
  return functional_beta(x, y, quantile_functional(tau, options), cs_basis);
}

namespace detail {

template <typename Scalar>
void require_nondegenerate(const VectorX<Scalar>& beta, Eigen::Index j) {
  if (!(beta.norm() >= Scalar(1e-12))) {
    std::ostringstream os;
    os << "iterate " << j - 1 << " has norm below 1e-12; iteration cannot continue at step " << j;
    throw Error(ErrorKind::DegenerateIterate, os.str());
  }
}

}  // namespace detail

/// Iterates beta_j = mean(T(Y | beta_{j-1}'X_i) X_i), j = 1..p-1, from the
/// seed, then eigendecomposes V V'.
template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
IterationTrace<Scalar> iterate_directions(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                                          const FunctionalEstimator<Scalar>& functional, const VectorX<Scalar>& seed,
                                          const IterationOptions<Scalar>& options = {}) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (seed.size() != p) throw Error(ErrorKind::Usage, "seed length differs from predictor count");
  const MatrixX<Scalar> xx = x.template cast<Scalar>();
  const VectorX<Scalar> yy = y.template cast<Scalar>();
  IterationTrace<Scalar> trace;
  trace.vectors.resize(p, p);
  trace.vectors.col(0) = seed;
  for (Eigen::Index j = 1; j < p; ++j) {
    const VectorX<Scalar> prev = trace.vectors.col(j - 1);
    detail::require_nondegenerate(prev, j);
    const MatrixX<Scalar> projected = xx * (prev / prev.norm());
    VectorX<Scalar> fitted = functional(projected, yy);
    if (fitted.size() != n || !fitted.allFinite())
      throw Error(ErrorKind::NumericDomain, "functional estimate has wrong length or non-finite entries");
    if (options.map) fitted = fitted.unaryExpr(options.map);
    trace.vectors.col(j) = xx.transpose() * fitted / Scalar(n);
  }
  detail::require_nondegenerate(VectorX<Scalar>(trace.vectors.col(p - 1)), p);

  MatrixX<Scalar> v = trace.vectors;
  if (options.normalize_columns) v = v.colwise().normalized();
  auto [values, vectors] = sorted_eigen(MatrixX<Scalar>(v * v.transpose()));
  trace.eigenvalues = values;
  trace.singular_values = values.cwiseSqrt();
  trace.eigenvectors = vectors;
  return trace;
}

template <typename Scalar>
struct DirectionEstimate {
  Basis<Scalar> basis;
  IterationTrace<Scalar> trace;
};

/// Generic functional: seed from the cs_basis projection, iterate, keep the
/// leading `dim` eigenvectors. dim = 1 returns the normalized seed.
template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
DirectionEstimate<Scalar> functional_directions(const Eigen::MatrixBase<DerivedX>& x,
                                                const Eigen::MatrixBase<DerivedY>& y,
                                                const FunctionalEstimator<Scalar>& functional, int dim,
                                                const Basis<Scalar>& cs_basis,
                                                const IterationOptions<Scalar>& options = {}) {
  const auto p = x.cols();
  if (dim < 1 || dim > p) throw Error(ErrorKind::ParameterDomain, "subspace dimension must lie in [1, p]");
  const VectorX<Scalar> seed = functional_beta(x, y, functional, cs_basis);
  DirectionEstimate<Scalar> out;
  if (dim == 1) {
    detail::require_nondegenerate(seed, 1);
    out.trace.vectors = seed;
    out.basis = make_basis(seed, cs_basis.scale);
    return out;
  }
  out.trace = iterate_directions(x, y, functional, seed, options);
  out.basis = make_basis(MatrixX<Scalar>(out.trace.eigenvectors.leftCols(dim)), cs_basis.scale);
  return out;
}

template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
Basis<Scalar> quantile_subspace_basis(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y, Scalar tau,
                               int d_tau, const Basis<Scalar>& cs_basis, SmootherOptions<Scalar> smoother = {},
                               const IterationOptions<Scalar>& options = {}) {
  return functional_directions(x, y, quantile_functional(tau, smoother), d_tau, cs_basis, options).basis;
}

template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
Basis<Scalar> functional_subspace_basis(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                               const FunctionalEstimator<Scalar>& functional, int d_t, const Basis<Scalar>& cs_basis,
                               const IterationOptions<Scalar>& options = {}) {
  return functional_directions(x, y, functional, d_t, cs_basis, options).basis;
}

struct BicResult {
  int dimension = 1;
  std::vector<double> profile;  // G_n(k), k = 1..p
  double penalty = 0;
};

/// 2 n^{3/4} / p.
inline double default_bic_penalty(Eigen::Index n, Eigen::Index p) {
  return 2.0 * std::pow(static_cast<double>(n), 0.75) / static_cast<double>(p);
}

/// argmax_k n * sum_{i<=k} l_i^2 / sum_i l_i^2 - C_n k(k+1)/2; ties go to the
/// smaller k.
template <typename Derived>
BicResult bic_dimension(const Eigen::MatrixBase<Derived>& eigenvalues, Eigen::Index n,
                        std::optional<double> penalty = std::nullopt) {
  const auto p = eigenvalues.size();
  if (p < 1) throw Error(ErrorKind::Usage, "no eigenvalues supplied");
  if (n < 1) throw Error(ErrorKind::ParameterDomain, "sample size must be positive");
  for (Eigen::Index k = 0; k < p; ++k) {
    if (!std::isfinite(static_cast<double>(eigenvalues(k))) || eigenvalues(k) < 0)
      throw Error(ErrorKind::NumericDomain, "eigenvalues must be finite and nonnegative");
    if (k > 0 && eigenvalues(k) > eigenvalues(k - 1))
      throw Error(ErrorKind::Usage, "eigenvalues must be sorted non-increasing");
  }
  const Eigen::VectorXd sq = eigenvalues.template cast<double>().array().square();
  const double total = sq.sum();
  if (!(total > 0)) throw Error(ErrorKind::UndefinedRatio, "all eigenvalues are zero");
  BicResult out;
  out.penalty = penalty.value_or(default_bic_penalty(n, p));
  out.profile.resize(static_cast<std::size_t>(p));
  double partial = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 1; k <= p; ++k) {
    partial += sq(k - 1);
    const double g = static_cast<double>(n) * partial / total -
                     out.penalty * static_cast<double>(k * (k + 1)) / 2.0;
    out.profile[static_cast<std::size_t>(k - 1)] = g;
    if (g > best) {
      best = g;
      out.dimension = static_cast<int>(k);
    }
  }
  return out;
}

template <typename Scalar = double>
struct CqsConfig {
  Scalar tau = Scalar(0.5);
  std::optional<int> d_tau;
  std::optional<int> initial_cs_dim;
  std::optional<int> n_slices;
  std::optional<Basis<Scalar>> initial_basis;  // X-scale replacement for SIR
  SmootherOptions<Scalar> smoother;
  IterationOptions<Scalar> iteration;
  FunctionalEstimator<Scalar> functional;      // defaults to the tau-quantile
};

template <typename Scalar = double>
struct CqsEstimate {
  Basis<Scalar> basis;    // X-scale
  Basis<Scalar> basis_z;  // standardized scale
  IterationTrace<Scalar> trace;
  int cs_dim = 0;
  int d_tau = 0;
  VectorX<Scalar> sir_eigenvalues;
  std::optional<BicResult> cs_selection;
  std::optional<BicResult> d_tau_selection;
};

namespace detail {

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  }
}

}  // namespace detail

/// Standardize, reduce by SIR, estimate the tau-CQS in Z-scale, then map
/// back to X-scale. Missing dimensions are chosen by bic_dimension.
template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
CqsEstimate<Scalar> estimate_cqs(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                                 const CqsConfig<Scalar>& config) {
  const auto n = x.rows();
  const auto p = x.cols();
  CheckLoss<Scalar> check(config.tau);
  if (config.d_tau && (*config.d_tau < 1 || *config.d_tau > p))
    throw Error(ErrorKind::ParameterDomain, "d_tau must lie in [1, p]");
  const MatrixX<Scalar> xx = x.template cast<Scalar>();
  const VectorX<Scalar> yy = y.template cast<Scalar>();
  const auto std_x = detail::staged("standardize", [&] { return standardize(xx); });

  CqsEstimate<Scalar> out;
  SirConfig sir_config;
  sir_config.n_slices = config.n_slices.value_or(default_slice_count(n, p));
  Basis<Scalar> cs_z;
  if (config.initial_basis) {
    sir_config.target_dim = 1;
    const auto reduced = detail::staged("sir", [&] { return sir(xx, yy, sir_config, config.initial_basis); });
    out.sir_eigenvalues = reduced.eigenvalues;
    cs_z = reduced.basis_z;
  } else {
    const auto limit = std::min<int>(static_cast<int>(p), sir_config.n_slices - 1);
    sir_config.target_dim = limit;
    auto reduced = detail::staged("sir", [&] { return sir(xx, yy, sir_config); });
    out.sir_eigenvalues = reduced.eigenvalues;
    int k = 0;
    if (config.initial_cs_dim) {
      k = *config.initial_cs_dim;
      if (k < 1 || k > limit) throw Error(ErrorKind::ParameterDomain, "initial_cs_dim must lie in [1, min(p, slices - 1)]");
    } else {
      out.cs_selection = detail::staged("sir dimension", [&] { return bic_dimension(reduced.eigenvalues, n); });
      k = out.cs_selection->dimension;
    }
    k = std::min<int>(k, static_cast<int>(reduced.basis_z.dim()));
    cs_z = make_basis(MatrixX<Scalar>(reduced.basis_z.columns.leftCols(k)), Scale::StandardizedZ);
  }
  out.cs_dim = static_cast<int>(cs_z.dim());

  const FunctionalEstimator<Scalar> functional =
      config.functional ? config.functional : quantile_functional(config.tau, config.smoother);
  const VectorX<Scalar> seed =
      detail::staged("seed direction", [&] { return functional_beta(std_x.z, yy, functional, cs_z); });

  if (config.d_tau && *config.d_tau == 1) {
    detail::staged("seed direction", [&] {
      detail::require_nondegenerate(seed, 1);
      return 0;
    });
    out.trace.vectors = seed;
    out.d_tau = 1;
    out.basis_z = make_basis(seed, Scale::StandardizedZ);
  } else {
    out.trace = detail::staged("iteration", [&] {
      return iterate_directions(std_x.z, yy, functional, seed, config.iteration);
    });
    if (config.d_tau) {
      out.d_tau = *config.d_tau;
    } else {
      out.d_tau_selection =
          detail::staged("subspace dimension", [&] { return bic_dimension(out.trace.singular_values, n); });
      out.d_tau = out.d_tau_selection->dimension;
    }
    // A selected dimension of one keeps the seed, as a requested one does.
    if (out.d_tau == 1) out.basis_z = make_basis(seed, Scale::StandardizedZ);
    else out.basis_z = make_basis(MatrixX<Scalar>(out.trace.eigenvectors.leftCols(out.d_tau)), Scale::StandardizedZ);
  }
  out.basis = back_transform(out.basis_z, std_x.transform);
  return out;
}

}  // namespace cqs
