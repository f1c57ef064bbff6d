#pragma once

// Weighted linear regression under the check loss:
//   minimize_theta  sum_k w_k rho_tau(y_k - x_k' theta)
// solved by iteratively reweighted least squares followed by exact
// simplex-style pivoting between vertices of the piecewise-linear objective.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "cqs/linalg.hpp"

namespace cqs {

template <typename Scalar = double>
struct CheckRegressionProblem {
  MatrixX<Scalar> design;    // q x m, one column per observation
  VectorX<Scalar> response;  // m
  VectorX<Scalar> weights;   // m, nonnegative
};

template <typename Scalar = double>
struct CheckRegressionOptions {
  Scalar smoothing = 1e-6;    // IRLS floor on |residual| (absolute)
  Scalar tolerance = 1e-4;    // IRLS relative objective change per eps level
  int max_iterations = 200;
  int max_pivots = 200;
};

template <typename Scalar = double>
struct CheckRegressionResult {
  VectorX<Scalar> coef;
  Scalar objective{};
  int iterations = 0;  // IRLS sweeps
  int pivots = 0;      // vertex exchanges
};

template <typename Scalar>
Scalar check_objective(const CheckRegressionProblem<Scalar>& problem, Scalar tau,
                       const VectorX<Scalar>& coef) {
  const VectorX<Scalar> r = problem.response - problem.design.transpose() * coef;
  Scalar total = 0;
  for (Eigen::Index k = 0; k < r.size(); ++k)
    total += problem.weights(k) * (r(k) < Scalar(0) ? tau - Scalar(1) : tau) * r(k);
  return total;
}

namespace detail {

template <typename Scalar>
VectorX<Scalar> solve_normal_equations(MatrixX<Scalar>& gram, const VectorX<Scalar>& rhs) {
  gram.template triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  Eigen::LDLT<MatrixX<Scalar>> ldlt(gram);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
      ldlt.vectorD().minCoeff() > std::numeric_limits<Scalar>::epsilon() * ldlt.vectorD().maxCoeff()) {
    return ldlt.solve(rhs);
  }
  return gram.completeOrthogonalDecomposition().solve(rhs);
}

/// One IRLS pass: returns the check-loss objective at theta and accumulates
/// the next iterate's normal equations (lower triangle) in gram/rhs.
/// eps <= 0 requests plain weighted least squares. Q is the compile-time
/// parameter count, or Eigen::Dynamic.
template <int Q, typename Scalar>
Scalar irls_sweep(const CheckRegressionProblem<Scalar>& problem, Scalar tau, const VectorX<Scalar>& theta,
                  Scalar eps, MatrixX<Scalar>& gram, VectorX<Scalar>& rhs) {
  const auto& design = problem.design;
  const auto& resp = problem.response;
  const auto& w = problem.weights;
  const Eigen::Index q = Q == Eigen::Dynamic ? design.rows() : Q;
  const Eigen::Index m = design.cols();
  const Scalar skew = Scalar(2) * tau - Scalar(1);
  Eigen::Matrix<Scalar, Q, Q> g = Eigen::Matrix<Scalar, Q, Q>::Zero(q, q);
  Eigen::Matrix<Scalar, Q, 1> b = Eigen::Matrix<Scalar, Q, 1>::Zero(q);
  const Eigen::Matrix<Scalar, Q, 1> t = theta;
  Scalar total = 0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const Scalar* x = design.col(k).data();
    Scalar fitted = 0;
    for (Eigen::Index a = 0; a < q; ++a) fitted += t(a) * x[a];
    const Scalar r = resp(k) - fitted;
    total += w(k) * (r < Scalar(0) ? tau - Scalar(1) : tau) * r;
    const Scalar omega = eps > Scalar(0) ? w(k) / std::max(std::abs(r), eps) : w(k);
    const Scalar target = eps > Scalar(0) ? omega * resp(k) + skew * w(k) : omega * resp(k);
    for (Eigen::Index a = 0; a < q; ++a) {
      const Scalar ox = omega * x[a];
      for (Eigen::Index c = 0; c <= a; ++c) g(a, c) += ox * x[c];
      b(a) += target * x[a];
    }
  }
  gram = g;
  rhs = b;
  return total;
}

/// |u| <= u^2 / (2 a) + a / 2 with a = max(|u0|, eps); each sweep minimizes the
/// resulting quadratic surrogate. eps halves whenever a level converges and
/// the loop stops once a halving no longer moves the objective.
template <typename Scalar>
CheckRegressionResult<Scalar> irls(const CheckRegressionProblem<Scalar>& problem, Scalar tau,
                                   const CheckRegressionOptions<Scalar>& options) {
  const Eigen::Index q = problem.design.rows();
  MatrixX<Scalar> gram(q, q);
  VectorX<Scalar> rhs(q);
  auto sweep = [&](const VectorX<Scalar>& theta, Scalar eps) {
    switch (q) {
      case 2: return irls_sweep<2>(problem, tau, theta, eps, gram, rhs);
      case 3: return irls_sweep<3>(problem, tau, theta, eps, gram, rhs);
      case 4: return irls_sweep<4>(problem, tau, theta, eps, gram, rhs);
      default: return irls_sweep<Eigen::Dynamic>(problem, tau, theta, eps, gram, rhs);
    }
  };

  VectorX<Scalar> theta = VectorX<Scalar>::Zero(q);
  sweep(theta, Scalar(0));
  theta = solve_normal_equations(gram, rhs);

  CheckRegressionResult<Scalar> out;
  out.coef = theta;
  out.objective = std::numeric_limits<Scalar>::infinity();
  Scalar prev = std::numeric_limits<Scalar>::infinity();
  Scalar at_last_eps = std::numeric_limits<Scalar>::infinity();
  Scalar eps = options.smoothing;
  const Scalar tiny = std::numeric_limits<Scalar>::min();
  for (int it = 0; it <= options.max_iterations; ++it) {
    const Scalar obj = sweep(theta, eps);
    out.iterations = it;
    if (obj < out.objective) {
      out.objective = obj;
      out.coef = theta;
    }
    if (obj <= tiny) break;
    const Scalar scale = std::abs(obj);
    if (std::abs(prev - obj) <= options.tolerance * scale) {
      if (std::abs(at_last_eps - obj) <= options.tolerance * scale) break;
      at_last_eps = obj;
      eps *= Scalar(0.5);
    }
    prev = obj;
    theta = solve_normal_equations(gram, rhs);
  }
  return out;
}

/// Moves from the vertex nearest `start` along descending edges of the
/// piecewise-linear objective until no edge descends. A vertex is a set of q
/// observations fitted exactly.
template <typename Scalar>
CheckRegressionResult<Scalar> polish_vertex(const CheckRegressionProblem<Scalar>& problem, Scalar tau,
                                            const CheckRegressionResult<Scalar>& start, int max_pivots) {
  const auto& design = problem.design;
  const auto& resp = problem.response;
  const auto& w = problem.weights;
  const Eigen::Index q = design.rows();
  const Eigen::Index m = design.cols();
  if (m < q) return start;

  VectorX<Scalar> r = resp - design.transpose() * start.coef;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto closer = [&](Eigen::Index a, Eigen::Index b) {
    const Scalar ra = std::abs(r(a)), rb = std::abs(r(b));
    return ra < rb || (ra == rb && a < b);
  };
  const auto head = std::min<std::size_t>(order.size(), static_cast<std::size_t>(8 * q));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head), order.end(), closer);

  // Greedy basis of rank q among the smallest residuals.
  std::vector<Eigen::Index> basis;
  MatrixX<Scalar> ortho(q, q);
  for (Eigen::Index k : order) {
    VectorX<Scalar> v = design.col(k);
    const Scalar norm0 = v.norm();
    if (!(norm0 > Scalar(0))) continue;
    for (std::size_t b = 0; b < basis.size(); ++b) {
      const auto col = ortho.col(static_cast<Eigen::Index>(b));
      v -= col.dot(v) * col;
    }
    if (v.norm() > Scalar(1e-8) * norm0) {
      ortho.col(static_cast<Eigen::Index>(basis.size())) = v.normalized();
      basis.push_back(k);
      if (static_cast<Eigen::Index>(basis.size()) == q) break;
    }
  }
  if (static_cast<Eigen::Index>(basis.size()) < q) return start;

  const Scalar zero_tol =
      Scalar(64) * std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), resp.cwiseAbs().maxCoeff());
  std::vector<char> in_basis(static_cast<std::size_t>(m), 0);
  CheckRegressionResult<Scalar> best = start;

  MatrixX<Scalar> xb(q, q);
  VectorX<Scalar> yb(q);
  VectorX<Scalar> g(m);
  std::vector<std::pair<Scalar, Eigen::Index>> breaks;
  breaks.reserve(static_cast<std::size_t>(m));
  int pivots = 0;
  Scalar last_obj = std::numeric_limits<Scalar>::infinity();

  for (;; ++pivots) {
    for (Eigen::Index b = 0; b < q; ++b) {
      xb.row(b) = design.col(basis[static_cast<std::size_t>(b)]).transpose();
      yb(b) = resp(basis[static_cast<std::size_t>(b)]);
    }
    Eigen::FullPivLU<MatrixX<Scalar>> lu(xb);
    if (!lu.isInvertible()) break;
    const VectorX<Scalar> theta = lu.solve(yb);
    const MatrixX<Scalar> inverse = lu.inverse();
    r = resp - design.transpose() * theta;
    std::fill(in_basis.begin(), in_basis.end(), 0);
    for (auto b : basis) {
      r(b) = Scalar(0);
      in_basis[static_cast<std::size_t>(b)] = 1;
    }
    for (Eigen::Index k = 0; k < m; ++k)
      if (std::abs(r(k)) <= zero_tol) r(k) = Scalar(0);

    Scalar obj = 0;
    for (Eigen::Index k = 0; k < m; ++k) obj += w(k) * (r(k) < Scalar(0) ? tau - Scalar(1) : tau) * r(k);
    if (obj < best.objective) {
      best.coef = theta;
      best.objective = obj;
    }
    best.pivots = pivots;
    if (!(obj < last_obj) && pivots > 0) break;  // degenerate cycling
    last_obj = obj;
    if (pivots >= max_pivots) break;

    // Directional derivative of the objective along each edge.
    const MatrixX<Scalar> gains = design.transpose() * inverse;  // m x q
    Scalar best_slope = 0;
    Eigen::Index leave = -1;
    Scalar leave_sign = 0;
    for (Eigen::Index j = 0; j < q; ++j) {
      for (const Scalar sign : {Scalar(1), Scalar(-1)}) {
        Scalar slope = 0;
        Scalar scale = 0;
        for (Eigen::Index k = 0; k < m; ++k) {
          Scalar gk = sign * gains(k, j);
          if (in_basis[static_cast<std::size_t>(k)]) gk = basis[static_cast<std::size_t>(j)] == k ? sign : Scalar(0);
          const Scalar wg = w(k) * gk;
          scale += std::abs(wg);
          if (r(k) > Scalar(0)) {
            slope -= wg * tau;
          } else if (r(k) < Scalar(0)) {
            slope -= wg * (tau - Scalar(1));
          } else {
            slope += std::abs(wg) * (gk < Scalar(0) ? tau : Scalar(1) - tau);
          }
        }
        if (slope < best_slope && slope < -Scalar(1e-12) * scale) {
          best_slope = slope;
          leave = j;
          leave_sign = sign;
        }
      }
    }
    if (leave < 0) break;  // optimal vertex

    // Exact line search: the slope rises by w_k |g_k| at each kink.
    for (Eigen::Index k = 0; k < m; ++k) {
      Scalar gk = leave_sign * gains(k, leave);
      if (in_basis[static_cast<std::size_t>(k)]) gk = Scalar(0);
      g(k) = gk;
    }
    breaks.clear();
    for (Eigen::Index k = 0; k < m; ++k) {
      if (g(k) == Scalar(0) || r(k) == Scalar(0)) continue;
      const Scalar t = r(k) / g(k);
      if (t > Scalar(0)) breaks.emplace_back(t, k);
    }
    std::sort(breaks.begin(), breaks.end());
    Scalar slope = best_slope;
    Eigen::Index enter = -1;
    for (const auto& [t, k] : breaks) {
      slope += w(k) * std::abs(g(k));
      if (slope >= Scalar(0)) {
        enter = k;
        break;
      }
    }
    if (enter < 0) break;
    basis[static_cast<std::size_t>(leave)] = enter;
  }
  return best;
}

}  // namespace detail

/// Solves the weighted check-loss regression. The result's objective is the
/// exact (unsmoothed) check loss at the returned coefficients.
template <typename Scalar>
CheckRegressionResult<Scalar> solve_check_regression(const CheckRegressionProblem<Scalar>& problem, Scalar tau,
                                                     const CheckRegressionOptions<Scalar>& options = {}) {
  CheckRegressionResult<Scalar> warm = detail::irls(problem, tau, options);
  if (warm.objective <= std::numeric_limits<Scalar>::min()) return warm;
  CheckRegressionResult<Scalar> exact = detail::polish_vertex(problem, tau, warm, options.max_pivots);
  exact.iterations = warm.iterations;
  return exact;
}

}  // namespace cqs
