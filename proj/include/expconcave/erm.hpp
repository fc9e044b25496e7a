#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "expconcave/data.hpp"
#include "expconcave/linalg.hpp"
#include "expconcave/losses.hpp"

namespace expconcave {

struct ErmConfig {
  double radius = 1.0;
  /// Bound on ||w - P(w - grad F(w))||, P the Euclidean ball projection.
  double grad_tol = 1e-9;
  std::size_t max_iters = 100000;

  void validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("ErmConfig: radius must be positive");
    if (!(grad_tol > 0.0)) throw std::invalid_argument("ErmConfig: grad_tol must be positive");
    if (max_iters < 1) throw std::invalid_argument("ErmConfig: max_iters must be >= 1");
  }
};

struct ErmResult {
  VectorXd w;
  double objective = 0.0;
  double stationarity = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

// Fixed-order pairwise sum so results do not depend on how callers batch.
inline double pairwise_sum(const double* v, Index n) {
  if (n <= 32) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const Index half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

}  // namespace detail

/// (1/n) sum_i ell(y_i <w, x_i>).
inline double empirical_risk(const Dataset& data, const LossSpec& loss, const VectorXd& w) {
  detail::require_dim(data.dim(), w.size(), "empirical risk");
  if (data.empty()) throw std::invalid_argument("empirical_risk: empty dataset");
  VectorXd values = (data.features * w).cwiseProduct(data.labels);
  for (Index i = 0; i < values.size(); ++i) values(i) = loss_value(loss, values(i));
  return detail::pairwise_sum(values.data(), values.size()) / static_cast<double>(data.size());
}

/// Empirical risk and its gradient (1/n) sum_i y_i ell'(y_i <w, x_i>) x_i.
inline double empirical_risk_and_gradient(const Dataset& data, const LossSpec& loss, const VectorXd& w,
                                          VectorXd& grad) {
  detail::require_dim(data.dim(), w.size(), "empirical risk");
  const Index n = data.size();
  const VectorXd margins = (data.features * w).cwiseProduct(data.labels);
  VectorXd values(n);
  VectorXd weights(n);
  for (Index i = 0; i < n; ++i) {
    values(i) = loss_value(loss, margins(i));
    weights(i) = data.labels(i) * loss_derivative(loss, margins(i));
  }
  grad = data.features.transpose() * weights / static_cast<double>(n);
  return detail::pairwise_sum(values.data(), n) / static_cast<double>(n);
}

inline double projected_gradient_norm(const VectorXd& w, const VectorXd& grad, double radius) {
  return (w - project_ball_euclidean(w - grad, radius)).norm();
}

/// F(w + delta) - F(w), accumulated from per-example loss differences.
inline double empirical_risk_difference(const Dataset& data, const LossSpec& loss, const VectorXd& w,
                                        const VectorXd& delta) {
  const VectorXd margins = (data.features * w).cwiseProduct(data.labels);
  const VectorXd shifts = (data.features * delta).cwiseProduct(data.labels);
  VectorXd diffs(data.size());
  for (Index i = 0; i < data.size(); ++i) diffs(i) = loss_difference(loss, margins(i), shifts(i));
  return detail::pairwise_sum(diffs.data(), diffs.size()) / static_cast<double>(data.size());
}

/// Minimizes the empirical risk over the R-ball by projected gradient descent
/// from w = 0 with a backtracking (halving) search along the projection arc.
/// A step is accepted when it meets both the Armijo condition and the
/// quadratic upper bound implied by its length. When the predicted change is
/// below what radial rounding on the sphere can perturb, function values no
/// longer resolve progress and the upper bound is checked through gradients
/// instead. The objective never increases beyond that rounding level.
/// On non-convergence the best iterate is returned with converged = false.
inline ErmResult erm_solve(const Dataset& data, const LossSpec& loss, const ErmConfig& config) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("erm_solve: empty dataset");
  constexpr double kSufficientDecrease = 1e-4;
  constexpr int kMaxHalvings = 60;
  constexpr double kMaxStep = 1e8;

  ErmResult res;
  res.w = VectorXd::Zero(data.dim());
  VectorXd grad;
  VectorXd trial_grad;
  empirical_risk_and_gradient(data, loss, res.w, grad);
  double step = 1.0;

  for (std::size_t it = 0; it < config.max_iters; ++it) {
    res.stationarity = projected_gradient_norm(res.w, grad, config.radius);
    if (res.stationarity <= config.grad_tol) {
      res.converged = true;
      break;
    }
    const double rounding = 4.0 * std::numeric_limits<double>::epsilon() * config.radius * grad.norm();
    step = std::min(2.0 * step, kMaxStep);
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
      const VectorXd trial = project_ball_euclidean(res.w - step * grad, config.radius);
      const VectorXd delta = trial - res.w;
      const double slope = grad.dot(delta);
      const double model = delta.squaredNorm() / (2.0 * step);
      bool ok = false;
      if (std::abs(slope) + model > rounding) {
        const double decrease = empirical_risk_difference(data, loss, res.w, delta);
        ok = decrease <= kSufficientDecrease * slope && decrease <= slope + model;
      } else {
        empirical_risk_and_gradient(data, loss, trial, trial_grad);
        ok = (trial_grad - grad).dot(delta) <= 2.0 * model;
      }
      if (ok) {
        res.w = trial;
        empirical_risk_and_gradient(data, loss, res.w, grad);
        accepted = true;
        break;
      }
    }
    ++res.iterations;
    if (!accepted) break;  // no representable decrease left
  }
  res.stationarity = projected_gradient_norm(res.w, grad, config.radius);
  res.converged = res.stationarity <= config.grad_tol;
  res.objective = empirical_risk(data, loss, res.w);
  return res;
}

}  // namespace expconcave
