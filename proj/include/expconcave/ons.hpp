#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "expconcave/data.hpp"
#include "expconcave/linalg.hpp"
#include "expconcave/losses.hpp"

namespace expconcave {

struct OnsConfig {
  double eta1 = 1.0;
  double smoothing_a = 1.0;
  double radius = 1.0;
  double theta = 0.0;
  /// Use v = ell'(y <w, x>) x without the label factor.
  bool literal_gradient = false;

  void validate() const {
    if (!(eta1 > 0.0)) throw std::invalid_argument("OnsConfig: eta1 must be positive");
    if (!(smoothing_a > 0.0)) throw std::invalid_argument("OnsConfig: smoothing constant must be positive");
    if (!(radius > 0.0)) throw std::invalid_argument("OnsConfig: radius must be positive");
  }
};

/// eta1 = max(1, 3 / (theta beta)), a = eta1^2 G^2 d / (4 R^2).
inline OnsConfig default_ons_config(const LossSpec& loss, double theta, Index dim) {
  if (!(theta > 0.0)) throw std::invalid_argument("default_ons_config: theta must be positive");
  OnsConfig c;
  c.theta = theta;
  c.radius = loss.radius;
  c.eta1 = std::max(1.0, 3.0 / (theta * loss.beta));
  c.smoothing_a = c.eta1 * c.eta1 * loss.lipschitz * loss.lipschitz * static_cast<double>(dim) /
                  (4.0 * loss.radius * loss.radius);
  return c;
}

struct LearnerState {
  VectorXd iterate;
  SpdState spd;
  std::size_t steps_taken = 0;
  VectorXd sum_w;
  double cumulative_loss = 0.0;

  Index dim() const { return iterate.size(); }
  /// Index i of the example the learner will consume next (1-based).
  std::size_t step_index() const { return steps_taken + 1; }
};

/// One row of the iterate trace.
struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double w_norm = 0.0;
  double quad = 0.0;
  double logdet = 0.0;
};

/// w_1 = 0, M_0 = a I.
inline LearnerState ons_init(const OnsConfig& config, Index dim) {
  config.validate();
  if (dim < 1) throw std::invalid_argument("ons_init: dimension must be >= 1");
  return LearnerState{VectorXd::Zero(dim), SpdState(dim, config.smoothing_a), 0, VectorXd::Zero(dim), 0.0};
}

inline VectorXd margin_gradient(const LossSpec& loss, const VectorXd& w, const VectorXd& x, double y,
                                bool literal = false) {
  const double z = y * w.dot(x);
  const double g = loss_derivative(loss, z);
  return literal ? VectorXd(g * x) : VectorXd(y * g * x);
}

/// Consumes (x, y):
///   M_i = M_{i-1} + x x^T,
///   v = y ell'(y <w_i, x>) x,
///   w_{i+1} = argmin_{||w|| <= R} eta_i <w, v> + 1/2 ||w - w_i||^2_{Z_i}
/// with Z_i = M_i / i and eta_i = eta1 / i. The unconstrained minimizer is
/// u = w_i - eta1 M_i^{-1} v; the constrained one is its M_i-projection.
inline StepRecord ons_step(LearnerState& state, const OnsConfig& config, const LossSpec& loss,
                           const VectorXd& x, double y) {
  detail::require_dim(state.dim(), x.size(), "ons_step");
  const double z = y * state.iterate.dot(x);
  const double loss_now = loss_value(loss, z);

  const double quad = state.spd.rank_one_update(x);
  const VectorXd v = margin_gradient(loss, state.iterate, x, y, config.literal_gradient);
  const VectorXd u = state.iterate - config.eta1 * (state.spd.inverse() * v);

  state.sum_w += state.iterate;
  state.cumulative_loss += loss_now;
  ++state.steps_taken;
  state.iterate = project_ball(state.spd, u, config.radius);

  return {state.steps_taken, loss_now, state.iterate.norm(), quad, state.spd.logdet()};
}

/// (1/n) sum_{i<=n} w_i over the n consumed examples.
inline VectorXd ons_average(const LearnerState& state) {
  if (state.steps_taken == 0) throw std::logic_error("ons_average: no steps taken");
  return state.sum_w / static_cast<double>(state.steps_taken);
}

/// Projected online gradient descent with step c / sqrt(i); a slow-rate
/// reference for comparison.
struct OgdState {
  VectorXd iterate;
  std::size_t steps_taken = 0;
  VectorXd sum_w;
  double cumulative_loss = 0.0;

  explicit OgdState(Index dim) : iterate(VectorXd::Zero(dim)), sum_w(VectorXd::Zero(dim)) {}
  Index dim() const { return iterate.size(); }
};

inline StepRecord ogd_baseline_step(OgdState& state, const LossSpec& loss, const VectorXd& x, double y,
                                    double step_c, bool literal_gradient = false) {
  detail::require_dim(state.dim(), x.size(), "ogd_baseline_step");
  if (!(step_c > 0.0)) throw std::invalid_argument("ogd_baseline_step: step constant must be positive");
  const double loss_now = loss_value(loss, y * state.iterate.dot(x));
  const VectorXd v = margin_gradient(loss, state.iterate, x, y, literal_gradient);
  state.sum_w += state.iterate;
  state.cumulative_loss += loss_now;
  ++state.steps_taken;
  const double step = step_c / std::sqrt(static_cast<double>(state.steps_taken));
  state.iterate = project_ball_euclidean(state.iterate - step * v, loss.radius);
  return {state.steps_taken, loss_now, state.iterate.norm(), 0.0, 0.0};
}

/// sum_i losses[i] - sum_i ell(y_i <comparator, x_i>).
inline double regret_of_run(std::span<const double> losses, const VectorXd& comparator, const Dataset& data,
                            const LossSpec& loss) {
  if (losses.empty()) throw std::invalid_argument("regret_of_run: empty trace");
  if (static_cast<Index>(losses.size()) != data.size()) {
    throw std::invalid_argument("regret_of_run: trace length differs from dataset size");
  }
  detail::require_dim(data.dim(), comparator.size(), "regret_of_run");
  const VectorXd margins = (data.features * comparator).cwiseProduct(data.labels);
  double regret = 0.0;
  for (Index i = 0; i < data.size(); ++i) regret += losses[static_cast<std::size_t>(i)] - loss_value(loss, margins(i));
  return regret;
}

/// Runs the online learner over every example of a dataset, returning the
/// per-step trace.
inline std::vector<StepRecord> run_ons(LearnerState& state, const OnsConfig& config, const LossSpec& loss,
                                       const Dataset& data) {
  std::vector<StepRecord> trace;
  trace.reserve(static_cast<std::size_t>(data.size()));
  VectorXd x(data.dim());
  for (Index i = 0; i < data.size(); ++i) {
    x = data.features.row(i).transpose();
    trace.push_back(ons_step(state, config, loss, x, data.labels(i)));
  }
  return trace;
}

inline std::vector<StepRecord> run_ogd(OgdState& state, const LossSpec& loss, const Dataset& data,
                                       double step_c) {
  std::vector<StepRecord> trace;
  trace.reserve(static_cast<std::size_t>(data.size()));
  VectorXd x(data.dim());
  for (Index i = 0; i < data.size(); ++i) {
    x = data.features.row(i).transpose();
    trace.push_back(ogd_baseline_step(state, loss, x, data.labels(i), step_c));
  }
  return trace;
}

/// step,loss,w_norm,quad,logdet
inline void write_trace_csv(std::ostream& out, std::span<const StepRecord> trace) {
  out << "step,loss,w_norm,quad,logdet\n";
  for (const auto& r : trace) {
    out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.w_norm) << ','
        << format_double(r.quad) << ',' << format_double(r.logdet) << '\n';
  }
}

}  // namespace expconcave
