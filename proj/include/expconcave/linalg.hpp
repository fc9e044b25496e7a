#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "expconcave/verifier.hpp"

namespace expconcave {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the ball projection fails to locate its multiplier.
class ProjectionError : public NumericError {
 public:
  ProjectionError(const std::string& what, double condition)
      : NumericError(what), condition_(condition) {}
  double condition_estimate() const { return condition_; }

 private:
  double condition_;
};

namespace detail {

inline void require_dim(Index expected, Index got, const char* what) {
  if (expected != got) {
    std::ostringstream os;
    os << what << ": dimension mismatch (expected " << expected << ", got " << got << ")";
    throw std::invalid_argument(os.str());
  }
}

inline double logdet_spd(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError("matrix is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline double condition_estimate(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  return ev.maxCoeff() / ev.minCoeff();
}

}  // namespace detail

/// Symmetric positive-definite matrix M with its inverse and log-determinant
/// maintained under rank-1 updates M += x x^T.
///
/// The inverse is updated in O(d^2) per step by the rank-1 inverse-update
/// identity and refreshed from a Cholesky factorization every
/// kRefactorInterval updates, bounding floating-point drift.
class SpdState {
 public:
  static constexpr std::size_t kRefactorInterval = 512;

  /// M = a I.
  SpdState(Index dim, double a)
      : matrix_(MatrixXd::Identity(dim, dim) * a),
        inverse_(MatrixXd::Identity(dim, dim) / a),
        logdet_(static_cast<double>(dim) * std::log(a)) {
    if (dim < 1) throw std::invalid_argument("SpdState: dimension must be >= 1");
    if (!(a > 0.0)) throw std::invalid_argument("SpdState: smoothing constant must be positive");
  }

  /// Starts from an arbitrary SPD matrix (factorized once).
  static SpdState from_matrix(const MatrixXd& m) {
    if (m.rows() != m.cols() || m.rows() < 1) {
      throw std::invalid_argument("SpdState: matrix must be square and non-empty");
    }
    SpdState s(m.rows(), 1.0);
    s.matrix_ = 0.5 * (m + m.transpose());
    s.refactor();
    return s;
  }

  Index dim() const { return matrix_.rows(); }
  const MatrixXd& matrix() const { return matrix_; }
  const MatrixXd& inverse() const { return inverse_; }
  double logdet() const { return logdet_; }
  std::size_t updates_since_refactor() const { return since_refactor_; }

  /// M += x x^T. Returns x^T M_new^{-1} x.
  double rank_one_update(const VectorXd& x) {
    detail::require_dim(dim(), x.size(), "rank_one_update");
    VectorXd g = inverse_ * x;
    double denom = 1.0 + x.dot(g);
    if (!(denom > 0.0)) {
      refactor();
      g = inverse_ * x;
      denom = 1.0 + x.dot(g);
      if (!(denom > 0.0)) throw NumericError("rank_one_update: non-positive update denominator");
    }
    matrix_.noalias() += x * x.transpose();
    inverse_.noalias() -= (g * g.transpose()) / denom;
    logdet_ += std::log1p(x.dot(g));
    if (++since_refactor_ >= kRefactorInterval) refactor();
    return x.dot(inverse_ * x);
  }

  /// Recomputes inverse and log-determinant from a Cholesky factorization of M.
  void refactor() {
    Eigen::LLT<MatrixXd> llt(matrix_);
    if (llt.info() != Eigen::Success) throw NumericError("refactor: matrix is not positive definite");
    inverse_ = llt.solve(MatrixXd::Identity(dim(), dim()));
    inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
    logdet_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    since_refactor_ = 0;
  }

  /// ||M M^{-1} - I||_F.
  double inverse_residual() const {
    return (matrix_ * inverse_ - MatrixXd::Identity(dim(), dim())).norm();
  }

 private:
  MatrixXd matrix_;
  MatrixXd inverse_;
  double logdet_;
  std::size_t since_refactor_ = 0;
};

inline double quad_form(const MatrixXd& m, const VectorXd& u, const VectorXd& v) {
  detail::require_dim(m.rows(), u.size(), "quad_form");
  detail::require_dim(m.rows(), v.size(), "quad_form");
  return u.dot(m * v);
}

/// u^T M v.
inline double quad_form(const SpdState& state, const VectorXd& u, const VectorXd& v) {
  return quad_form(state.matrix(), u, v);
}

struct ProjectionOptions {
  double relative_tol = 1e-10;
  int max_iters = 200;
};

/// argmin over ||w|| <= R of (w - u)^T M (w - u).
///
/// Outside the ball the minimizer is w(lambda) = (M + lambda I)^{-1} M u for
/// the unique lambda > 0 with ||w(lambda)|| = R. lambda is found by Newton's
/// method on the secular function 1/||w(lambda)|| - 1/R, which is increasing
/// and nearly linear in lambda, falling back to bisection whenever a step
/// leaves the current bracket. Every evaluation factorizes M + lambda I anew.
inline VectorXd project_ball(const MatrixXd& m, const VectorXd& u, double radius,
                             const ProjectionOptions& opts = {}) {
  detail::require_dim(m.rows(), u.size(), "project_ball");
  if (!(radius > 0.0)) throw std::invalid_argument("project_ball: radius must be positive");
  if (u.norm() <= radius) return u;

  const Index d = m.rows();
  const VectorXd mu = m * u;
  const MatrixXd eye = MatrixXd::Identity(d, d);

  // ||w(lambda)|| <= ||M u|| / lambda, so the root lies below ||M u|| / R.
  double lo = 0.0;
  double hi = mu.norm() / radius;
  double lambda = 0.0;
  VectorXd w = u;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    Eigen::LLT<MatrixXd> llt(m + lambda * eye);
    if (llt.info() != Eigen::Success) {
      throw ProjectionError("project_ball: shifted matrix not positive definite",
                            detail::condition_estimate(m));
    }
    w = llt.solve(mu);
    const double norm = w.norm();
    if (std::abs(norm - radius) <= opts.relative_tol * radius) {
      if (norm > radius) w *= radius / norm;
      return w;
    }
    if (norm > radius) {
      lo = lambda;
    } else {
      hi = lambda;
    }
    // d/dlambda (1/||w||) = w^T (M + lambda I)^{-1} w / ||w||^3
    const double slope = w.dot(llt.solve(w)) / (norm * norm * norm);
    const double secular = 1.0 / norm - 1.0 / radius;
    double next = lambda - secular / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    lambda = next;
  }
  std::ostringstream os;
  os << "project_ball: no convergence after " << opts.max_iters
     << " iterations (condition estimate " << detail::condition_estimate(m) << ")";
  throw ProjectionError(os.str(), detail::condition_estimate(m));
}

inline VectorXd project_ball(const SpdState& state, const VectorXd& u, double radius,
                             const ProjectionOptions& opts = {}) {
  return project_ball(state.matrix(), u, radius, opts);
}

/// Euclidean projection onto the R-ball.
inline VectorXd project_ball_euclidean(const VectorXd& u, double radius) {
  const double norm = u.norm();
  if (norm <= radius) return u;
  return u * (radius / norm);
}

/// Checks ln det(M_n) - ln det(a I) <= d ln(1 + n / (a d)) for M_n = a I + sum x x^T.
inline VerifierRecord logdet_delta_bound_check(double a, Index dim, std::span<const VectorXd> xs,
                                               double tolerance = 1e-9) {
  SpdState state(dim, a);
  const double start = state.logdet();
  for (const auto& x : xs) state.rank_one_update(x);
  const double lhs = state.logdet() - start;
  const double n = static_cast<double>(xs.size());
  const double d = static_cast<double>(dim);
  const double rhs = d * std::log1p(n / (a * d));
  return make_record("logdet_growth_bound", lhs, rhs, tolerance);
}

/// Applies x to a copy of the state and checks x^T M_new^{-1} x <= ln det M_new - ln det M_old.
inline VerifierRecord trace_lemma_check(const SpdState& state_before, const VectorXd& x,
                                        double tolerance = 1e-9) {
  SpdState state = state_before;
  const double quad = state.rank_one_update(x);
  return make_record("trace_logdet_lemma", quad, state.logdet() - state_before.logdet(), tolerance);
}

}  // namespace expconcave
