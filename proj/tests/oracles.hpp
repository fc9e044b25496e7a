#pragma once

// Independent reference computations used only by the tests. None of these
// share a code path with the library routine they check.

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double central_difference(const std::function<double(double)>& f, double z, double h) {
  return (f(z + h) - f(z - h)) / (2.0 * h);
}

/// inf over a uniform grid of f''/f'^2 with both derivatives taken by finite
/// differences of f.
inline double grid_exp_concavity(const std::function<double(double)>& f, double lo, double hi, int points) {
  const double h = 1e-4;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double z = lo + (hi - lo) * k / (points - 1);
    const double d1 = (f(z + h) - f(z - h)) / (2.0 * h);
    const double d2 = (f(z + h) - 2.0 * f(z) + f(z - h)) / (h * h);
    best = std::min(best, d2 / (d1 * d1));
  }
  return best;
}

inline double grid_sup_abs(const std::function<double(double)>& f, double lo, double hi, int points) {
  const double h = 1e-6;
  double best = 0.0;
  for (int k = 0; k < points; ++k) {
    const double z = lo + (hi - lo) * k / (points - 1);
    best = std::max(best, std::abs((f(z + h) - f(z - h)) / (2.0 * h)));
  }
  return best;
}

/// u^T M v by explicit loops.
inline double naive_quad(const MatrixXd& m, const VectorXd& u, const VectorXd& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) s += u(i) * m(i, j) * v(j);
  }
  return s;
}

/// ln det via LU with full pivoting.
inline double lu_logdet(const MatrixXd& m) { return std::log(m.fullPivLu().determinant()); }

inline MatrixXd lu_inverse(const MatrixXd& m) { return m.fullPivLu().inverse(); }

/// argmin over the disk ||w|| <= R in 2-D of (w - u)^T M (w - u): exhaustive
/// search on a (2k+1)^2 grid over [-R, R]^2, then pattern search in polar
/// coordinates (radius clamped to R) down to step 1e-13.
inline VectorXd grid_project_2d(const MatrixXd& m, const VectorXd& u, double radius, int half_points = 2000) {
  const double a = m(0, 0);
  const double b = m(0, 1);
  const double c = m(1, 1);
  auto objective = [&](double x, double y) {
    const double dx = x - u(0);
    const double dy = y - u(1);
    return a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
  };
  double best = std::numeric_limits<double>::infinity();
  double bx = 0.0;
  double by = 0.0;
  const double h = radius / half_points;
  for (int i = -half_points; i <= half_points; ++i) {
    const double x = i * h;
    for (int j = -half_points; j <= half_points; ++j) {
      const double y = j * h;
      if (x * x + y * y > radius * radius) continue;
      const double f = objective(x, y);
      if (f < best) {
        best = f;
        bx = x;
        by = y;
      }
    }
  }
  double r = std::hypot(bx, by);
  double phi = std::atan2(by, bx);
  auto polar = [&](double rr, double pp) { return objective(rr * std::cos(pp), rr * std::sin(pp)); };
  double step_r = h;
  double step_p = h / std::max(radius, 1e-12);
  while (step_r > 1e-13 || step_p > 1e-13) {
    bool moved = false;
    const double cand[4][2] = {{r + step_r, phi}, {r - step_r, phi}, {r, phi + step_p}, {r, phi - step_p}};
    for (const auto& cp : cand) {
      const double rr = std::clamp(cp[0], 0.0, radius);
      const double f = polar(rr, cp[1]);
      if (f < best) {
        best = f;
        r = rr;
        phi = cp[1];
        moved = true;
      }
    }
    if (!moved) {
      step_r *= 0.5;
      step_p *= 0.5;
    }
  }
  VectorXd w(2);
  w << r * std::cos(phi), r * std::sin(phi);
  return w;
}

/// Accelerated projected gradient (FISTA) with fixed step 1 / lipschitz over
/// the Euclidean R-ball, run until the iterate stops moving.
inline VectorXd fista_ball(const std::function<VectorXd(const VectorXd&)>& gradient, VectorXd start, double lipschitz,
                           double radius, int max_iters = 200000) {
  auto project = [&](const VectorXd& v) {
    const double n = v.norm();
    return n <= radius ? v : VectorXd(v * (radius / n));
  };
  VectorXd x = project(start);
  VectorXd y = x;
  double t = 1.0;
  for (int k = 0; k < max_iters; ++k) {
    const VectorXd next = project(y - gradient(y) / lipschitz);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / tn) * (next - x);
    const double moved = (next - x).norm();
    x = next;
    t = tn;
    if (moved < 1e-15 && k > 100) break;
  }
  return x;
}

/// Uniform point in the unit ball by rejection from the cube.
inline VectorXd rejection_ball(std::mt19937_64& rng, Eigen::Index d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd x(d);
  do {
    for (Eigen::Index j = 0; j < d; ++j) x(j) = u(rng);
  } while (x.squaredNorm() > 1.0);
  return x;
}

}  // namespace oracle
