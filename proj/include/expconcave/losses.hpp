#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace expconcave {

/// Margin losses ell(z) with z = y * <w, x>.
enum class LossKind { SquaredMargin, Logistic };

/// Raised when a margin falls outside [-R, R]; this means either the
/// hypothesis left the ball or the features were not normalized.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An exp-concave margin loss together with its constants on [-R, R].
///
/// alpha is the exp-concavity constant (exp(-alpha * ell) concave on the
/// margin range), lipschitz bounds |ell'| there, and beta is the curvature
/// constant of the quadratic lower bound, 0.5 * min(alpha, 1 / (4 G R)).
struct LossSpec {
  LossKind kind = LossKind::Logistic;
  double radius = 1.0;
  double alpha = 0.0;
  double lipschitz = 0.0;
  double beta = 0.0;

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

inline constexpr double kMarginSlack = 1e-12;

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::SquaredMargin:
      return "squared";
    case LossKind::Logistic:
      return "logistic";
  }
  return "unknown";
}

inline LossKind parse_loss_kind(std::string_view name) {
  if (name == "logistic") return LossKind::Logistic;
  if (name == "squared") return LossKind::SquaredMargin;
  throw std::invalid_argument("unknown loss '" + std::string(name) +
                              "' (expected logistic or squared)");
}

namespace detail {

inline void check_margin(const LossSpec& spec, double z) {
  if (!(std::abs(z) <= spec.radius + kMarginSlack)) {
    throw DomainError("margin " + std::to_string(z) + " outside [-R, R] with R = " +
                      std::to_string(spec.radius));
  }
}

// ln(1 + e^t) without overflow for large t or cancellation for very negative t.
inline double log1p_exp(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

// 1 / (1 + e^t), stable for either sign of t.
inline double inv_one_plus_exp(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

}  // namespace detail

inline double loss_value(const LossSpec& spec, double z) {
  detail::check_margin(spec, z);
  switch (spec.kind) {
    case LossKind::SquaredMargin:
      return (1.0 - z) * (1.0 - z);
    case LossKind::Logistic:
      return detail::log1p_exp(-z);
  }
  return 0.0;
}

inline double loss_derivative(const LossSpec& spec, double z) {
  detail::check_margin(spec, z);
  switch (spec.kind) {
    case LossKind::SquaredMargin:
      return -2.0 * (1.0 - z);
    case LossKind::Logistic:
      return -detail::inv_one_plus_exp(z);
  }
  return 0.0;
}

inline double loss_second_derivative(const LossSpec& spec, double z) {
  detail::check_margin(spec, z);
  switch (spec.kind) {
    case LossKind::SquaredMargin:
      return 2.0;
    case LossKind::Logistic: {
      const double s = detail::inv_one_plus_exp(z);
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

/// ell(z + dz) - ell(z) without cancellation, for line searches that must
/// resolve decreases far below the rounding error of ell itself.
inline double loss_difference(const LossSpec& spec, double z, double dz) {
  detail::check_margin(spec, z);
  detail::check_margin(spec, z + dz);
  switch (spec.kind) {
    case LossKind::SquaredMargin:
      return -dz * (2.0 * (1.0 - z) - dz);
    case LossKind::Logistic: {
      // ln((1 + e^{-z-dz}) / (1 + e^{-z})) = ln(1 + s (e^{-dz} - 1)), s = 1 / (1 + e^z)
      const double s = detail::inv_one_plus_exp(z);
      return std::log1p(s * std::expm1(-dz));
    }
  }
  return 0.0;
}

inline double curvature_beta(double alpha, double lipschitz, double radius) {
  return 0.5 * std::min(alpha, 1.0 / (4.0 * lipschitz * radius));
}

/// Fills alpha = inf ell'' / ell'^2 and G = sup |ell'| over [-R, R].
/// Both losses have closed forms: the ratio is e^z for the logistic loss and
/// 1 / (2 (1 - z)^2) for the squared margin loss, each minimized at z = -R.
inline LossSpec compute_constants(LossKind kind, double radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("radius must be positive and finite");
  }
  LossSpec spec;
  spec.kind = kind;
  spec.radius = radius;
  switch (kind) {
    case LossKind::SquaredMargin:
      spec.alpha = 1.0 / (2.0 * (1.0 + radius) * (1.0 + radius));
      spec.lipschitz = 2.0 * (1.0 + radius);
      break;
    case LossKind::Logistic:
      spec.alpha = std::exp(-radius);
      spec.lipschitz = 1.0 / (1.0 + std::exp(-radius));
      break;
  }
  spec.beta = curvature_beta(spec.alpha, spec.lipschitz, radius);
  return spec;
}

}  // namespace expconcave
