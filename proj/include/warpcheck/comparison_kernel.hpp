#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "warpcheck/errors.hpp"

namespace warpcheck {

// A real number or +infinity. Distortion coefficients blow up past the
// conjugate radius and callers branch on that explicitly.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;
  constexpr explicit ExtendedReal(double v) : v_(v) {}
  static constexpr ExtendedReal infinity() {
    ExtendedReal e;
    e.inf_ = true;
    return e;
  }

  constexpr bool is_infinite() const { return inf_; }
  constexpr bool is_finite() const { return !inf_; }
  double value() const {
    if (inf_) fail(ErrorCode::OutOfRange, "value() on +inf");
    return v_;
  }
  constexpr double as_double() const {
    return inf_ ? std::numeric_limits<double>::infinity() : v_;
  }

  friend constexpr bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return a.inf_ == b.inf_ && (a.inf_ || a.v_ == b.v_);
  }
  friend constexpr bool operator<(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.inf_) return false;
    if (b.inf_) return true;
    return a.v_ < b.v_;
  }
  friend constexpr bool operator<=(const ExtendedReal& a, const ExtendedReal& b) {
    return a < b || a == b;
  }
  friend std::ostream& operator<<(std::ostream& os, const ExtendedReal& e) {
    if (e.inf_) return os << "+inf";
    return os << e.v_;
  }

 private:
  double v_ = 0.0;
  bool inf_ = false;
};

/// Solution of u'' + kappa u = 0 with u(0) = 0, u'(0) = 1.
inline double sin_kappa(double kappa, double s) {
  const double x = kappa * s * s;
  if (std::abs(x) < 1e-8) return s * (1.0 - x / 6.0 + x * x / 120.0);
  if (kappa > 0) {
    const double rk = std::sqrt(kappa);
    return std::sin(rk * s) / rk;
  }
  const double rk = std::sqrt(-kappa);
  return std::sinh(rk * s) / rk;
}

/// Solution of u'' + kappa u = 0 with u(0) = 1, u'(0) = 0.
inline double cos_kappa(double kappa, double s) {
  if (kappa == 0) return 1.0;
  if (kappa > 0) return std::cos(std::sqrt(kappa) * s);
  return std::cosh(std::sqrt(-kappa) * s);
}

/// sigma_kappa^(t)(theta) = sin_kappa(t theta) / sin_kappa(theta).
inline ExtendedReal sigma_kappa(double kappa, double t, double theta) {
  if (theta == 0) return ExtendedReal(t);
  const double x = kappa * theta * theta;
  if (x >= std::numbers::pi * std::numbers::pi) return ExtendedReal::infinity();
  if (x == 0) return ExtendedReal(t);
  if (std::abs(x) < 1e-8) return ExtendedReal(t * (1.0 + x * (1.0 - t * t) / 6.0));
  return ExtendedReal(sin_kappa(kappa, t * theta) / sin_kappa(kappa, theta));
}

struct DistortionParams {
  double K = 0;
  double N = 1;
  double t = 0;
  double theta = 0;

  void validate() const {
    if (!std::isfinite(K)) fail(ErrorCode::PreconditionFailed, "K must be finite");
    if (!(N >= 1)) fail(ErrorCode::PreconditionFailed, "N must be >= 1");
    if (!(t >= 0 && t <= 1)) fail(ErrorCode::PreconditionFailed, "t must lie in [0,1]");
    if (!(theta >= 0)) fail(ErrorCode::PreconditionFailed, "theta must be >= 0");
  }
};

/// sigma_{K,N}^(t)(theta) = sigma_{K/N}^(t)(theta).
inline ExtendedReal sigma(const DistortionParams& p) {
  p.validate();
  return sigma_kappa(p.K / p.N, p.t, p.theta);
}

/// tau_{K,N}^(t)(theta) = (t sigma_{K,N-1}^(t)(theta)^(N-1))^(1/N).
inline ExtendedReal tau(const DistortionParams& p) {
  p.validate();
  if (p.N == 1) return p.K <= 0 ? ExtendedReal(p.t) : ExtendedReal::infinity();
  if (p.t == 0) return ExtendedReal(0.0);
  if (p.K == 0 || p.theta == 0) return ExtendedReal(p.t);
  const ExtendedReal s = sigma_kappa(p.K / (p.N - 1), p.t, p.theta);
  if (s.is_infinite()) return s;
  return ExtendedReal(std::pow(p.t * std::pow(s.value(), p.N - 1), 1.0 / p.N));
}

}  // namespace warpcheck
