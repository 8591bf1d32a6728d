#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "warpcheck/base_space.hpp"
#include "warpcheck/comparison_kernel.hpp"
#include "warpcheck/errors.hpp"
#include "warpcheck/warp_function.hpp"

namespace warpcheck {

struct LatticeOptions {
  int n = 257;
  double R = 4.0;  // window radius on unbounded bases
  std::optional<double> tolerance;
};

struct AlexandrovDerivative {
  double f_plus = 0, f_minus = 0, Df = 0;
  bool has_plus = false, has_minus = false;
  // max{f+, -f-} without the zero; differs from Df at concave kinks.
  double Df_no_zero = 0;
};

namespace detail {

inline double room(const WarpFunction& f, const BaseSpace& B, double r, int side) {
  if (B.kind == BaseSpace::Kind::Circle) return std::numeric_limits<double>::infinity();
  const double lim = side > 0 ? std::min(B.upper(), f.hi()) : std::max(B.lower(), f.lo());
  return side > 0 ? lim - r : r - lim;
}

inline double one_sided(const WarpFunction& f, const BaseSpace& B, double r, int side) {
  double h = 1e-3;
  if (auto s = std::get_if<SampledSource>(&f.source())) {
    for (std::size_t i = 1; i < s->grid.size(); ++i) h = std::min(h, 0.5 * (s->grid[i] - s->grid[i - 1]));
  }
  h = std::min(h, 0.5 * room(f, B, r, side));
  const double f0 = f(B.canonical(r));
  constexpr int levels = 11;
  double q[levels];
  for (int k = 0; k < levels; ++k) {
    const double hk = std::ldexp(h, -k);
    q[k] = side * (f(B.canonical(r + side * hk)) - f0) / hk;
  }
  const double slack = 1e-6 * (1.0 + std::abs(q[levels - 1]));
  bool up = true, down = true;
  for (int k = 0; k + 1 < levels; ++k) {
    if (q[k + 1] < q[k] - slack) up = false;
    if (q[k + 1] > q[k] + slack) down = false;
  }
  const double r1 = 2 * q[levels - 1] - q[levels - 2];
  const double r0 = 2 * q[levels - 2] - q[levels - 3];
  if (!(up || down) || std::abs(r1 - r0) > slack)
    fail(ErrorCode::NotSemiConcave,
         "one-sided difference quotients do not settle at r=" + std::to_string(r));
  return r1;
}

inline bool is_zero(double v) { return std::abs(v) <= 1e-12; }

}  // namespace detail

/// One-sided derivatives and Df = max{f+, -f-, 0}. Sides that leave B are
/// excluded from the maximum.
inline AlexandrovDerivative alexandrov_derivative(const WarpFunction& f, const BaseSpace& B, double r) {
  if (!B.contains(r) || (B.kind != BaseSpace::Kind::Circle && !f.covers(r, r)))
    fail(ErrorCode::DomainMismatch, "point outside base or warp domain");
  AlexandrovDerivative a;
  a.has_plus = detail::room(f, B, r, +1) > 1e-12;
  a.has_minus = detail::room(f, B, r, -1) > 1e-12;
  if (f.has_d1()) {
    const double d = f.d1(B.canonical(r));
    a.f_plus = a.has_plus ? d : 0;
    a.f_minus = a.has_minus ? d : 0;
  } else {
    if (a.has_plus) a.f_plus = detail::one_sided(f, B, r, +1);
    if (a.has_minus) a.f_minus = detail::one_sided(f, B, r, -1);
  }
  double m = -std::numeric_limits<double>::infinity();
  if (a.has_plus) m = std::max(m, a.f_plus);
  if (a.has_minus) m = std::max(m, -a.f_minus);
  a.Df_no_zero = m;
  a.Df = std::max(m, 0.0);
  return a;
}

struct ConcavityReport {
  bool is_fK_concave = false;
  double worst_violation = 0;  // max of (sigma-combination - f(mid)); <= tolerance iff concave
  bool boundary_ok = true;
  double boundary_margin = std::numeric_limits<double>::infinity();  // min outward derivative
  double K_F = 0;
  bool zero_set_nonempty = false;
  double tolerance = 0;
  double K = 0;
  int df_convention_mismatches = 0;
  long pairs_checked = 0;
  double worst_t0 = 0, worst_t1 = 0, worst_s = 0;
  double inf_f_sq = 0;
};

namespace detail {

struct Lattice {
  std::vector<double> x;     // coarse points
  std::vector<double> fine;  // f on the 4x refined grid
  double h = 0;              // coarse spacing
  bool periodic = false;
};

inline Lattice make_lattice(const WarpFunction& f, const BaseSpace& B, const LatticeOptions& o) {
  if (o.n < 16) fail(ErrorCode::GridTooCoarse, "lattice needs at least 16 points");
  Lattice L;
  const auto [lo, hi] = B.window(o.R);
  if (B.kind != BaseSpace::Kind::Circle && !f.covers(lo, hi))
    fail(ErrorCode::DomainMismatch, "warp domain does not cover the base window");
  L.periodic = B.kind == BaseSpace::Kind::Circle;
  const int n = o.n;
  if (L.periodic) {
    L.h = B.period / n;
    for (int i = 0; i < n; ++i) L.x.push_back(i * L.h);
    for (int k = 0; k < 4 * n; ++k) L.fine.push_back(f(k * L.h / 4));
  } else {
    L.h = (hi - lo) / (n - 1);
    for (int i = 0; i < n; ++i) L.x.push_back(i + 1 == n ? hi : lo + i * L.h);
    const int m = 4 * (n - 1) + 1;
    for (int k = 0; k < m; ++k) L.fine.push_back(f(k + 1 == m ? hi : lo + k * L.h / 4));
  }
  return L;
}

}  // namespace detail

/// Tests f((1-s)t0 + s t1) >= sigma_K^(1-s)(theta) f(t0) + sigma_K^(s)(theta) f(t1)
/// over all lattice pairs, the outward-derivative boundary condition and K_F.
inline ConcavityReport check_fK_concavity(const WarpFunction& f, const BaseSpace& B,
                                          const LatticeOptions& o = {}) {
  const detail::Lattice L = detail::make_lattice(f, B, o);
  ConcavityReport rep;
  rep.K = f.K;
  rep.tolerance = o.tolerance.value_or(f.tolerance_hint());
  const int n = static_cast<int>(L.x.size());
  const double K = f.K;
  const double theta_max = K > 0 ? std::numbers::pi / std::sqrt(K) : std::numeric_limits<double>::infinity();
  const int m = static_cast<int>(L.fine.size());
  auto fine_at = [&](long k) { return L.fine[static_cast<std::size_t>(((k % m) + m) % m)]; };
  rep.worst_violation = -std::numeric_limits<double>::infinity();
  const double svals[3] = {0.25, 0.5, 0.75};
  for (int i = 0; i < n; ++i) {
    const int jmax = L.periodic ? i + (n - 1) / 2 : n - 1;
    for (int j = i + 1; j <= jmax; ++j) {
      const double theta = (j - i) * L.h;
      if (L.periodic && !(theta < B.period / 2)) break;
      if (!(theta < theta_max * (1 - 1e-12))) break;
      const double f0 = fine_at(4L * i), f1 = fine_at(4L * j);
      for (int q = 0; q < 3; ++q) {
        const double s = svals[q];
        const double a = sigma_kappa(K, 1 - s, theta).value();
        const double b = sigma_kappa(K, s, theta).value();
        const long k = 4L * i + (q + 1) * (j - i);
        const double v = a * f0 + b * f1 - fine_at(k);
        if (v > rep.worst_violation) {
          rep.worst_violation = v;
          rep.worst_t0 = L.x[static_cast<std::size_t>(i)];
          rep.worst_t1 = L.periodic ? L.x[static_cast<std::size_t>(i)] + theta : L.x[static_cast<std::size_t>(j)];
          rep.worst_s = s;
        }
      }
      ++rep.pairs_checked;
    }
  }
  if (rep.pairs_checked == 0) rep.worst_violation = 0;
  rep.is_fK_concave = rep.worst_violation <= rep.tolerance;

  rep.K_F = -std::numeric_limits<double>::infinity();
  rep.inf_f_sq = std::numeric_limits<double>::infinity();
  for (double x : L.x) {
    const double fx = f(x);
    const auto a = alexandrov_derivative(f, B, x);
    rep.K_F = std::max(rep.K_F, a.Df * a.Df + K * fx * fx);
    rep.inf_f_sq = std::min(rep.inf_f_sq, fx * fx);
    if (detail::is_zero(fx)) rep.zero_set_nonempty = true;
    if (a.Df_no_zero != a.Df) ++rep.df_convention_mismatches;
  }
  for (double p : B.boundary()) {
    if (detail::is_zero(f(p))) continue;
    const auto a = alexandrov_derivative(f, B, p);
    const double outward = (p == B.lower()) ? -a.f_plus : a.f_minus;
    rep.boundary_margin = std::min(rep.boundary_margin, outward);
  }
  rep.boundary_ok = rep.boundary_margin >= -rep.tolerance;
  return rep;
}

/// sup over a 2049-point window grid of |(f')^2 + K f^2 - K_F|.
inline double pythagorean_residual(const WarpFunction& f, const BaseSpace& B,
                                   std::optional<double> K_F = std::nullopt, double R = 4.0,
                                   int n = 2049) {
  const auto kf = K_F ? K_F : f.catalog_KF();
  if (!kf) fail(ErrorCode::PreconditionFailed, "no K_F given and warp is not a catalog entry");
  const auto [lo, hi] = B.window(R);
  const double h = (hi - lo) / (n - 1);
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    const double r = lo + i * h;
    double d;
    if (f.has_d1()) {
      d = f.d1(r);
    } else {
      const double a = std::max(lo, r - h), b = std::min(hi, r + h);
      d = (f(b) - f(a)) / (b - a);
    }
    const double v = f(r);
    worst = std::max(worst, std::abs(d * d + f.K * v * v - *kf));
  }
  return worst;
}

/// Both sides of the K_F equivalence: (K_F >= Df^2 + K f^2 on B) and the
/// reformulation through the zero set X = f^{-1}(0) on the boundary.
inline std::pair<bool, bool> kf_equivalence(const WarpFunction& f, const BaseSpace& B, double K_F_candidate,
                                            const LatticeOptions& o = {}) {
  const auto rep = check_fK_concavity(f, B, o);
  if (!rep.is_fK_concave) fail(ErrorCode::PreconditionFailed, "warp is not fK-concave");
  if (!rep.boundary_ok) fail(ErrorCode::PreconditionFailed, "gluing condition fails at the boundary");
  const double tol = 1e-8 * std::max(1.0, std::abs(K_F_candidate));
  const auto L = detail::make_lattice(f, B, o);
  bool lhs = true;
  for (double x : L.x) {
    const double fx = f(x);
    const double Df = alexandrov_derivative(f, B, x).Df;
    if (K_F_candidate < Df * Df + f.K * fx * fx - tol) lhs = false;
  }
  bool X_empty = true;
  for (double p : B.boundary())
    if (detail::is_zero(f(p))) X_empty = false;
  bool rhs = true;
  if (X_empty) {
    rhs = K_F_candidate >= f.K * rep.inf_f_sq - tol;
  } else {
    for (double x : L.x) {
      if (!detail::is_zero(f(x))) continue;
      const double Df = alexandrov_derivative(f, B, x).Df;
      if (K_F_candidate < Df * Df - tol) rhs = false;
    }
  }
  return {lhs, rhs};
}

struct GluedBase {
  BaseSpace base;
  WarpFunction warp;
  bool changed = false;
};

/// Doubles B along the boundary points where f does not vanish and extends f
/// by reflection.
inline GluedBase dagger_glue(const WarpFunction& f, const BaseSpace& B) {
  const auto bd = B.boundary();
  if (bd.empty()) fail(ErrorCode::NothingToGlue, "base has empty boundary");
  std::vector<double> glue;
  for (double p : bd)
    if (!detail::is_zero(f(p))) glue.push_back(p);
  if (glue.empty()) return {B, f, false};

  const std::string desc = "dagger(" + f.describe() + ")";
  if (B.kind == BaseSpace::Kind::HalfLine) {
    const double o = B.origin;
    auto g = [f, o](double r) { return f(o + std::abs(r - o)); };
    WarpFunction::Fn d2;
    if (f.has_d2()) d2 = [f, o](double r) { return f.d2(o + std::abs(r - o)); };
    return {BaseSpace::line(), WarpFunction::derived(desc, f.K, g, {}, d2), true};
  }
  const double a = B.a, b = B.b, len = b - a;
  if (glue.size() == 2) {
    auto tri = [a, b, len](double r) {
      double x = std::fmod(r, 2 * len);
      if (x < 0) x += 2 * len;
      return x <= len ? a + x : a + 2 * len - x;
    };
    auto g = [f, tri](double r) { return f(tri(r)); };
    WarpFunction::Fn d2;
    if (f.has_d2()) d2 = [f, tri](double r) { return f.d2(tri(r)); };
    return {BaseSpace::circle(2 * len), WarpFunction::derived(desc, f.K, g, {}, d2, 0, 2 * len), true};
  }
  if (glue.front() == a) {
    auto g = [f, a](double r) { return f(a + std::abs(r - a)); };
    WarpFunction::Fn d2;
    if (f.has_d2()) d2 = [f, a](double r) { return f.d2(a + std::abs(r - a)); };
    return {BaseSpace::interval(a - len, b), WarpFunction::derived(desc, f.K, g, {}, d2, a - len, b), true};
  }
  auto g = [f, b](double r) { return f(b - std::abs(r - b)); };
  WarpFunction::Fn d2;
  if (f.has_d2()) d2 = [f, b](double r) { return f.d2(b - std::abs(r - b)); };
  return {BaseSpace::interval(a, b + len), WarpFunction::derived(desc, f.K, g, {}, d2, a, b + len), true};
}

/// Even C^infinity bump c exp(-1/(1-x^2)) on (-1,1), discretized on M
/// midpoint nodes and normalized so the discrete mass is exactly one.
class Mollifier {
 public:
  explicit Mollifier(int M = 4096) {
    nodes_.resize(static_cast<std::size_t>(M));
    w0_.resize(nodes_.size());
    w1_.resize(nodes_.size());
    w2_.resize(nodes_.size());
    const double dx = 2.0 / M;
    double mass = 0;
    for (int j = 0; j < M; ++j) {
      const double x = -1 + (j + 0.5) * dx;
      const double q = 1 - x * x;
      const double phi = std::exp(-1 / q);
      const double g1 = -2 * x / (q * q);
      const double g2 = -(2 + 6 * x * x) / (q * q * q);
      nodes_[static_cast<std::size_t>(j)] = x;
      w0_[static_cast<std::size_t>(j)] = phi * dx;
      w1_[static_cast<std::size_t>(j)] = phi * g1 * dx;
      w2_[static_cast<std::size_t>(j)] = phi * (g1 * g1 + g2) * dx;
      mass += phi * dx;
    }
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      w0_[j] /= mass;
      w1_[j] /= mass;
      w2_[j] /= mass;
    }
  }
  int size() const { return static_cast<int>(nodes_.size()); }

  // derivative order 0, 1 or 2 of f_eps at s
  template <class F>
  double apply(const F& f, double s, double eps, int order) const {
    const auto& w = order == 0 ? w0_ : order == 1 ? w1_ : w2_;
    // symmetric pairing keeps affine functions exact up to rounding
    double acc = 0;
    const std::size_t M = nodes_.size();
    for (std::size_t j = 0; j < M / 2; ++j) {
      const std::size_t k = M - 1 - j;
      acc += w[j] * f(s + eps * nodes_[j]) + w[k] * f(s + eps * nodes_[k]);
    }
    if (order == 1) return -acc / eps;
    if (order == 2) return acc / (eps * eps);
    return acc;
  }

 private:
  std::vector<double> nodes_, w0_, w1_, w2_;
};

inline const Mollifier& default_mollifier() {
  static const Mollifier m(4096);
  return m;
}

/// f_eps(s) = int phi_eps(tau) f(s + tau) dtau with first and second
/// derivatives moved onto the kernel.
inline WarpFunction mollify_warp(const WarpFunction& f, const BaseSpace& B, double epsilon) {
  if (!(epsilon > 0)) fail(ErrorCode::PreconditionFailed, "epsilon must be > 0");
  const Mollifier& M = default_mollifier();
  double lo = B.lower(), hi = B.upper();
  const bool periodic = B.kind == BaseSpace::Kind::Circle;
  if (!periodic) {
    lo = std::max(lo, f.lo()) + epsilon;
    hi = std::min(hi, f.hi()) - epsilon;
    if (!(hi >= lo)) fail(ErrorCode::TooCloseToBoundary, "no point at distance >= epsilon from the boundary");
  } else {
    lo = 0;
    hi = B.period;
  }
  auto eval = [f, B, periodic](double r) { return f(periodic ? B.canonical(r) : r); };
  auto check = [lo, hi, periodic](double s) {
    if (!periodic && (s < lo - 1e-12 || s > hi + 1e-12))
      fail(ErrorCode::TooCloseToBoundary, "mollified warp needs distance >= epsilon to the boundary");
  };
  auto g0 = [&M, eval, epsilon, check](double s) { check(s); return M.apply(eval, s, epsilon, 0); };
  auto g1 = [&M, eval, epsilon, check](double s) { check(s); return M.apply(eval, s, epsilon, 1); };
  auto g2 = [&M, eval, epsilon, check](double s) { check(s); return M.apply(eval, s, epsilon, 2); };

  // Trapezoid error across a kink of f is about J eps / M^2.
  const auto [wlo, whi] = periodic ? std::pair<double, double>{0.0, B.period} : std::pair<double, double>{lo - epsilon, hi + epsilon};
  double lip = 0;
  if (std::isfinite(wlo) && std::isfinite(whi)) {
    const int n = 512;
    double prev = eval(wlo);
    for (int i = 1; i <= n; ++i) {
      const double r = wlo + (whi - wlo) * i / n;
      const double v = eval(r);
      lip = std::max(lip, std::abs(v - prev) * n / (whi - wlo));
      prev = v;
    }
  }
  const double quad = 8.0 * lip * epsilon / (static_cast<double>(M.size()) * M.size());
  WarpFunction out = WarpFunction::derived("mollified(" + f.describe() + ")", f.K, g0, g1, g2, lo, hi,
                                           std::max(1e-8, quad));
  out.set_out_of_domain_error(ErrorCode::TooCloseToBoundary);
  return out;
}

struct SurgeryResult {
  WarpFunction h;
  BaseSpace base;          // new base starting at the zero of h
  double splice = 0;       // a + eps
  double t0 = 0;           // first zero of gbar
  double K_eps = 0;        // -f_eps''/f_eps at the splice
  double comparison_bound = 0;
};

namespace detail {

// first positive zero of A cos_k(s) - B sin_k(s), +inf if none
inline double first_zero(double k, double A, double Bc) {
  const double inf = std::numeric_limits<double>::infinity();
  if (A <= 0) return 0;
  if (k > 0) {
    const double rk = std::sqrt(k);
    return std::atan2(rk * A, Bc) / rk;
  }
  if (Bc <= 0) return inf;
  if (k == 0) return A / Bc;
  const double rk = std::sqrt(-k);
  const double z = rk * A / Bc;
  if (z >= 1) return inf;
  return std::atanh(z) / rk;
}

}  // namespace detail

/// Replaces f near the left endpoint a (where f vanishes) by the mollified f on
/// (a+eps, ...) spliced C^2 to the comparison arc gbar(a+eps-r) that hits zero
/// at a+eps-t0.
inline SurgeryResult boundary_surgery(const WarpFunction& f, const BaseSpace& B, double epsilon, double eta) {
  if (B.kind != BaseSpace::Kind::HalfLine && B.kind != BaseSpace::Kind::Interval)
    fail(ErrorCode::PreconditionFailed, "surgery needs a half-line or interval base");
  for (double p : B.boundary())
    if (!detail::is_zero(f(p))) fail(ErrorCode::PreconditionFailed, "boundary not contained in zero set");
  const double a = B.lower();
  const auto ad = alexandrov_derivative(f, B, a);
  if (!(ad.f_plus > 0)) fail(ErrorCode::PreconditionFailed, "need f+ > 0 at the boundary");
  if (!(eta > 0 && eta < ad.f_plus / 4)) fail(ErrorCode::PreconditionFailed, "eta must lie in (0, f+/4)");

  // f extended by zero to the left so the kernel may straddle the boundary
  const double fhi = std::min(B.upper(), f.hi());
  auto ext = [f, a, fhi](double r) { return r <= a ? 0.0 : f(std::min(r, fhi)); };
  const Mollifier& M = default_mollifier();
  const double s = a + epsilon;
  const double A = M.apply(ext, s, epsilon, 0);
  const double A1 = M.apply(ext, s, epsilon, 1);
  const double A2 = M.apply(ext, s, epsilon, 2);
  if (!(A > 0)) fail(ErrorCode::PreconditionFailed, "mollified warp vanishes at the splice point");
  const double xi = ad.f_plus / 2;
  if (!(A < eta && A1 > xi))
    fail(ErrorCode::PreconditionFailed, "epsilon outside the eta-window: f_eps(eps) < eta and f_eps'(eps) > f+/2 required");
  const double Keps = -A2 / A;
  const double t0 = detail::first_zero(Keps, A, A1);
  const double C = detail::first_zero(f.K, eta, xi);
  if (!std::isfinite(t0) || t0 > C)
    fail(ErrorCode::NoZeroCrossing, "comparison arc has no zero within the comparison bound");

  const double left = s - t0;
  const double hi = (B.kind == BaseSpace::Kind::Interval) ? std::min(B.b, f.hi()) - epsilon : f.hi() - epsilon;
  auto mol = [ext, &M, epsilon](double r, int order) { return M.apply(ext, r, epsilon, order); };
  auto gbar = [A, A1, Keps](double u) { return A * cos_kappa(Keps, u) - A1 * sin_kappa(Keps, u); };
  auto h0 = [=](double r) { return r >= s ? mol(r, 0) : gbar(s - r); };
  auto h1 = [=](double r) {
    if (r >= s) return mol(r, 1);
    const double u = s - r;
    // d/dr gbar(s - r) = -gbar'(u)
    return A * Keps * sin_kappa(Keps, u) + A1 * cos_kappa(Keps, u);
  };
  auto h2 = [=](double r) { return r >= s ? mol(r, 2) : -Keps * gbar(s - r); };

  SurgeryResult out{WarpFunction::derived("surgery(" + f.describe() + ")", f.K, h0, h1, h2, left, hi),
                    B.kind == BaseSpace::Kind::Interval ? BaseSpace::interval(left, hi) : BaseSpace::half_line(left),
                    s, t0, Keps, C};
  return out;
}

}  // namespace warpcheck
