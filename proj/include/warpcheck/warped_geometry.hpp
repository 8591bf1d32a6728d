#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <tuple>
#include <vector>

#include "warpcheck/base_space.hpp"
#include "warpcheck/comparison_kernel.hpp"
#include "warpcheck/errors.hpp"
#include "warpcheck/fiber_space.hpp"
#include "warpcheck/grid_geodesic.hpp"
#include "warpcheck/parallel.hpp"
#include "warpcheck/warp_function.hpp"

namespace warpcheck {

struct WarpedPoint {
  double r = 0;
  double x = 0;
};

/// B x_f^N F with distance from the strip reduction B x_f [0, d_F(x, y)].
struct WarpedProduct {
  BaseSpace B;
  WarpFunction f;
  double N = 1;
  FiberSpace F;
  double window_R = 8;  // sampling window for unbounded bases

  double fval(double r) const { return f(B.canonical(r)); }
  bool degenerate(double r) const { return !(fval(r) > 1e-12); }  // sin(pi) is not exactly 0

  /// Representative of the ~ class: fiber coordinate 0 over zeros of f.
  WarpedPoint canonical(WarpedPoint p) const {
    if (!B.contains(p.r)) fail(ErrorCode::OutOfRange, "base coordinate outside B");
    p.r = B.canonical(p.r);
    if (degenerate(p.r)) p.x = 0;
    return p;
  }

  std::pair<double, double> window() const { return B.window(window_R); }

  /// Zeros of f on the boundary of B (the points a broken path may pass through).
  std::vector<double> boundary_zeros() const {
    std::vector<double> z;
    for (double b : B.boundary())
      if (degenerate(b)) z.push_back(b);
    return z;
  }
};

struct GeodesicOptions {
  int samples = 257;
  double tolerance = 1e-12;  // ODE absolute and relative tolerance
  int grid_n = 513;          // Dijkstra grid for the fallback
  int relax_n = 2049;
  bool grid_fallback = true;
};

/// Base component alpha(t), fiber arclength y(t), t in [0, 1].
struct GeodesicPath {
  std::vector<double> t, r, y;
  double length = 0;
  double energy = 0;  // E = length^2 / 2 for the [0, 1] parametrization
  double clairaut = 0;  // c = f^2 * fiber speed (unit-speed parametrization)
  double clairaut_drift = 0;  // stdev / mean of f^2 * fiber speed along the samples
  double speed_drift = 0;  // relative variation of |alpha'|^2 + f^2 |beta'|^2
  double energy_residual = 0;  // max |1/2 |alpha'|^2 + c^2 / (2 f^2) - E| / E
  bool smooth = true;  // false when produced by the grid fallback
};

inline double path_length(const WarpedProduct& W, const std::vector<double>& t, const std::vector<double>& alpha,
                          const std::vector<double>& beta) {
  if (alpha.size() != t.size() || beta.size() != t.size() || t.size() < 2)
    fail(ErrorCode::PartitionMismatch, "alpha and beta must be sampled on the same partition");
  for (std::size_t k = 0; k + 1 < t.size(); ++k)
    if (!(t[k + 1] > t[k])) fail(ErrorCode::PartitionMismatch, "partition must be increasing");
  double len = 0;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double dt = t[k + 1] - t[k];
    const double da = W.B.distance(alpha[k], alpha[k + 1]) / dt;
    const double db = W.F.distance(beta[k], beta[k + 1]) / dt;
    const double f0 = W.fval(alpha[k]), f1 = W.fval(alpha[k + 1]);
    const double s0 = std::sqrt(da * da + f0 * f0 * db * db), s1 = std::sqrt(da * da + f1 * f1 * db * db);
    len += 0.5 * (s0 + s1) * dt;
  }
  return len;
}

namespace detail {

using GeoState = std::array<double, 4>;  // r, r', y, y' in arclength

struct GeodesicOde {
  WarpEval F;
  void operator()(const GeoState& x, GeoState& dx, double) const {
    const double f = F(x[0]), fp = F.d1(x[0]);
    dx[0] = x[1];
    dx[1] = f * fp * x[3] * x[3];
    dx[2] = x[3];
    dx[3] = -2 * fp / f * x[1] * x[3];
  }
};

enum class ShotEnd { Reached, Low, High };

struct Shot {
  ShotEnd end = ShotEnd::Low;
  double r_end = 0;
  double s_end = 0;
};

/// Integrates the unit-speed geodesic leaving (r0, 0) at angle phi from the +r axis
/// until the fiber height reaches L. Samples at the requested arclengths if given.
inline Shot shoot(const WarpedProduct& W, double r0, double phi, double L, double r1, double s_max, double tol,
                  const std::vector<double>* sample_s = nullptr, std::vector<GeoState>* samples = nullptr) {
  namespace odeint = boost::numeric::odeint;
  const WarpEval F{&W.f, &W.B};
  const GeodesicOde ode{F};
  const bool periodic = W.B.kind == BaseSpace::Kind::Circle;
  const double lo = periodic ? -std::numeric_limits<double>::infinity() : W.B.lower();
  const double hi = periodic ? std::numeric_limits<double>::infinity() : W.B.upper();
  const double f0 = F(r0);
  GeoState x{r0, std::cos(phi), 0, std::sin(phi) / f0};
  auto stepper = odeint::make_dense_output(tol, tol, odeint::runge_kutta_dopri5<GeoState>());
  stepper.initialize(x, 0.0, 1e-3 * std::max(1e-3, std::min(1.0, s_max)));
  std::size_t next = 0;
  auto emit_until = [&](double s_hi) {
    if (!sample_s) return;
    while (next < sample_s->size() && (*sample_s)[next] <= s_hi) {
      GeoState y;
      stepper.calc_state((*sample_s)[next], y);
      samples->push_back(y);
      ++next;
    }
  };
  // passing this close to a zero of f is treated as reaching it; the broken
  // path through the zero is then within O(floor^2) of the true length
  const double f_floor = 1e-7 * f0;
  for (int steps = 0; steps < 200000; ++steps) {
    const auto [s0, s1] = stepper.do_step(ode);
    const GeoState& c = stepper.current_state();
    if (c[2] >= L) {
      GeoState y;
      auto h = [&](double s) {
        stepper.calc_state(s, y);
        return y[2] - L;
      };
      const double h0 = h(s0), h1 = h(s1);
      double s_end = s1;  // interpolant and step can disagree in the last bit
      if (h0 >= 0) {
        s_end = s0;
      } else if (h1 > 0) {
        std::uintmax_t iters = 100;
        const auto rel = boost::math::tools::toms748_solve(h, s0, s1, h0, h1, boost::math::tools::eps_tolerance<double>(52), iters);
        s_end = 0.5 * (rel.first + rel.second);
      }
      stepper.calc_state(s_end, y);
      emit_until(s_end);
      if (samples && samples->size() < sample_s->size()) samples->push_back(y);
      return {ShotEnd::Reached, y[0], s_end};
    }
    emit_until(s1);
    if (c[0] < lo) return {ShotEnd::Low, lo, s1};
    if (c[0] > hi) return {ShotEnd::High, hi, s1};
    if (F(c[0]) <= f_floor || !std::isfinite(c[0]))
      return {c[1] < 0 ? ShotEnd::Low : ShotEnd::High, c[0], s1};
    if (s1 > s_max) return {c[0] > r1 ? ShotEnd::High : ShotEnd::Low, c[0], s1};
  }
  fail(ErrorCode::ShootingDiverged, "geodesic integration did not terminate");
}

struct ShotSolution {
  double phi = 0;
  double length = 0;
  double r1 = 0;  // target in the universal cover (circle bases)
};

inline std::optional<ShotSolution> solve_shot(const WarpedProduct& W, double r0, double r1, double L, double tol) {
  const WarpEval F{&W.f, &W.B};
  const double upper_bound = std::min(F(r0), F(r1)) * L + std::abs(r1 - r0);
  const double s_max = 3 * upper_bound + 1e-9;
  auto g = [&](double phi) {
    const Shot s = shoot(W, r0, phi, L, r1, s_max, tol);
    if (s.end == ShotEnd::Reached) return s.r_end - r1;
    return s.end == ShotEnd::High ? 1e6 : -1e6;
  };
  double a = 1e-9, b = std::numbers::pi - 1e-9;
  double ga = g(a), gb = g(b);
  if (!(ga > 0 && gb < 0)) return std::nullopt;
  // bisect until both ends reach the target height, then polish
  for (int it = 0; it < 200 && (std::abs(ga) >= 1e6 || std::abs(gb) >= 1e6) && b - a > 1e-15; ++it) {
    const double m = 0.5 * (a + b), gm = g(m);
    if (gm == 0) {
      a = b = m;
      ga = gb = 0;
      break;
    }
    (gm > 0 ? a : b) = m;
    (gm > 0 ? ga : gb) = gm;
  }
  double phi = a;
  if (a != b) {
    std::uintmax_t iters = 200;
    const auto br = boost::math::tools::toms748_solve(g, a, b, ga, gb, boost::math::tools::eps_tolerance<double>(52), iters);
    phi = 0.5 * (br.first + br.second);
  }
  const Shot s = shoot(W, r0, phi, L, r1, s_max, tol);
  if (s.end != ShotEnd::Reached || std::abs(s.r_end - r1) > 1e-8 * (1 + std::abs(r1))) return std::nullopt;
  if (s.s_end > upper_bound * (1 + 1e-9) + 1e-12) return std::nullopt;  // longer than a competitor path
  return ShotSolution{phi, s.s_end, r1};
}

inline std::optional<ShotSolution> best_shot(const WarpedProduct& W, double r0, double r1, double L, double tol) {
  if (W.B.kind != BaseSpace::Kind::Circle) return solve_shot(W, r0, r1, L, tol);
  std::optional<ShotSolution> best;
  const double P = W.B.period;
  double t = W.B.canonical(r1 - r0);
  for (double target : {r0 + t, r0 + t - P}) {
    const auto s = solve_shot(W, r0, target, L, tol);
    if (s && (!best || s->length < best->length)) best = s;
  }
  return best;
}

inline GeodesicPath straight_path(const WarpedProduct& W, double r0, double r1, int samples) {
  GeodesicPath p;
  double d = r1 - r0;
  if (W.B.kind == BaseSpace::Kind::Circle) {
    d = W.B.canonical(d);
    if (d > W.B.period / 2) d -= W.B.period;
  }
  for (int k = 0; k < samples; ++k) {
    const double t = samples > 1 ? static_cast<double>(k) / (samples - 1) : 0.0;
    p.t.push_back(t);
    p.r.push_back(W.B.canonical(r0 + t * d));
    p.y.push_back(0);
  }
  p.length = std::abs(d);
  p.energy = 0.5 * p.length * p.length;
  return p;
}

inline GeodesicPath trace_shot(const WarpedProduct& W, double r0, const ShotSolution& s, double L, const GeodesicOptions& o) {
  std::vector<double> ss;
  for (int k = 0; k < o.samples; ++k) ss.push_back(s.length * k / (o.samples - 1));
  ss.back() = s.length;
  std::vector<GeoState> st;
  const double s_max = 3 * s.length + 1e-9;
  shoot(W, r0, s.phi, L, s.r1, s_max, o.tolerance, &ss, &st);
  while (st.size() < ss.size()) st.push_back(st.back());
  const WarpEval F{&W.f, &W.B};
  GeodesicPath p;
  std::vector<double> c, speed;
  for (std::size_t k = 0; k < st.size(); ++k) {
    p.t.push_back(ss[k] / s.length);
    p.r.push_back(W.B.canonical(st[k][0]));
    p.y.push_back(st[k][2]);
    const double f = F(st[k][0]);
    c.push_back(f * f * st[k][3]);
    speed.push_back(st[k][1] * st[k][1] + f * f * st[k][3] * st[k][3]);
  }
  p.y.back() = L;
  p.length = s.length;
  p.energy = 0.5 * s.length * s.length;
  double mean = 0, var = 0, smin = speed[0], smax = speed[0];
  for (double v : c) mean += v;
  mean /= static_cast<double>(c.size());
  for (double v : c) var += (v - mean) * (v - mean);
  p.clairaut = mean;
  p.clairaut_drift = mean != 0 ? std::sqrt(var / static_cast<double>(c.size())) / std::abs(mean) : 0.0;
  double smean = 0;
  for (double v : speed) {
    smin = std::min(smin, v);
    smax = std::max(smax, v);
    smean += v;
  }
  smean /= static_cast<double>(speed.size());
  p.speed_drift = (smax - smin) / smean;
  // energy equation in the [0, 1] parametrization: alpha' = length * r_s, c_t = length * c
  for (std::size_t k = 0; k < st.size(); ++k) {
    const double f = F(st[k][0]);
    const double lhs = 0.5 * s.length * s.length * st[k][1] * st[k][1] + 0.5 * s.length * s.length * mean * mean / (f * f);
    p.energy_residual = std::max(p.energy_residual, std::abs(lhs - p.energy) / p.energy);
  }
  return p;
}

inline std::pair<double, double> strip_window(const WarpedProduct& W, double r0, double r1) {
  if (W.B.kind == BaseSpace::Kind::Circle) {
    const double P = W.B.period;
    return {std::min(r0, r1) - P / 2, std::max(r0, r1) + P / 2};
  }
  auto [lo, hi] = W.window();
  return {std::min(lo, std::min(r0, r1)), std::max(hi, std::max(r0, r1))};
}

}  // namespace detail

/// Geodesic of B x_f [0, L] from (r0, 0) to (r1, L) by shooting on the geodesic
/// equations; falls back to the grid solver (flagged non-smooth) if shooting fails.
inline GeodesicPath geodesic_2d(const WarpedProduct& W, double r0, double r1, double L, const GeodesicOptions& o = {}) {
  if (!(L >= 0)) fail(ErrorCode::PreconditionFailed, "fiber height must be >= 0");
  if (!W.B.contains(r0) || !W.B.contains(r1)) fail(ErrorCode::OutOfRange, "endpoint outside B");
  if (L == 0) return detail::straight_path(W, r0, r1, o.samples);
  if (W.degenerate(r0) || W.degenerate(r1))
    fail(ErrorCode::PreconditionFailed, "endpoint on a zero of f; use distance/midpoint");
  const auto s = detail::best_shot(W, r0, r1, L, o.tolerance);
  if (s) return detail::trace_shot(W, r0, *s, L, o);
  if (!o.grid_fallback) fail(ErrorCode::ShootingDiverged, "no shooting angle reaches the target");
  const auto [lo, hi] = detail::strip_window(W, r0, r1);
  double t1 = r1;
  if (W.B.kind == BaseSpace::Kind::Circle) {
    t1 = r0 + W.B.canonical(r1 - r0);
    if (t1 - r0 > W.B.period / 2) t1 -= W.B.period;
  }
  const auto g = grid_geodesic(W.f, W.B, lo, hi, L, r0, t1, o.grid_n, o.relax_n);
  GeodesicPath p;
  const int n = static_cast<int>(g.r.size());
  for (int k = 0; k < n; ++k) {
    p.t.push_back(static_cast<double>(k) / (n - 1));
    p.r.push_back(W.B.canonical(g.r[static_cast<std::size_t>(k)]));
    p.y.push_back(g.y[static_cast<std::size_t>(k)]);
  }
  p.length = g.length;
  p.energy = 0.5 * g.length * g.length;
  p.smooth = false;
  return p;
}

namespace detail {

struct Route {
  enum Kind { Straight, Smooth, Broken } kind = Straight;
  double length = 0;
  double zero = 0;  // Broken: the zero of f passed through
  std::optional<ShotSolution> shot;
  std::optional<GeodesicPath> grid_path;
};

inline Route best_route(const WarpedProduct& W, WarpedPoint p0, WarpedPoint p1, const GeodesicOptions& o) {
  Route best;
  const double L = W.F.distance(p0.x, p1.x);
  const bool deg = W.degenerate(p0.r) || W.degenerate(p1.r);
  if (L == 0 || deg) {
    best.kind = Route::Straight;
    best.length = W.B.distance(p0.r, p1.r);
    return best;
  }
  best.length = std::numeric_limits<double>::infinity();
  for (double z : W.boundary_zeros()) {
    const double len = W.B.distance(p0.r, z) + W.B.distance(z, p1.r);
    if (len < best.length) {
      best.kind = Route::Broken;
      best.length = len;
      best.zero = z;
    }
  }
  const auto s = best_shot(W, p0.r, p1.r, L, o.tolerance);
  if (s && s->length <= best.length) {
    best.kind = Route::Smooth;
    best.length = s->length;
    best.shot = s;
  } else if (!s && best.kind != Route::Broken) {
    if (!o.grid_fallback) fail(ErrorCode::ShootingDiverged, "no shooting angle reaches the target");
    auto g = geodesic_2d(W, p0.r, p1.r, L, o);
    best.kind = Route::Smooth;
    best.length = g.length;
    best.grid_path = std::move(g);
  }
  return best;
}

}  // namespace detail

/// d((r, x), (s, y)) = length of the strip geodesic with height d_F(x, y), or of the
/// broken path through a zero of f, whichever is shorter.
inline double distance(const WarpedProduct& W, WarpedPoint p0, WarpedPoint p1, const GeodesicOptions& o = {}) {
  p0 = W.canonical(p0);
  p1 = W.canonical(p1);
  if (p0.r == p1.r && (p0.x == p1.x || W.degenerate(p0.r))) return 0;
  return detail::best_route(W, p0, p1, o).length;
}

struct GeodesicSample {
  double distance = 0;
  WarpedPoint point;
};

/// Distance and the point at parameter t from a single route computation.
inline GeodesicSample geodesic_sample(const WarpedProduct& W, WarpedPoint p0, WarpedPoint p1, double t,
                                      const GeodesicOptions& o = {}) {
  if (!(t >= 0 && t <= 1)) fail(ErrorCode::PreconditionFailed, "t must lie in [0, 1]");
  p0 = W.canonical(p0);
  p1 = W.canonical(p1);
  if (t == 0 || t == 1) return {distance(W, p0, p1, o), t == 0 ? p0 : p1};
  auto base_step = [&](double a, double b, double s) {
    double d = b - a;
    if (W.B.kind == BaseSpace::Kind::Circle) {
      d = W.B.canonical(d);
      if (d > W.B.period / 2) d -= W.B.period;
    }
    const double len = std::abs(d);
    return W.B.canonical(len > 0 ? a + d * (s / len) : a);
  };
  if (p0.r == p1.r && (p0.x == p1.x || W.degenerate(p0.r))) return {0, p0};
  const auto route = detail::best_route(W, p0, p1, o);
  WarpedPoint out;
  switch (route.kind) {
    case detail::Route::Straight: {
      out.r = base_step(p0.r, p1.r, t * route.length);
      // the fiber coordinate is carried by whichever endpoint is not a zero of f
      out.x = W.degenerate(p1.r) ? p0.x : p1.x;
      if (!W.degenerate(p0.r) && !W.degenerate(p1.r)) out.x = p0.x;
      break;
    }
    case detail::Route::Broken: {
      const double s = t * route.length, d0 = W.B.distance(p0.r, route.zero);
      if (s <= d0) {
        out = {base_step(p0.r, route.zero, s), p0.x};
      } else {
        out = {base_step(route.zero, p1.r, s - d0), p1.x};
      }
      break;
    }
    case detail::Route::Smooth: {
      const double L = W.F.distance(p0.x, p1.x);
      double r, y;
      if (route.shot) {
        std::vector<double> ss{t * route.length};
        std::vector<detail::GeoState> st;
        detail::shoot(W, p0.r, route.shot->phi, L, route.shot->r1, 3 * route.length + 1e-9, o.tolerance, &ss, &st);
        r = st.at(0)[0];
        y = st.at(0)[2];
      } else {
        const auto& g = *route.grid_path;
        const double pos = t * static_cast<double>(g.t.size() - 1);
        const auto k = std::min(static_cast<std::size_t>(pos), g.t.size() - 2);
        const double w = pos - static_cast<double>(k);
        r = g.r[k] + w * (g.r[k + 1] - g.r[k]);
        y = g.y[k] + w * (g.y[k + 1] - g.y[k]);
      }
      out.r = W.B.canonical(r);
      if (W.F.kind == FiberSpace::Kind::Finite)
        fail(ErrorCode::NotApplicable, "finite fibers have no interior geodesic points");
      out.x = W.F.geodesic_point(p0.x, p1.x, std::clamp(y, 0.0, L));
      break;
    }
  }
  return {route.length, W.canonical(out)};
}

/// Point at parameter t on a minimizing geodesic from p0 to p1.
inline WarpedPoint midpoint(const WarpedProduct& W, WarpedPoint p0, WarpedPoint p1, double t, const GeodesicOptions& o = {}) {
  return geodesic_sample(W, p0, p1, t, o).point;
}

inline void write_geodesic_csv(std::ostream& os, const GeodesicPath& p) {
  os << "t,r,fiber_arclength\n";
  os.precision(17);
  for (std::size_t k = 0; k < p.t.size(); ++k) os << p.t[k] << ',' << p.r[k] << ',' << p.y[k] << '\n';
}

// ---------------------------------------------------------------------------
// Brunn-Minkowski and measure contraction on product rectangles

/// Base interval times a fiber ball.
struct ProductRect {
  double r_lo = 0, r_hi = 0;
  double x_center = 0, x_radius = 0;

  bool contains(const WarpedProduct& W, WarpedPoint p) const {
    return p.r >= r_lo - 1e-14 && p.r <= r_hi + 1e-14 && W.F.distance(p.x, x_center) <= x_radius + 1e-14;
  }
};

/// Product cell grid on the base window times the whole 1D fiber.
struct ProductGrid {
  double r_lo = 0, r_hi = 0, x_len = 0;
  int nb = 64, nf = 64;
  std::vector<double> mass;  // nb * nf cell measures

  static ProductGrid make(const WarpedProduct& W, int nb, int nf) {
    if (W.F.kind == FiberSpace::Kind::Finite) fail(ErrorCode::NotApplicable, "set checks need a one-dimensional fiber");
    if (nb < 4 || nf < 4) fail(ErrorCode::GridTooCoarse, "product grid needs at least 4 cells per side");
    ProductGrid g;
    std::tie(g.r_lo, g.r_hi) = W.window();
    g.x_len = W.F.kind == FiberSpace::Kind::Interval ? W.F.length : W.F.circumference;
    g.nb = nb;
    g.nf = nf;
    static const double gx[3] = {-std::sqrt(0.6), 0, std::sqrt(0.6)}, gw[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};
    const double hb = (g.r_hi - g.r_lo) / nb, hf = g.x_len / nf;
    std::vector<double> mb(static_cast<std::size_t>(nb)), mf(static_cast<std::size_t>(nf));
    for (int i = 0; i < nb; ++i) {
      double s = 0;
      for (int q = 0; q < 3; ++q) s += gw[q] * std::pow(std::max(0.0, W.fval(g.r_lo + (i + 0.5 + 0.5 * gx[q]) * hb)), W.N);
      mb[static_cast<std::size_t>(i)] = 0.5 * hb * s;
    }
    for (int j = 0; j < nf; ++j) {
      double s = 0;
      for (int q = 0; q < 3; ++q) s += gw[q] * W.F.weight((j + 0.5 + 0.5 * gx[q]) * hf);
      mf[static_cast<std::size_t>(j)] = 0.5 * hf * s;
    }
    g.mass.resize(static_cast<std::size_t>(nb * nf));
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nf; ++j) g.mass[static_cast<std::size_t>(i * nf + j)] = mb[static_cast<std::size_t>(i)] * mf[static_cast<std::size_t>(j)];
    return g;
  }

  double hb() const { return (r_hi - r_lo) / nb; }
  double hf() const { return x_len / nf; }
  WarpedPoint center(int i, int j) const { return {r_lo + (i + 0.5) * hb(), (j + 0.5) * hf()}; }
  int cell(WarpedPoint p) const {
    const int i = std::clamp(static_cast<int>(std::floor((p.r - r_lo) / hb())), 0, nb - 1);
    const int j = std::clamp(static_cast<int>(std::floor(p.x / hf())), 0, nf - 1);
    return i * nf + j;
  }
  double measure_of(const std::vector<char>& marked) const {
    double m = 0;
    for (std::size_t k = 0; k < marked.size(); ++k)
      if (marked[k]) m += mass[k];
    return m;
  }
  /// Measure of unmarked cells touching a marked one (8-neighborhood; fiber wraps on circles).
  double ring_of(const std::vector<char>& marked, bool wrap) const {
    double m = 0;
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nf; ++j) {
        if (marked[static_cast<std::size_t>(i * nf + j)]) continue;
        bool touch = false;
        for (int di = -1; di <= 1 && !touch; ++di)
          for (int dj = -1; dj <= 1 && !touch; ++dj) {
            const int a = i + di;
            int b = j + dj;
            if (wrap) b = (b + nf) % nf;
            if (a < 0 || a >= nb || b < 0 || b >= nf) continue;
            touch = marked[static_cast<std::size_t>(a * nf + b)] != 0;
          }
        if (touch) m += mass[static_cast<std::size_t>(i * nf + j)];
      }
    return m;
  }
  std::vector<char> cells_in(const WarpedProduct& W, const ProductRect& A) const {
    std::vector<char> m(mass.size(), 0);
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nf; ++j) m[static_cast<std::size_t>(i * nf + j)] = A.contains(W, center(i, j)) ? 1 : 0;
    return m;
  }
};

struct SetCheckOptions {
  int grid_nb = 64, grid_nf = 64;
  int lattice = 10;  // points per side of each rectangle
  int random_pairs = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  GeodesicOptions geodesic{};
};

struct BrunnMinkowskiReport {
  double margin = 0;
  double tolerance = 0;
  double Theta = 0;
  double tau0 = 0, tau1 = 0;
  double m_t = 0, m0 = 0, m1 = 0;
  double exponent = 0;
  std::size_t pairs = 0;
  int grid_nb = 0, grid_nf = 0;
};

namespace detail {

inline std::vector<WarpedPoint> rect_lattice(const WarpedProduct& W, const ProductRect& A, int k) {
  std::vector<WarpedPoint> pts;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double r = k > 1 ? A.r_lo + (A.r_hi - A.r_lo) * i / (k - 1) : 0.5 * (A.r_lo + A.r_hi);
      const double u = k > 1 ? -1.0 + 2.0 * j / (k - 1) : 0.0;
      double x = A.x_center + u * A.x_radius;
      if (W.F.kind == FiberSpace::Kind::Circle) {
        x = std::fmod(x, W.F.circumference);
        if (x < 0) x += W.F.circumference;
      } else {
        x = std::clamp(x, 0.0, W.F.length);
      }
      pts.push_back({r, x});
    }
  return pts;
}

inline WarpedPoint random_in(const WarpedProduct& W, const ProductRect& A, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0, 1);
  const double r = A.r_lo + (A.r_hi - A.r_lo) * U(rng);
  double x = A.x_center + A.x_radius * (2 * U(rng) - 1);
  if (W.F.kind == FiberSpace::Kind::Circle) {
    x = std::fmod(x, W.F.circumference);
    if (x < 0) x += W.F.circumference;
  } else {
    x = std::clamp(x, 0.0, W.F.length);
  }
  return {r, x};
}

}  // namespace detail

/// m(A_t)^(1/(N+1)) - tau^(1-t) m(A_0)^(1/(N+1)) - tau^(t) m(A_1)^(1/(N+1)) with
/// tau = tau_{KN, N+1}; all three measures by counting cells of one product grid.
inline BrunnMinkowskiReport brunn_minkowski_check(const WarpedProduct& W, const ProductRect& A0, const ProductRect& A1,
                                                  double t, const SetCheckOptions& o = {}) {
  if (!(t >= 0 && t <= 1)) fail(ErrorCode::PreconditionFailed, "t must lie in [0, 1]");
  const auto grid = ProductGrid::make(W, o.grid_nb, o.grid_nf);
  const auto c0 = grid.cells_in(W, A0), c1 = grid.cells_in(W, A1);
  BrunnMinkowskiReport rep;
  rep.m0 = grid.measure_of(c0);
  rep.m1 = grid.measure_of(c1);
  if (!(rep.m0 > 0) || !(rep.m1 > 0)) fail(ErrorCode::EmptySet, "both sets need positive measure on the grid");

  const auto P0 = detail::rect_lattice(W, A0, o.lattice), P1 = detail::rect_lattice(W, A1, o.lattice);
  std::vector<std::pair<WarpedPoint, WarpedPoint>> pairs;
  for (const auto& p : P0)
    for (const auto& q : P1) pairs.push_back({p, q});
  std::mt19937_64 rng(o.seed);
  for (int k = 0; k < o.random_pairs; ++k) {
    const auto p = detail::random_in(W, A0, rng);
    const auto q = detail::random_in(W, A1, rng);
    pairs.push_back({p, q});
  }
  std::vector<WarpedPoint> mids(pairs.size());
  std::vector<double> dists(pairs.size());
  parallel_for(pairs.size(), resolve_threads(o.threads), [&](std::size_t k) {
    const auto g = geodesic_sample(W, pairs[k].first, pairs[k].second, t, o.geodesic);
    dists[k] = g.distance;
    mids[k] = g.point;
  });
  rep.pairs = pairs.size();

  std::vector<char> ct(grid.mass.size(), 0);
  for (const auto& m : mids) ct[static_cast<std::size_t>(grid.cell(m))] = 1;
  // constant geodesics: every point of A0 and A1 together is its own t-midpoint
  for (std::size_t k = 0; k < ct.size(); ++k)
    if (c0[k] && c1[k]) ct[k] = 1;
  rep.m_t = grid.measure_of(ct);

  const double K = W.f.K;
  rep.Theta = K >= 0 ? std::numeric_limits<double>::infinity() : 0.0;
  for (double d : dists) rep.Theta = K >= 0 ? std::min(rep.Theta, d) : std::max(rep.Theta, d);
  bool overlap = false;
  for (std::size_t k = 0; k < c0.size(); ++k) overlap = overlap || (c0[k] && c1[k]);
  if (K >= 0 && overlap) rep.Theta = 0;

  const double Np = W.N + 1, Kp = K * W.N;
  rep.exponent = 1 / Np;
  const auto t0 = tau({Kp, Np, 1 - t, rep.Theta}), t1 = tau({Kp, Np, t, rep.Theta});
  const bool wrap = W.F.kind == FiberSpace::Kind::Circle;
  const double p = rep.exponent;
  const double a = std::pow(rep.m0, p), b = std::pow(rep.m1, p), lhs = std::pow(rep.m_t, p);
  rep.grid_nb = grid.nb;
  rep.grid_nf = grid.nf;
  if (t0.is_infinite() || t1.is_infinite()) {
    rep.tau0 = t0.as_double();
    rep.tau1 = t1.as_double();
    rep.margin = -std::numeric_limits<double>::infinity();
    return rep;
  }
  rep.tau0 = t0.value();
  rep.tau1 = t1.value();
  const double rhs = a == b ? (rep.tau0 + rep.tau1) * a : rep.tau0 * a + rep.tau1 * b;
  rep.margin = lhs - rhs;
  rep.tolerance = (std::pow(rep.m_t + grid.ring_of(ct, wrap), p) - lhs) +
                  rep.tau0 * (std::pow(rep.m0 + grid.ring_of(c0, wrap), p) - a) +
                  rep.tau1 * (std::pow(rep.m1 + grid.ring_of(c1, wrap), p) - b);
  return rep;
}

struct MCPReport {
  double margin = 0;
  double tolerance = 0;
  std::size_t samples = 0;
  std::size_t occupied_cells = 0;
  double pushed_mass = 0;
  int grid_nb = 0, grid_nf = 0;
};

/// Contraction of A toward `apex`: the sample at p moves to the point at
/// parameter t on the geodesic from p (t = 0) to the apex (t = 1) and carries
/// m(cell of p) * tau_{KN,N+1}^(1-t)(d(p, apex))^(N+1). Returns the minimum over
/// occupied grid cells of m(E) - pushed(E).
inline MCPReport mcp_check(const WarpedProduct& W, WarpedPoint apex, const ProductRect& A, double t,
                           const SetCheckOptions& o = {}) {
  if (!(t >= 0 && t <= 1)) fail(ErrorCode::PreconditionFailed, "t must lie in [0, 1]");
  const auto grid = ProductGrid::make(W, o.grid_nb, o.grid_nf);
  if (!(grid.measure_of(grid.cells_in(W, A)) > 0)) fail(ErrorCode::EmptySet, "set has zero measure on the grid");
  const double Np = W.N + 1, Kp = W.f.K * W.N;
  // sub-cell lattice of A, 4 samples per grid cell side
  const int kb = std::max(2, static_cast<int>(std::ceil(4 * (A.r_hi - A.r_lo) / grid.hb())));
  const int kf = std::max(2, static_cast<int>(std::ceil(4 * 2 * A.x_radius / grid.hf())));
  const double db = (A.r_hi - A.r_lo) / kb, df = 2 * A.x_radius / kf;
  struct Sample {
    WarpedPoint p;
    double mass;
  };
  std::vector<Sample> S;
  static const double gx[3] = {-std::sqrt(0.6), 0, std::sqrt(0.6)}, gw[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};
  for (int i = 0; i < kb; ++i) {
    const double rc = A.r_lo + (i + 0.5) * db;
    double mb = 0;
    for (int q = 0; q < 3; ++q) mb += gw[q] * std::pow(std::max(0.0, W.fval(rc + 0.5 * gx[q] * db)), W.N);
    mb *= 0.5 * db;
    for (int j = 0; j < kf; ++j) {
      double x = A.x_center - A.x_radius + (j + 0.5) * df;
      double mf = 0;
      for (int q = 0; q < 3; ++q) mf += gw[q] * W.F.weight(x + 0.5 * gx[q] * df);
      mf *= 0.5 * df;
      if (W.F.kind == FiberSpace::Kind::Circle) {
        x = std::fmod(x, W.F.circumference);
        if (x < 0) x += W.F.circumference;
      }
      S.push_back({{rc, x}, mb * mf});
    }
  }
  const double radius = W.f.K > 0 ? std::numbers::pi / std::sqrt(W.f.K) : std::numeric_limits<double>::infinity();
  std::vector<WarpedPoint> dest(S.size());
  std::vector<double> weight(S.size());
  parallel_for(S.size(), resolve_threads(o.threads), [&](std::size_t k) {
    const auto g = geodesic_sample(W, S[k].p, apex, t, o.geodesic);
    if (g.distance > radius) fail(ErrorCode::PreconditionFailed, "set leaves the ball of radius pi/sqrt(K) around the apex");
    const auto tw = tau({Kp, Np, 1 - t, g.distance});
    if (tw.is_infinite()) fail(ErrorCode::PreconditionFailed, "distortion coefficient is infinite");
    weight[k] = S[k].mass * std::pow(tw.value(), Np);
    dest[k] = g.point;
  });
  std::vector<double> pushed(grid.mass.size(), 0), qmax(grid.mass.size(), 0);
  std::vector<int> count(grid.mass.size(), 0);
  MCPReport rep;
  rep.samples = S.size();
  for (std::size_t k = 0; k < S.size(); ++k) {
    if (weight[k] <= 0) continue;
    const auto c = static_cast<std::size_t>(grid.cell(dest[k]));
    pushed[c] += weight[k];
    qmax[c] = std::max(qmax[c], weight[k]);
    ++count[c];
    rep.pushed_mass += weight[k];
  }
  rep.margin = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < pushed.size(); ++c) {
    if (count[c] == 0) continue;
    ++rep.occupied_cells;
    rep.margin = std::min(rep.margin, grid.mass[c] - pushed[c]);
    // a cell boundary cuts through about 4 sqrt(n) samples of the pushed lattice
    rep.tolerance = std::max(rep.tolerance, qmax[c] * (4 * std::sqrt(static_cast<double>(count[c])) + 4));
  }
  if (rep.occupied_cells == 0) rep.margin = 0;
  rep.grid_nb = grid.nb;
  rep.grid_nf = grid.nf;
  return rep;
}

}  // namespace warpcheck
