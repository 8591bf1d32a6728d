#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "warpcheck/errors.hpp"
#include "warpcheck/fiber_space.hpp"
#include "warpcheck/parallel.hpp"
#include "warpcheck/schrodinger_1d.hpp"
#include "warpcheck/warped_geometry.hpp"

namespace warpcheck {

/// f^# = f''/f + (N-1) f'^2 / f^2.
inline double fsharp(const WarpFunction& f, double N, double r) {
  const double v = f(r);
  if (!(v > 0)) fail(ErrorCode::DegeneratePoint, "f^# needs f(r) > 0");
  double d1, d2;
  if (f.has_d1() && f.has_d2()) {
    d1 = f.d1(r);
    d2 = f.d2(r);
  } else {
    const double h = 1e-4 * std::max(1.0, std::abs(r));
    d1 = (f(r + h) - f(r - h)) / (2 * h);
    d2 = (f(r + h) - 2 * v + f(r - h)) / (h * h);
  }
  return d2 / v + (N - 1) * d1 * d1 / (v * v);
}

/// Both sides of a^2 + b^2/N = (a+b)^2/(N+1) + (b - N a)^2 / ((N+1) N).
inline std::pair<double, double> dimension_identity(double a, double b, double N) {
  if (!(N > 0)) fail(ErrorCode::PreconditionFailed, "N must be > 0");
  const double lhs = a * a + b * b / N;
  const double rhs = (a + b) * (a + b) / (N + 1) + (b - N * a) * (b - N * a) / ((N + 1) * N);
  return {lhs, rhs};
}

/// u = u1 (x) u2 with both factors sampled on uniform grids and read back
/// through cubic B-splines (C^2, so the factors stay twice differentiable).
class TensorFunction {
 public:
  using Fn = std::function<double(double)>;

  static TensorFunction sample(const WarpedProduct& W, const Fn& g1, const Fn& g2, int n1 = 1025, int n2 = 513) {
    TensorFunction t = layout(W, n1, n2);
    for (int i = 0; i < n1; ++i) t.u1_.push_back(g1(t.r0_ + i * t.hr_));
    for (int j = 0; j < n2; ++j) t.u2_.push_back(g2(j * t.hx_));
    t.build();
    return t;
  }

  static TensorFunction constant(const WarpedProduct& W, double c = 1) {
    return sample(W, [c](double) { return c; }, [](double) { return 1.0; }, 17, 17);
  }

  /// Rank-one factorization of a grid function on the factor grids used by sample().
  static TensorFunction from_grid(const WarpedProduct& W, const Eigen::MatrixXd& U) {
    if (U.rows() < 8 || U.cols() < 8) fail(ErrorCode::GridTooCoarse, "factor grids need at least 8 samples");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(U, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    if (s.size() > 1 && s[1] > 1e-9 * std::max(s[0], 1e-300))
      fail(ErrorCode::NonSeparable, "grid function is not of the form u1 (x) u2");
    const Eigen::VectorXd a = svd.matrixU().col(0) * s[0], b = svd.matrixV().col(0);
    TensorFunction t = layout(W, static_cast<int>(U.rows()), static_cast<int>(U.cols()));
    t.u1_.assign(a.data(), a.data() + a.size());
    t.u2_.assign(b.data(), b.data() + b.size());
    t.build();
    return t;
  }

  double base(double r) const { return spline(r, *s1_, 0, true); }
  double base_d1(double r) const { return spline(r, *s1_, 1, true); }
  double fiber(double x) const { return spline(x, *s2_, 0, false); }
  double fiber_d1(double x) const { return spline(x, *s2_, 1, false); }
  double operator()(double r, double x) const { return base(r) * fiber(x); }

  const std::vector<double>& base_samples() const { return u1_; }
  double base_origin() const { return r0_; }
  double base_step() const { return hr_; }

 private:
  using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

  // Grid geometry: base nodes span the sampling window, fiber nodes span the
  // interval (or one period of the circle without repeating the endpoint).
  static TensorFunction layout(const WarpedProduct& W, int n1, int n2) {
    if (W.F.kind == FiberSpace::Kind::Finite) fail(ErrorCode::NotApplicable, "tensor functions need a catalog fiber");
    if (n1 < 8 || n2 < 8) fail(ErrorCode::GridTooCoarse, "factor grids need at least 8 samples");
    TensorFunction t;
    const auto [lo, hi] = W.window();
    t.r0_ = lo;
    t.hr_ = (hi - lo) / (n1 - 1);
    t.periodic_ = W.F.kind == FiberSpace::Kind::Circle;
    t.period_ = t.periodic_ ? W.F.circumference : W.F.length;
    t.hx_ = t.periodic_ ? t.period_ / n2 : t.period_ / (n2 - 1);
    return t;
  }

  // Second differences at spacing h and 2h agree for C^2 data and differ by
  // about half the jump across a kink.
  static void check_smooth(const std::vector<double>& v, double h, bool periodic) {
    const auto n = static_cast<long>(v.size());
    auto at = [&](long i) { return v[static_cast<std::size_t>(periodic ? ((i % n) + n) % n : i)]; };
    double scale = 0, worst = 0;
    const long lo = periodic ? 0 : 2, hi = periodic ? n : n - 2;
    for (long i = lo; i < hi; ++i) {
      const double d1 = (at(i + 1) - 2 * at(i) + at(i - 1)) / (h * h);
      const double d2 = (at(i + 2) - 2 * at(i) + at(i - 2)) / (4 * h * h);
      scale = std::max(scale, std::abs(d1));
      worst = std::max(worst, std::abs(d1 - d2));
    }
    double amp = 0;
    for (double x : v) amp = std::max(amp, std::abs(x));
    if (worst > 0.1 * scale + 1e-9 * (1 + amp / (h * h)))
      fail(ErrorCode::PreconditionFailed, "factor is not twice differentiable on its grid");
  }

  void build() {
    check_smooth(u1_, hr_, false);
    check_smooth(u2_, hx_, periodic_);
    s1_ = std::make_shared<Spline>(u1_.data(), u1_.size(), r0_, hr_);
    if (periodic_) {
      // wrap-around padding so the spline end conditions sit far from [0, period)
      std::vector<double> ext;
      const int n = static_cast<int>(u2_.size()), pad = 8;
      for (int i = -pad; i <= n + pad; ++i) ext.push_back(u2_[static_cast<std::size_t>(((i % n) + n) % n)]);
      s2_ = std::make_shared<Spline>(ext.data(), ext.size(), -pad * hx_, hx_);
    } else {
      s2_ = std::make_shared<Spline>(u2_.data(), u2_.size(), 0.0, hx_);
    }
  }

  double spline(double x, const Spline& s, int order, bool is_base) const {
    if (is_base) {
      const double hi = r0_ + hr_ * static_cast<double>(u1_.size() - 1);
      if (x < r0_ - 1e-12 || x > hi + 1e-12) fail(ErrorCode::OutOfRange, "base point outside the sampled window");
      x = std::clamp(x, r0_, hi);
    } else if (periodic_) {
      x = std::fmod(x, period_);
      if (x < 0) x += period_;
    } else {
      if (x < -1e-12 || x > period_ + 1e-12) fail(ErrorCode::OutOfRange, "fiber point outside the fiber");
      x = std::clamp(x, 0.0, period_);
    }
    return order == 0 ? s(x) : s.prime(x);
  }

  std::vector<double> u1_, u2_;
  double r0_ = 0, hr_ = 1, hx_ = 1, period_ = 1;
  bool periodic_ = false;
  std::shared_ptr<Spline> s1_, s2_;
};

struct Gamma2Terms {
  double base_gamma2 = 0;
  double fiber_gamma2_over_f4 = 0;
  double cross_drift = 0;
  double fsharp_term = 0;
  double quotient_gradient_term = 0;
};

struct Gamma2Report {
  Gamma2Terms terms;
  double total = 0;
  double grad_sq_int = 0;  // int |grad u|^2 phi dm^N
  double lap_sq_int = 0;   // int (L u)^2 phi dm^N
  double be_lhs = 0, be_rhs = 0, margin = 0;
  double h = 0;  // base cell width
  int base_n = 0, fiber_n = 0;
};

struct Gamma2Options {
  int base_n = 2400;
  int fiber_n = 400;
};

namespace detail {

/// Centered first differences; one-sided second order at open ends.
inline Eigen::VectorXd diff(const Eigen::VectorXd& v, double h, bool periodic) {
  const Eigen::Index n = v.size();
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (periodic) {
      d[i] = (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2 * h);
    } else if (i == 0) {
      d[i] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h);
    } else if (i == n - 1) {
      d[i] = (3 * v[n - 1] - 4 * v[n - 2] + v[n - 3]) / (2 * h);
    } else {
      d[i] = (v[i + 1] - v[i - 1]) / (2 * h);
    }
  }
  return d;
}

struct FactorGrids {
  SpectralOperator base;
  GraphForm fiber;
  std::vector<double> xgrid;
  double hx = 0;
  bool base_periodic = false, fiber_periodic = false;
  Eigen::VectorXd fv, fd1;  // f and f' at base cells
};

inline FactorGrids factor_grids(const WarpedProduct& W, const Gamma2Options& o) {
  if (W.F.kind == FiberSpace::Kind::Finite) fail(ErrorCode::NotApplicable, "Gamma_2 terms need a catalog fiber");
  FactorGrids g{assemble(W.B, W.f, W.N, 0, o.base_n, Truncation{W.window_R, FarEnd::Neumann}), {}, {}, 0, false, false, {}, {}};
  g.fiber = fiber_form(W.F, o.fiber_n, &g.xgrid);
  g.fiber_periodic = W.F.kind == FiberSpace::Kind::Circle;
  g.hx = g.fiber_periodic ? W.F.circumference / o.fiber_n : W.F.length / o.fiber_n;
  g.base_periodic = g.base.left == EndKind::Periodic;
  const int n = g.base.size();
  g.fv.resize(n);
  g.fd1.resize(n);
  const WarpEval F{&W.f, &W.B};
  for (int i = 0; i < n; ++i) {
    const double r = g.base.grid[static_cast<std::size_t>(i)];
    g.fv[i] = F(r);
    g.fd1[i] = F.d1(r);
  }
  return g;
}

inline void require_support(const WarpedProduct& W, const TensorFunction& u) {
  const auto& s = u.base_samples();
  double amp = 0;
  for (double v : s) amp = std::max(amp, std::abs(v));
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = u.base_origin() + u.base_step() * static_cast<double>(i);
    if (W.degenerate(r) && std::abs(s[i]) > 1e-12 * std::max(amp, 1e-300))
      fail(ErrorCode::SupportViolation, "u does not vanish where f = 0");
  }
}

}  // namespace detail

/// Grid quadrature of the five-term decomposition of Gamma_2(u; phi) on
/// B x_f^N F for separable u and phi, plus the integrals entering BE(KN, N+1).
inline Gamma2Report gamma2_terms(const WarpedProduct& W, const TensorFunction& u, const TensorFunction& phi,
                                 const Gamma2Options& o = {}) {
  detail::require_support(W, u);
  const auto g = detail::factor_grids(W, o);
  const auto& op = g.base;
  const int nb = op.size(), nf = g.fiber.size();
  Eigen::VectorXd u1(nb), p1(nb), u2(nf), p2(nf);
  for (int i = 0; i < nb; ++i) {
    const double r = op.grid[static_cast<std::size_t>(i)];
    u1[i] = u.base(r);
    p1[i] = phi.base(r);
  }
  for (int j = 0; j < nf; ++j) {
    const double x = g.xgrid[static_cast<std::size_t>(j)];
    u2[j] = u.fiber(x);
    p2[j] = phi.fiber(x);
  }
  if (p1.minCoeff() < 0 || p2.minCoeff() < 0) {
    // a product of two nonpositive factors is fine; flip both
    if (p1.maxCoeff() <= 0 && p2.maxCoeff() <= 0) {
      p1 = -p1;
      p2 = -p2;
    } else {
      fail(ErrorCode::PreconditionFailed, "phi must be nonnegative");
    }
  }
  const Eigen::VectorXd Lu1 = op.apply(u1), Lp1 = op.apply(p1);
  const Eigen::VectorXd Lu2 = g.fiber.apply_generator(u2), Lp2 = g.fiber.apply_generator(p2);
  const Eigen::VectorXd du1 = detail::diff(u1, op.h, g.base_periodic), dLu1 = detail::diff(Lu1, op.h, g.base_periodic);
  const Eigen::VectorXd du2 = detail::diff(u2, g.hx, g.fiber_periodic), dLu2 = detail::diff(Lu2, g.hx, g.fiber_periodic);
  Eigen::VectorXd q(nb);
  for (int i = 0; i < nb; ++i) q[i] = u1[i] / g.fv[i];
  const Eigen::VectorXd dq = detail::diff(q, op.h, g.base_periodic);

  auto sumb = [&](auto&& term) {
    double s = 0;
    for (int i = 0; i < nb; ++i) s += op.form.mass[static_cast<std::size_t>(i)] * term(i);
    return s;
  };
  auto sumf = [&](auto&& term) {
    double s = 0;
    for (int j = 0; j < nf; ++j) s += g.fiber.mass[static_cast<std::size_t>(j)] * term(j);
    return s;
  };
  // cells where u1 vanishes contribute nothing; skipping them avoids 0/0 at zeros of f
  auto live = [&](int i) { return u1[i] != 0 || du1[i] != 0; };

  const double B_gamma = sumb([&](int i) { return 0.5 * du1[i] * du1[i] * Lp1[i] - du1[i] * dLu1[i] * p1[i]; });
  const double F_gamma = sumf([&](int j) { return 0.5 * du2[j] * du2[j] * Lp2[j] - du2[j] * dLu2[j] * p2[j]; });
  const double F_u2phi = sumf([&](int j) { return u2[j] * u2[j] * p2[j]; });
  const double F_grad = sumf([&](int j) { return du2[j] * du2[j] * p2[j]; });
  const double F_uLu = sumf([&](int j) { return u2[j] * Lu2[j] * p2[j]; });
  const double F_Lu2sq = sumf([&](int j) { return Lu2[j] * Lu2[j] * p2[j]; });
  const double F_u2Lu2 = F_uLu;

  auto f4 = [&](int i) { return std::pow(g.fv[i], 4); };
  Gamma2Report rep;
  rep.terms.base_gamma2 = B_gamma * F_u2phi;
  rep.terms.fiber_gamma2_over_f4 = F_gamma * sumb([&](int i) { return live(i) ? u1[i] * u1[i] * p1[i] / f4(i) : 0.0; });
  rep.terms.cross_drift =
      F_uLu * sumb([&](int i) { return live(i) ? 2 * g.fd1[i] / g.fv[i] * du1[i] * u1[i] / (g.fv[i] * g.fv[i]) * p1[i] : 0.0; });
  rep.terms.fsharp_term = -F_grad * sumb([&](int i) {
    return live(i) ? fsharp(W.f, W.N, op.grid[static_cast<std::size_t>(i)]) / (g.fv[i] * g.fv[i]) * u1[i] * u1[i] * p1[i] : 0.0;
  });
  rep.terms.quotient_gradient_term = 2 * F_grad * sumb([&](int i) { return live(i) ? dq[i] * dq[i] * p1[i] : 0.0; });
  const auto& t = rep.terms;
  rep.total = t.base_gamma2 + t.fiber_gamma2_over_f4 + t.cross_drift + t.fsharp_term + t.quotient_gradient_term;

  rep.grad_sq_int = sumb([&](int i) { return du1[i] * du1[i] * p1[i]; }) * F_u2phi +
                    sumb([&](int i) { return live(i) ? u1[i] * u1[i] / (g.fv[i] * g.fv[i]) * p1[i] : 0.0; }) * F_grad;
  // (Lu1 u2 + u1 Lu2 / f^2)^2 expanded over the separable factors
  rep.lap_sq_int = sumb([&](int i) { return Lu1[i] * Lu1[i] * p1[i]; }) * F_u2phi +
                   2 * sumb([&](int i) { return live(i) ? Lu1[i] * u1[i] / (g.fv[i] * g.fv[i]) * p1[i] : 0.0; }) * F_u2Lu2 +
                   sumb([&](int i) { return live(i) ? u1[i] * u1[i] / f4(i) * p1[i] : 0.0; }) * F_Lu2sq;
  rep.h = op.h;
  rep.base_n = nb;
  rep.fiber_n = nf;
  return rep;
}

/// total - K N grad_sq_int - lap_sq_int / (N + 1).
inline double be_inequality(Gamma2Report& report, double K, double N, double grad_sq_int, double lap_sq_int) {
  report.be_lhs = report.total;
  report.be_rhs = K * N * grad_sq_int + lap_sq_int / (N + 1);
  report.margin = report.be_lhs - report.be_rhs;
  return report.margin;
}

inline double be_inequality(Gamma2Report& report, const WarpedProduct& W) {
  return be_inequality(report, W.f.K, W.N, report.grad_sq_int, report.lap_sq_int);
}

/// The base-only weighted Bochner quantity int 1/2 |u'|^2 L phi - u' (L u)' phi dm_B^N.
inline double base_bochner(const WarpedProduct& W, const TensorFunction::Fn& u1, const TensorFunction::Fn& phi1,
                           const Gamma2Options& o = {}) {
  const auto op = assemble(W.B, W.f, W.N, 0, o.base_n, Truncation{W.window_R, FarEnd::Neumann});
  const int n = op.size();
  Eigen::VectorXd u(n), p(n);
  for (int i = 0; i < n; ++i) {
    u[i] = u1(op.grid[static_cast<std::size_t>(i)]);
    p[i] = phi1(op.grid[static_cast<std::size_t>(i)]);
  }
  const bool per = op.left == EndKind::Periodic;
  const Eigen::VectorXd du = detail::diff(u, op.h, per), dLu = detail::diff(op.apply(u), op.h, per), Lp = op.apply(p);
  double s = 0;
  for (int i = 0; i < n; ++i) s += op.form.mass[static_cast<std::size_t>(i)] * (0.5 * du[i] * du[i] * Lp[i] - du[i] * dLu[i] * p[i]);
  return s;
}

struct GradientComparison {
  double min_difference = 0;  // min over points of |grad u|_*^2 - slope^2
  double h = 0;               // stencil radius
  std::size_t points = 0;
};

struct GradientOptions {
  int points_per_side = 12;
  int directions = 8;
  double radius = 0;  // 0: 1/64 of the smaller side of the sampling box
  int threads = 0;
  GeodesicOptions geodesic{};
};

/// Compares the product-structure gradient with the metric slope estimated by
/// difference quotients against true warped distances on a small stencil.
inline GradientComparison gradient_compare(const WarpedProduct& W, const TensorFunction& u, const GradientOptions& o = {}) {
  detail::require_support(W, u);
  if (W.F.kind == FiberSpace::Kind::Finite) fail(ErrorCode::NotApplicable, "gradient comparison needs a catalog fiber");
  const auto [lo, hi] = W.window();
  const double xlen = W.F.kind == FiberSpace::Kind::Circle ? W.F.circumference : W.F.length;
  const double rho = o.radius > 0 ? o.radius : std::min(hi - lo, xlen) / 64;
  struct Pt {
    double r, x;
  };
  std::vector<Pt> pts;
  const int k = o.points_per_side;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double r = lo + (hi - lo) * (i + 0.5) / k;
      const double x = xlen * (j + 0.5) / k;
      if (W.degenerate(r) || W.fval(r) < 4 * rho) continue;  // stencil would cross a zero of f
      pts.push_back({r, x});
    }
  std::vector<double> diffs(pts.size(), std::numeric_limits<double>::infinity());
  parallel_for(pts.size(), resolve_threads(o.threads), [&](std::size_t n) {
    const auto [r, x] = pts[n];
    const double f = W.fval(r);
    const double gr = u.base_d1(r) * u.fiber(x), gx = u.base(r) * u.fiber_d1(x);
    const double star = gr * gr + gx * gx / (f * f);
    // centered quotients over opposite stencil points: the one-sided bias
    // rho * |grad u| * |Hess u| would swamp the comparison for steep u
    double slope = 0;
    auto inside = [&](double rq, double xq) {
      return rq >= lo && rq <= hi && (W.F.kind != FiberSpace::Kind::Interval || (xq >= 0 && xq <= xlen));
    };
    for (int d = 0; 2 * d < o.directions; ++d) {
      const double th = 2 * std::numbers::pi * d / o.directions;
      const double dr = rho * std::cos(th), dx = rho * std::sin(th) / f;
      if (!inside(r + dr, x + dx) || !inside(r - dr, x - dx)) continue;
      const double span = distance(W, {r, x}, {r + dr, x + dx}, o.geodesic) + distance(W, {r, x}, {r - dr, x - dx}, o.geodesic);
      if (span > 0) slope = std::max(slope, std::abs(u(r + dr, x + dx) - u(r - dr, x - dx)) / span);
    }
    diffs[n] = star - slope * slope;
  });
  GradientComparison out;
  out.h = rho;
  out.points = pts.size();
  out.min_difference = pts.empty() ? 0.0 : *std::min_element(diffs.begin(), diffs.end());
  return out;
}

}  // namespace warpcheck
