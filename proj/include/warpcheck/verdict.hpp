#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "warpcheck/warp_analysis.hpp"

namespace warpcheck {

/// What the caller vouches for about the fiber; nothing here is proved.
struct FiberAttestation {
  double K_fib = 0;
  double N_fib = 1;
  bool verified = false;
  bool compact = true;
  bool geodesic = true;
  double diameter = std::numeric_limits<double>::quiet_NaN();
};

struct Verdict {
  enum class Route { Thm1_sufficient, Thm2_item3, Thm2_item4, Thm6_iff };
  bool rcd = false;
  double K_out = 0, N_out = 0;
  Route route = Route::Thm1_sufficient;
  std::vector<std::pair<std::string, bool>> hypothesis_trace;
  std::vector<std::string> notes;
  double K_F = 0;

  bool all_passed() const {
    for (const auto& h : hypothesis_trace)
      if (!h.second) return false;
    return true;
  }
};

inline const char* to_string(Verdict::Route r) {
  switch (r) {
    case Verdict::Route::Thm1_sufficient: return "Thm1_sufficient";
    case Verdict::Route::Thm2_item3: return "Thm2_item3";
    case Verdict::Route::Thm2_item4: return "Thm2_item4";
    case Verdict::Route::Thm6_iff: return "Thm6_iff";
  }
  return "";
}

struct ProductConfig {
  BaseSpace B;
  WarpFunction f;
  double N = 1;
  bool assert_product_rcd = false;
  LatticeOptions lattice;
};

/// f'' + K f = 0 on the lattice, by exact second derivative when available
/// and by centered second differences otherwise.
inline bool is_fK_affine(const WarpFunction& f, const BaseSpace& B, const LatticeOptions& o = {}) {
  const auto [lo, hi] = B.window(o.R);
  const int n = o.n;
  const double h = (hi - lo) / (B.kind == BaseSpace::Kind::Circle ? n : n - 1);
  double scale = 1;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(f(B.canonical(lo + i * h))));
  if (f.has_d2()) {
    for (int i = 0; i < n; ++i) {
      const double r = B.canonical(lo + i * h);
      if (std::abs(f.d2(r) + f.K * f(r)) > 1e-8 * scale) return false;
    }
    return true;
  }
  const double hh = h / 4;
  const int first = B.kind == BaseSpace::Kind::Circle ? 0 : 1;
  const int last = B.kind == BaseSpace::Kind::Circle ? n : n - 1;
  for (int i = first; i < last; ++i) {
    const double r = lo + i * h;
    const double d2 = (f(B.canonical(r + hh)) - 2 * f(B.canonical(r)) + f(B.canonical(r - hh))) / (hh * hh);
    if (std::abs(d2 + f.K * f(B.canonical(r))) > 1e-4 * scale) return false;
  }
  return true;
}

inline Verdict classify_rcd(const ProductConfig& cfg, const FiberAttestation& fib) {
  Verdict v;
  const double N = cfg.N;
  const auto rep = check_fK_concavity(cfg.f, cfg.B, cfg.lattice);
  const double KF = rep.K_F;
  v.K_F = KF;
  const double tol = 1e-8 * std::max(1.0, std::abs(KF));
  auto fiber_meets = [&](double Kreq, double Nreq) {
    return fib.verified && fib.N_fib <= Nreq + 1e-12 && fib.K_fib >= Kreq - tol;
  };
  auto diam_clause = [&]() {
    if (N == 1 && KF > 0) {
      v.notes.push_back("diam_F <= pi*sqrt((N-1)/K_F) = 0 when N = 1 and K_F > 0");
      const bool ok = !std::isnan(fib.diameter) && fib.diameter <= 0;
      v.hypothesis_trace.emplace_back("diam_F <= pi*sqrt((N-1)/K_F)", ok);
    }
  };
  v.notes.push_back(std::string("fiber compact attested: ") + (fib.compact ? "yes" : "no"));
  v.notes.push_back(std::string("fiber geodesic attested: ") + (fib.geodesic ? "yes" : "no"));
  if (rep.df_convention_mismatches > 0)
    v.notes.push_back("Df conventions differ at " + std::to_string(rep.df_convention_mismatches) + " lattice points");

  if (cfg.assert_product_rcd) {
    v.hypothesis_trace.emplace_back("product RCD(KN, N+1) asserted", true);
    v.hypothesis_trace.emplace_back("F geodesic", fib.geodesic);
    v.hypothesis_trace.emplace_back("implied (1) fK-concave", rep.is_fK_concave);
    v.hypothesis_trace.emplace_back("implied (2) boundary condition", rep.boundary_ok);
    if (KF >= 0) {
      v.route = Verdict::Route::Thm2_item3;
      v.K_out = KF * (N - 1);
      v.N_out = N;
      if (N == 1 && KF > 0) v.notes.push_back("implied diam_F <= pi*sqrt((N-1)/K_F) = 0");
    } else {
      v.route = Verdict::Route::Thm2_item4;
      v.K_out = KF * N;
      v.N_out = N + 1;
    }
    v.rcd = v.all_passed();
    return v;
  }

  v.K_out = cfg.f.K * N;
  v.N_out = N + 1;
  if (is_fK_affine(cfg.f, cfg.B, cfg.lattice) && rep.boundary_ok) {
    v.route = Verdict::Route::Thm6_iff;
    v.hypothesis_trace.emplace_back("f'' + K f = 0", true);
    v.hypothesis_trace.emplace_back("F compact", fib.compact);
    v.hypothesis_trace.emplace_back("F geodesic", fib.geodesic);
    v.hypothesis_trace.emplace_back("F satisfies RCD(K_F(N-1), N)", fiber_meets(KF * (N - 1), N));
    diam_clause();
    v.rcd = v.all_passed();
    return v;
  }

  v.route = Verdict::Route::Thm1_sufficient;
  v.hypothesis_trace.emplace_back("(1) fK-concave", rep.is_fK_concave);
  v.hypothesis_trace.emplace_back("(2) boundary condition", rep.boundary_ok);
  v.hypothesis_trace.emplace_back("F compact", fib.compact);
  v.hypothesis_trace.emplace_back("(3) F satisfies RCD(K_F(N-1), N)", fiber_meets(KF * (N - 1), N));
  diam_clause();
  v.rcd = v.all_passed();
  return v;
}

}  // namespace warpcheck
