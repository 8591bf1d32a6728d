#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <numbers>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "warpcheck/bakry_emery.hpp"
#include "warpcheck/fiber_space.hpp"
#include "warpcheck/grid_geodesic.hpp"
#include "warpcheck/scenario.hpp"
#include "warpcheck/schrodinger_1d.hpp"
#include "warpcheck/verdict.hpp"
#include "warpcheck/warp_analysis.hpp"
#include "warpcheck/warped_geometry.hpp"

namespace warpcheck {

struct CheckResult {
  bool pass = false;
  double margin = 0;
  double tolerance = 0;
  nlohmann::json parameters = nlohmann::json::object();
  std::optional<std::string> error_code, error_message;
};

struct RunOptions {
  std::uint64_t seed = 0;
  double grid_scale = 1;
  int threads = 0;  // 0: WARPCHECK_THREADS, else hardware
  std::string git_describe = "unknown";
  std::optional<std::int64_t> source_date_epoch;
};

struct Report {
  std::string scenario, command;
  std::map<std::string, CheckResult> results;
  std::map<std::string, std::string> artifacts;  // file name -> CSV text
  nlohmann::json grid = nlohmann::json::object();
  nlohmann::json provenance = nlohmann::json::object();

  bool passed() const {
    for (const auto& [k, r] : results)
      if (!r.pass) return false;
    return true;
  }
  int exit_code() const { return passed() ? 0 : 1; }

  nlohmann::json to_json() const;
  std::string dump() const { return to_json().dump(2) + "\n"; }
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"check",    "classify", "distance",        "geodesic", "spectrum",
                                              "bochner",  "brunn-minkowski", "mcp",      "all"};
  return names;
}

/// Non-finite numbers are written as strings so reports stay valid JSON.
inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

/// 8 significant digits, the relative tolerance of the verdict engine: K_F
/// from (f')^2 + K f^2 loses about eps * sup f^2 to cancellation.
inline std::string short_number(double x) {
  if (x == 0) x = 0;  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", x);
  return buf;
}

inline nlohmann::json Report::to_json() const {
  nlohmann::json j;
  j["schema"] = "1";
  j["scenario"] = scenario;
  j["command"] = command;
  j["passed"] = passed();
  auto& res = j["results"] = nlohmann::json::object();
  for (const auto& [k, r] : results) {
    nlohmann::json e{{"pass", r.pass}, {"margin", json_number(r.margin)}, {"tolerance", json_number(r.tolerance)},
                     {"parameters", r.parameters}};
    if (r.error_code) e["error"] = {{"code", *r.error_code}, {"message", r.error_message.value_or("")}};
    res[k] = e;
  }
  auto& art = j["artifacts"] = nlohmann::json::array();
  for (const auto& [name, text] : artifacts) art.push_back(name);
  j["grid"] = grid;
  j["provenance"] = provenance;
  return j;
}

inline nlohmann::json to_json(const Gamma2Report& r) {
  return {{"terms",
           {{"base_gamma2", r.terms.base_gamma2},
            {"fiber_gamma2_over_f4", r.terms.fiber_gamma2_over_f4},
            {"cross_drift", r.terms.cross_drift},
            {"fsharp_term", r.terms.fsharp_term},
            {"quotient_gradient_term", r.terms.quotient_gradient_term}}},
          {"total", r.total},
          {"grad_sq_int", r.grad_sq_int},
          {"lap_sq_int", r.lap_sq_int},
          {"be_lhs", r.be_lhs},
          {"be_rhs", r.be_rhs},
          {"margin", r.margin},
          {"h", r.h},
          {"base_n", r.base_n},
          {"fiber_n", r.fiber_n}};
}

namespace detail {

struct RunContext {
  const Scenario& s;
  WarpedProduct W;
  int base_n, fiber_n;
  std::uint64_t seed;
  int threads;
  LatticeOptions lattice;
};

// Independent generator per command, so "all" reproduces each single command.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

inline CheckResult error_result(const Error& e) {
  CheckResult r;
  r.pass = false;
  r.margin = -std::numeric_limits<double>::infinity();
  r.error_code = std::string(to_string(e.code()));
  r.error_message = e.what();
  return r;
}

// Runs one producer; a module error is recorded under `key` instead of escaping.
inline void guarded(Report& rep, const std::string& key, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    rep.results[key] = error_result(e);
  }
}

/// Base interval random sets and points are drawn from: the base itself when
/// bounded, a radius-2 window around the origin otherwise.
inline std::pair<double, double> sampling_interval(const WarpedProduct& W) {
  if (W.B.is_bounded()) return W.B.window(0);
  return W.B.window(std::min(2.0, W.window_R));
}

inline double fiber_extent(const FiberSpace& F) {
  switch (F.kind) {
    case FiberSpace::Kind::Interval: return F.length;
    case FiberSpace::Kind::Circle: return F.circumference;
    case FiberSpace::Kind::Finite: return static_cast<double>(F.dist.rows());
  }
  return 0;
}

inline WarpedPoint random_point(const WarpedProduct& W, std::mt19937_64& rng) {
  const auto [lo, hi] = sampling_interval(W);
  std::uniform_real_distribution<double> U(0, 1);
  const double pad = 0.05 * (hi - lo);
  WarpedPoint p{lo + pad + (hi - lo - 2 * pad) * U(rng), U(rng) * fiber_extent(W.F)};
  if (W.F.kind == FiberSpace::Kind::Finite) p.x = std::floor(p.x);
  return p;
}

inline ProductRect random_rect(const WarpedProduct& W, std::mt19937_64& rng) {
  const auto [lo, hi] = sampling_interval(W);
  std::uniform_real_distribution<double> U(0, 1);
  const double side = (0.1 + 0.15 * U(rng)) * (hi - lo);
  ProductRect A;
  A.r_lo = lo + (hi - lo - side) * U(rng);
  A.r_hi = A.r_lo + side;
  A.x_radius = (0.1 + 0.15 * U(rng)) * W.F.diameter();
  A.x_center = W.F.kind == FiberSpace::Kind::Interval ? A.x_radius + (W.F.length - 2 * A.x_radius) * U(rng)
                                                       : U(rng) * fiber_extent(W.F);
  return A;
}

inline nlohmann::json to_json(const ProductRect& A) {
  return {{"r_lo", A.r_lo}, {"r_hi", A.r_hi}, {"x_center", A.x_center}, {"x_radius", A.x_radius}};
}

inline void run_check(const RunContext& c, Report& rep) {
  guarded(rep, "fK_concavity", [&] {
    const auto cr = check_fK_concavity(c.W.f, c.W.B, c.lattice);
    rep.results["fK_concavity"] = {cr.is_fK_concave,
                                   -cr.worst_violation,
                                   cr.tolerance,
                                   {{"K", c.s.K},
                                    {"K_F", json_number(cr.K_F)},
                                    {"pairs_checked", cr.pairs_checked},
                                    {"lattice_n", c.lattice.n},
                                    {"worst", {{"t0", cr.worst_t0}, {"t1", cr.worst_t1}, {"s", cr.worst_s}}}}};
    nlohmann::json pts = nlohmann::json::array();
    for (double p : c.W.B.boundary()) pts.push_back(p);
    rep.results["boundary"] = {cr.boundary_ok, cr.boundary_margin, cr.tolerance, {{"boundary", pts}}};
    if (!is_fK_affine(c.W.f, c.W.B, c.lattice)) return;
    // rounding in (f')^2 + K f^2 grows with f^2, so the bound is relative to its scale
    const auto [lo, hi] = c.W.B.window(c.lattice.R);
    double scale = 1;
    for (int i = 0; i <= 256; ++i) {
      const double v = c.W.f(c.W.B.canonical(lo + (hi - lo) * i / 256.0));
      scale = std::max(scale, v * v);
    }
    const double res = pythagorean_residual(c.W.f, c.W.B, cr.K_F, c.lattice.R);
    rep.results["pythagorean"] = {res <= 1e-10 * scale, -res, 1e-10 * scale, {{"K_F", cr.K_F}, {"scale", scale}}};
  });
}

inline void run_classify(const RunContext& c, Report& rep) {
  guarded(rep, "classify", [&] {
    const ProductConfig cfg{c.W.B, c.W.f, c.s.N, c.s.assert_product_rcd, c.lattice};
    const auto v = classify_rcd(cfg, c.s.attestation);
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [name, ok] : v.hypothesis_trace) trace.push_back({{"hypothesis", name}, {"pass", ok}});
    const bool about_fiber = v.route == Verdict::Route::Thm2_item3 || v.route == Verdict::Route::Thm2_item4;
    rep.results["classify"] = {v.rcd,
                               v.rcd ? 0.0 : -1.0,
                               0,
                               {{"route", to_string(v.route)},
                                {"conclusion", "RCD(" + short_number(v.K_out) + ", " + short_number(v.N_out) + ")"},
                                {"subject", about_fiber ? "fiber" : "product"},
                                {"rcd", v.rcd},
                                {"K_F", json_number(v.K_F)},
                                {"hypotheses", trace},
                                {"notes", v.notes}}};
  });
}

constexpr double kClairautTolerance = 1e-6;

inline void run_distance(const RunContext& c, Report& rep) {
  guarded(rep, "distance", [&] {
    auto rng = stream(c.seed, 3);
    GeodesicOptions go;
    go.grid_fallback = false;
    double worst_rel = 0, worst_drift = 0;
    nlohmann::json pairs = nlohmann::json::array();
    for (int k = 0; k < 4; ++k) {
      const auto p0 = random_point(c.W, rng), p1 = random_point(c.W, rng);
      const double L = c.W.F.distance(p0.x, p1.x);
      const auto path = geodesic_2d(c.W, p0.r, p1.r, L, go);
      const auto [lo, hi] = strip_window(c.W, p0.r, p1.r);
      const auto g = grid_geodesic(c.W.f, c.W.B, lo, hi, L, p0.r, p1.r, 513, 2049);
      const double d = distance(c.W, p0, p1, go);
      const double rel = std::abs(path.length - g.length) / std::max(1e-12, g.length);
      worst_rel = std::max(worst_rel, rel);
      worst_drift = std::max(worst_drift, path.clairaut_drift);
      pairs.push_back({{"p0", {p0.r, p0.x}},
                       {"p1", {p1.r, p1.x}},
                       {"distance", d},
                       {"shooting", path.length},
                       {"grid", g.length},
                       {"clairaut_drift", path.clairaut_drift}});
    }
    rep.results["distance"] = {worst_rel <= c.s.tolerances.geodesic, -worst_rel, c.s.tolerances.geodesic,
                               {{"pairs", pairs}, {"grid_n", 513}, {"relax_n", 2049}}};
    rep.results["clairaut"] = {worst_drift <= kClairautTolerance, -worst_drift, kClairautTolerance, nlohmann::json::object()};
  });
}

inline void run_geodesic(const RunContext& c, Report& rep) {
  guarded(rep, "geodesic", [&] {
    auto rng = stream(c.seed, 5);
    const auto p0 = random_point(c.W, rng), p1 = random_point(c.W, rng);
    const double L = c.W.F.distance(p0.x, p1.x);
    const auto path = geodesic_2d(c.W, p0.r, p1.r, L);
    const double drift = std::max(path.clairaut_drift, path.speed_drift);
    std::ostringstream csv;
    write_geodesic_csv(csv, path);
    rep.artifacts["geodesic.csv"] = csv.str();
    rep.results["geodesic"] = {path.smooth && drift <= kClairautTolerance,
                               -drift,
                               kClairautTolerance,
                               {{"p0", {p0.r, p0.x}},
                                {"p1", {p1.r, p1.x}},
                                {"fiber_separation", L},
                                {"length", path.length},
                                {"clairaut", path.clairaut},
                                {"clairaut_drift", path.clairaut_drift},
                                {"speed_drift", path.speed_drift},
                                {"energy_residual", path.energy_residual},
                                {"smooth", path.smooth}}};
  });
}

inline void run_spectrum(const RunContext& c, Report& rep) {
  const Truncation trunc{c.W.window_R, FarEnd::Neumann};
  std::optional<SpectralOperator> op;
  guarded(rep, "ground_state", [&] {
    op = assemble(c.W.B, c.W.f, c.W.N, 0, c.base_n, trunc);
    const auto ep = spectrum(*op, 6);
    // Constants must lie in the kernel exactly. The solver's own ground vector is only
    // reported: on graded truncations the gap to lambda_1 can be ~1e-9 and it mixes modes.
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(op->size());
    const double kernel_residual = op->apply(one).cwiseAbs().maxCoeff();
    const Eigen::VectorXd v = ep.vectors.col(0);
    const double mean = v.mean();
    const double spread = (v.array() - mean).abs().maxCoeff() / std::abs(mean);
    std::ostringstream csv;
    write_spectrum_csv(csv, ep.values);
    rep.artifacts["spectrum.csv"] = csv.str();
    rep.results["ground_state"] = {std::abs(ep.values[0]) <= 1e-10 && kernel_residual <= 1e-12,
                                   -std::abs(ep.values[0]),
                                   1e-10,
                                   {{"eigenvalues", ep.values},
                                    {"constant_residual", kernel_residual},
                                    {"eigenvector_spread", spread},
                                    {"h", op->h}}};
  });
  if (op && op->left != EndKind::Degenerate && op->right != EndKind::Degenerate) {
    guarded(rep, "schrodinger_conjugation", [&] {
      const auto a = extrapolated_spectrum(*op, 5), b = extrapolated_spectrum(*op, 5, true);
      double worst = 0;
      for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
      const double tol = 10 * op->h * op->h;
      rep.results["schrodinger_conjugation"] = {worst <= tol, -worst, tol, {{"operator", a}, {"conjugate", b}}};
    });
  }
  guarded(rep, "fiber_spectrum", [&] {
    const auto fs = fiber_spectrum(c.W.F, c.fiber_n, 4);
    const auto KF = check_fK_concavity(c.W.f, c.W.B, c.lattice).K_F;
    const auto& a = c.s.attestation;
    if (KF > 0 && a.verified && a.N_fib <= c.W.N + 1e-12 && a.K_fib >= KF * (c.W.N - 1) - 1e-12) {
      const double m = lichnerowicz_check(c.W.F, fs, KF, c.W.N);
      rep.results["lichnerowicz"] = {m >= -c.s.tolerances.spectral,
                                     m,
                                     c.s.tolerances.spectral,
                                     {{"lambda_1", fs.eigenvalues[1]}, {"K_F", KF}, {"N", c.W.N}}};
    }
    std::ostringstream csv;
    csv.precision(17);
    csv << "j,fiber_mode,fiber_lambda,lambda\n";
    for (std::size_t k = 0; k < fs.eigenvalues.size(); ++k) {
      const double mu = std::max(0.0, fs.eigenvalues[k]);
      const auto vals = spectrum(assemble(c.W.B, c.W.f, c.W.N, mu, c.base_n, trunc), 5).values;
      for (std::size_t j = 0; j < vals.size(); ++j) csv << j << ',' << k << ',' << mu << ',' << vals[j] << '\n';
    }
    rep.artifacts["product_spectrum.csv"] = csv.str();
  });
}

inline double bump(double r, double c, double w) {
  const double s = (r - c) / w;
  return std::abs(s) < 1 ? std::pow(1 - s * s, 6) : 0.0;
}

inline void run_bochner(const RunContext& c, Report& rep) {
  std::optional<TensorFunction> first;
  double first_energy = 1;
  guarded(rep, "bochner", [&] {
    auto rng = stream(c.seed, 11);
    std::uniform_real_distribution<double> U(0, 1), S(-1, 1);
    const auto [lo, hi] = sampling_interval(c.W);
    const double span = hi - lo;
    const double k0 = c.W.F.kind == FiberSpace::Kind::Circle ? 2 * std::numbers::pi / c.W.F.circumference
                                                             : std::numbers::pi / fiber_extent(c.W.F);
    double worst = std::numeric_limits<double>::infinity(), h = 0;
    nlohmann::json samples = nlohmann::json::array();
    for (int k = 0; k < 3; ++k) {
      const double cc = lo + span * (0.35 + 0.3 * U(rng)), w = span * (0.15 + 0.1 * U(rng));
      const double a1 = S(rng), a2 = S(rng), pc = cc + 0.3 * w * S(rng);
      std::array<double, 4> b{};
      for (double& v : b) v = S(rng);
      const auto u = TensorFunction::sample(
          c.W, [=](double r) { return bump(r, cc, w) * (1 + a1 * (r - cc) + a2 * (r - cc) * (r - cc)); },
          [=](double x) {
            double v = 0;
            for (int q = 0; q < 4; ++q) v += b[static_cast<std::size_t>(q)] * std::cos(q * k0 * x);
            return v;
          });
      const auto phi = TensorFunction::sample(
          c.W, [=](double r) { return 0.2 + bump(r, pc, 1.5 * w); }, [=](double x) { return 1 + 0.5 * std::cos(k0 * x); });
      auto g = gamma2_terms(c.W, u, phi, {c.base_n, c.fiber_n});
      // unit weighted Dirichlet energy; Gamma_2 is quadratic in u
      const double e = g.grad_sq_int;
      if (!(e > 0)) fail(ErrorCode::PreconditionFailed, "test function has zero Dirichlet energy");
      g.total /= e;
      g.grad_sq_int /= e;
      g.lap_sq_int /= e;
      for (double* t : {&g.terms.base_gamma2, &g.terms.fiber_gamma2_over_f4, &g.terms.cross_drift, &g.terms.fsharp_term,
                        &g.terms.quotient_gradient_term})
        *t /= e;
      be_inequality(g, c.W);
      worst = std::min(worst, g.margin);
      h = g.h;
      samples.push_back(warpcheck::to_json(g));
      if (!first) {
        first = u;
        first_energy = e;
      }
    }
    const double tol = c.s.tolerances.be * h;
    rep.results["bochner"] = {worst >= -tol, worst, tol, {{"samples", samples}, {"normalization", "unit Dirichlet energy"}}};
  });
  if (!first) return;
  guarded(rep, "gradient", [&] {
    GradientOptions go;
    go.points_per_side = 6;
    go.threads = c.threads;
    const auto g = gradient_compare(c.W, *first, go);
    const double m = g.min_difference / first_energy;  // same unit-energy scaling as the Bochner samples
    rep.results["gradient"] = {m >= -5 * g.h, m, 5 * g.h, {{"points", g.points}, {"radius", g.h}, {"energy", first_energy}}};
  });
}

inline SetCheckOptions set_options(const RunContext& c) {
  SetCheckOptions o;
  o.seed = c.seed;
  o.threads = c.threads;
  return o;
}

inline void run_brunn_minkowski(const RunContext& c, Report& rep) {
  guarded(rep, "brunn_minkowski", [&] {
    auto rng = stream(c.seed, 13);
    const auto A0 = random_rect(c.W, rng), A1 = random_rect(c.W, rng);
    const auto o = set_options(c);
    const auto r = brunn_minkowski_check(c.W, A0, A1, 0.5, o);
    rep.results["brunn_minkowski"] = {r.margin >= -r.tolerance,
                                      r.margin,
                                      r.tolerance,
                                      {{"A0", to_json(A0)},
                                       {"A1", to_json(A1)},
                                       {"t", 0.5},
                                       {"Theta", r.Theta},
                                       {"tau0", r.tau0},
                                       {"tau1", r.tau1},
                                       {"m_t", r.m_t},
                                       {"m0", r.m0},
                                       {"m1", r.m1},
                                       {"exponent", r.exponent},
                                       {"pairs", r.pairs},
                                       {"grid", {r.grid_nb, r.grid_nf}}}};
    const auto same = brunn_minkowski_check(c.W, A0, A0, 0.5, o);
    rep.results["brunn_minkowski_identical"] = {same.margin >= 0, same.margin, 0, {{"A", to_json(A0)}}};
  });
}

inline void run_mcp(const RunContext& c, Report& rep) {
  guarded(rep, "mcp", [&] {
    auto rng = stream(c.seed, 17);
    const auto apex = random_point(c.W, rng);
    const auto A = random_rect(c.W, rng);
    const auto r = mcp_check(c.W, apex, A, 0.5, set_options(c));
    rep.results["mcp"] = {r.margin >= -r.tolerance,
                          r.margin,
                          r.tolerance,
                          {{"apex", {apex.r, apex.x}},
                           {"A", to_json(A)},
                           {"t", 0.5},
                           {"samples", r.samples},
                           {"occupied_cells", r.occupied_cells},
                           {"pushed_mass", r.pushed_mass},
                           {"grid", {r.grid_nb, r.grid_nf}}}};
  });
}

inline std::string iso_utc(std::int64_t epoch) {
  const std::time_t t = static_cast<std::time_t>(epoch);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Dispatches `command` on the scenario. The report depends only on the
/// scenario, the seed, the grid scale and the provenance fields in `o`.
inline Report run(const std::string& command, const Scenario& s, const RunOptions& o = {}) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end())
    fail(ErrorCode::PreconditionFailed, "unknown command '" + command + "'");
  if (!(o.grid_scale > 0)) fail(ErrorCode::PreconditionFailed, "grid scale must be > 0");

  const int base_n = std::max(16, static_cast<int>(std::lround(s.grid.base_n * o.grid_scale)));
  const int fiber_n = std::max(16, static_cast<int>(std::lround(s.grid.fiber_n * o.grid_scale)));
  // sampled warps cannot be checked below their own interpolation error
  const double concavity_tol =
      s.warp.is_sampled() ? std::max(s.tolerances.concavity, s.warp.tolerance_hint()) : s.tolerances.concavity;
  detail::RunContext c{s, WarpedProduct{s.base, s.warp, s.N, s.fiber, s.grid.truncation_R}, base_n, fiber_n, o.seed,
                       resolve_threads(o.threads), LatticeOptions{257, s.grid.truncation_R, concavity_tol}};

  Report rep;
  rep.scenario = s.name;
  rep.command = command;
  rep.grid = {{"base_n", base_n}, {"fiber_n", fiber_n}, {"truncation_R", s.grid.truncation_R}, {"scale", o.grid_scale}};
  nlohmann::json ts = nlohmann::json::object();
  if (o.source_date_epoch) ts = {{"source_date_epoch", *o.source_date_epoch}, {"generated", detail::iso_utc(*o.source_date_epoch)}};
  else ts = {{"source_date_epoch", nullptr}, {"generated", nullptr}};
  rep.provenance = {{"git_describe", o.git_describe}, {"seed", o.seed}, {"timestamps", ts}};

  const bool all = command == "all";
  if (all || command == "check") detail::run_check(c, rep);
  if (all || command == "classify") detail::run_classify(c, rep);
  if (all || command == "distance") detail::run_distance(c, rep);
  if (all || command == "geodesic") detail::run_geodesic(c, rep);
  if (all || command == "spectrum") detail::run_spectrum(c, rep);
  if (all || command == "bochner") detail::run_bochner(c, rep);
  if (all || command == "brunn-minkowski") detail::run_brunn_minkowski(c, rep);
  if (all || command == "mcp") detail::run_mcp(c, rep);
  return rep;
}

}  // namespace warpcheck
