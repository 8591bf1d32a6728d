// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "support/gamma2_oracle.hpp"
#include "warpcheck/cli_report.hpp"

using namespace warpcheck;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::printf("%s %2d  %s: %s  [%.2f s", ok ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  if (std::isfinite(budget_s)) std::printf(" < %g s%s", budget_s, in_time ? "" : " EXCEEDED");
  std::printf("]\n");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scenario_path(const std::string& name) { return fs::path(WARPCHECK_SOURCE_DIR) / "scenarios" / (name + ".json"); }

struct Model {
  const char* warp;
  double K, KF;
  BaseSpace B;
};

std::vector<Model> models() {
  return {{"sin", 1, 1, BaseSpace::interval(0, pi)}, {"id", 0, 1, BaseSpace::half_line(0)},
          {"const", 0, 0, BaseSpace::line()},        {"sinh", -1, 1, BaseSpace::half_line(0)},
          {"exp", -1, 0, BaseSpace::line()},         {"cosh", -1, -1, BaseSpace::line()}};
}

oracle::Warp oracle_warp(const WarpedProduct& W) {
  return {[W](double r) { return W.f(r); }, [W](double r) { return W.f.d1(r); }, W.N};
}

oracle::Fiber oracle_fiber(const FiberSpace& F) {
  if (F.kind == FiberSpace::Kind::Circle) return {true, F.circumference, 0};
  return {false, F.length, F.weight_exponent};
}

// Base-factor support range for random test functions: clear of zeros of f.
std::pair<double, double> support_centers(const BaseSpace& B) {
  switch (B.kind) {
    case BaseSpace::Kind::Interval: return {B.a + 0.35 * (B.b - B.a), B.b - 0.35 * (B.b - B.a)};
    case BaseSpace::Kind::HalfLine: return {B.origin + 1.5, B.origin + 2.5};
    default: return {-1, 1};
  }
}

Gamma2Report unit_scaled(const WarpedProduct& W, const oracle::Separable& s, double energy) {
  const auto u = TensorFunction::sample(W, s.u1, s.u2, 2049, 513);
  const auto phi = TensorFunction::sample(W, s.p1, s.p2, 2049, 513);
  auto rep = gamma2_terms(W, u, phi);
  rep.total /= energy;
  rep.grad_sq_int /= energy;
  rep.lap_sq_int /= energy;
  for (double* t : {&rep.terms.base_gamma2, &rep.terms.fiber_gamma2_over_f4, &rep.terms.cross_drift, &rep.terms.fsharp_term,
                    &rep.terms.quotient_gradient_term})
    *t /= energy;
  be_inequality(rep, W);
  return rep;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  criterion(1, "Pythagorean identity on the six model warps", 1, [] {
    double worst = 0;
    for (const auto& m : models())
      worst = std::max(worst, pythagorean_residual(WarpFunction::catalog(m.warp, m.K), m.B, m.KF));
    return Outcome{worst <= 1e-10, fmt("max sup|(f')^2 + K f^2 - K_F| = %.3g (bound 1e-10)", worst)};
  });

  criterion(2, "distortion coefficient special cases", 1, [] {
    int bad = 0, n = 0;
    double worst = 0;
    for (double K : {-3.0, -1.0, 0.0, 0.5, 2.0})
      for (double N : {1.0, 2.0, 3.5})
        for (double t : {0.0, 0.25, 0.5, 0.9, 1.0}) {
          ++n;
          if (!(sigma({K, N, t, 0}) == ExtendedReal(t))) ++bad;  // sigma^(t)(0) = t
          const auto t1 = tau({K, 1, t, 1.3});                   // tau_{K,1}
          if (K <= 0 ? !(t1 == ExtendedReal(t)) : !t1.is_infinite()) ++bad;
          for (double th : {0.1, 1.0, 7.0})
            if (!(tau({0, N, t, th}) == ExtendedReal(t))) ++bad;  // K = 0 collapse
        }
    // closed form sigma_1^(t)(theta) = sin(t theta) / sin(theta)
    for (double t : {0.1, 0.5, 0.8})
      for (double th : {0.3, 1.0, 2.5}) {
        const double exact = std::sin(t * th) / std::sin(th);
        worst = std::max(worst, std::abs(sigma({2, 2, t, th}).value() - exact) / exact);
      }
    return Outcome{bad == 0 && worst <= 4 * std::numeric_limits<double>::epsilon(),
                   fmt("%d of %d exact identities fail; closed-form sigma rel. error %.2g", bad, 5 * n, worst)};
  });

  criterion(3, "geodesic invariants and grid oracle (suspension, cone)", 60, [] {
    const WarpedProduct S{BaseSpace::interval(0, pi), WarpFunction::catalog("sin", 1), 2, FiberSpace::interval(pi, 1, "sin")};
    const WarpedProduct C{BaseSpace::half_line(0), WarpFunction::catalog("id", 0), 2, FiberSpace::interval(pi, 1, "sin"), 4};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0, 1);
    double worst_rel = 0, worst_drift = 0;
    int paths = 0;
    for (const auto* W : {&S, &C}) {
      const bool sus = W == &S;
      for (int k = 0; k < 3; ++k) {
        const double r0 = sus ? 0.3 + 2.5 * U(rng) : 0.5 + 2.5 * U(rng);
        const double r1 = sus ? 0.3 + 2.5 * U(rng) : 0.5 + 2.5 * U(rng);
        const double L = 0.2 + 2.5 * U(rng);
        GeodesicOptions o;
        o.grid_fallback = false;
        const auto p = geodesic_2d(*W, r0, r1, L, o);
        const auto [lo, hi] = detail::strip_window(*W, r0, r1);
        const auto g = grid_geodesic(W->f, W->B, lo, hi, L, r0, r1, 2049, 2049);
        worst_rel = std::max(worst_rel, std::abs(p.length - g.length) / g.length);
        worst_drift = std::max(worst_drift, p.clairaut_drift);
        ++paths;
      }
    }
    return Outcome{worst_rel <= 1e-3 && worst_drift <= 1e-6,
                   fmt("%d paths: max |shooting - grid|/grid = %.3g (bound 1e-3), max Clairaut drift = %.3g (bound 1e-6)", paths,
                       worst_rel, worst_drift)};
  });

  criterion(4, "limit-point criterion for f(r) = r, N = 2", 1, [] {
    const auto B = BaseSpace::interval(0, 1);
    const auto f = WarpFunction::catalog("id", 0);
    std::string got;
    bool ok = true;
    for (double lam : {1.01, 2.0, 10.0, 0.5, 0.74}) {
      const bool lp = limit_point_check(schrodinger_transform(assemble(B, f, 2, lam, 200)), 0);
      ok = ok && lp == (lam > 0.75);
      got += fmt("%g:%s ", lam, lp ? "true" : "false");
    }
    return Outcome{ok, got + "(expected true iff lambda > 3/4)"};
  });

  criterion(5, "ground state and Lichnerowicz margin", 30, [] {
    double worst0 = 0, worst_kernel = 0;
    for (const auto& m : models())
      for (double N : {1.0, 2.0, 3.0}) {
        const auto op = assemble(m.B, WarpFunction::catalog(m.warp, m.K), N, 0, 400, {8, FarEnd::Neumann});
        const auto ep = spectrum(op, 2);
        worst0 = std::max(worst0, std::abs(ep.values[0]));
        worst_kernel = std::max(worst_kernel, op.apply(Eigen::VectorXd::Ones(op.size())).cwiseAbs().maxCoeff());
      }
    double worst_lich = std::numeric_limits<double>::infinity();
    for (double N : {2.0, 3.0}) {
      const auto spec = fiber_spectrum(FiberSpace::interval(pi, N - 1, "sin"), 400, 3);
      worst_lich = std::min(worst_lich, lichnerowicz_check(spec, 1, N));
    }
    return Outcome{worst0 <= 1e-10 && worst_kernel <= 1e-12 && worst_lich >= -1e-2,
                   fmt("max |lambda_0| = %.3g, max |L 1| = %.3g; min lambda_1 - K_F N = %.3g (bound -1e-2)", worst0,
                       worst_kernel, worst_lich)};
  });

  criterion(6, "Schrodinger conjugation preserves the first 5 eigenvalues", 30, [] {
    struct Case {
      BaseSpace B;
      WarpFunction f;
      double N, lambda;
    };
    const std::vector<Case> cases{
        {BaseSpace::interval(0, pi), WarpFunction::catalog("const", 0), 2, 0},
        {BaseSpace::interval(0, pi), WarpFunction::catalog("sin", 0), 2, 0},
        {BaseSpace::interval(0, pi), WarpFunction::catalog("sin", 0), 3, 1.5},
        {BaseSpace::interval(-1, 1), WarpFunction::catalog("cosh", -1), 3, 1},
        {BaseSpace::interval(0, 1), WarpFunction::catalog("exp", -1), 2, 0.5},
    };
    double worst_ratio = 0;
    for (const auto& c : cases) {
      const auto op = assemble(c.B, c.f, c.N, c.lambda, 400);
      const auto a = extrapolated_spectrum(op, 5), b = extrapolated_spectrum(op, 5, true);
      for (std::size_t k = 0; k < 5; ++k) worst_ratio = std::max(worst_ratio, std::abs(a[k] - b[k]) / (op.h * op.h));
    }
    return Outcome{worst_ratio <= 10, fmt("5 scenarios: max |difference| / h^2 = %.3g (bound 10)", worst_ratio)};
  });

  criterion(7, "Gamma_2 decomposition vs direct oracle; BE(KN, N+1) margins", 120, [] {
    // decomposition on suspension and cone, 20 seeds each
    const WarpedProduct S{BaseSpace::interval(0, pi), WarpFunction::catalog("sin", 1), 2, FiberSpace::interval(pi, 1, "sin")};
    const WarpedProduct C{BaseSpace::half_line(0), WarpFunction::catalog("id", 0), 2, FiberSpace::interval(pi, 1, "sin")};
    std::mt19937_64 rng(17);
    double worst_gap = 0, worst_be = std::numeric_limits<double>::infinity();
    for (const auto* W : {&S, &C}) {
      const auto [c_lo, c_hi] = W == &S ? std::pair{1.1, 2.0} : std::pair{1.5, 3.0};
      const auto [w_lo, w_hi] = W == &S ? std::pair{0.4, 0.8} : std::pair{0.5, 1.0};
      for (int k = 0; k < 20; ++k) {
        const auto s = oracle::random_separable(rng, c_lo, c_hi, w_lo, w_hi, oracle_fiber(W->F), k % 2 == 1);
        const auto d = oracle::gamma2_direct(oracle_warp(*W), oracle_fiber(W->F), s);
        const auto rep = unit_scaled(*W, s, d.grad_sq);
        worst_gap = std::max(worst_gap, std::abs(rep.total - d.gamma2 / d.grad_sq) / rep.h);
        worst_be = std::min(worst_be, rep.margin / rep.h);
      }
    }
    // BE on every bundled scenario the verdict engine accepts
    int accepted = 0;
    for (const char* name : {"spherical-suspension", "euclidean-cone", "cartesian-product", "elliptic-cone", "parabolic-cone",
                             "hyperbolic-cone", "example-1.2", "concavity-violating", "boundary-violating",
                             "under-attested-fiber", "affine-half-line", "negative-kf-necessity"}) {
      const auto sc = load_scenario(scenario_path(name));
      const auto rep = run("classify", sc);
      if (!rep.results.at("classify").pass) continue;
      ++accepted;
      const WarpedProduct W{sc.base, sc.warp, sc.N, sc.fiber, sc.grid.truncation_R};
      const auto [c_lo, c_hi] = support_centers(W.B);
      for (int k = 0; k < 5; ++k) {
        const auto s = oracle::random_separable(rng, c_lo, c_hi, 0.4, 0.8, oracle_fiber(W.F), k % 2 == 0);
        const auto u = TensorFunction::sample(W, s.u1, s.u2, 2049, 513);
        const auto phi = TensorFunction::sample(W, s.p1, s.p2, 2049, 513);
        const double e = gamma2_terms(W, u, phi).grad_sq_int;
        const auto g = unit_scaled(W, s, e);
        worst_be = std::min(worst_be, g.margin / g.h);
      }
    }
    return Outcome{worst_gap <= 50 && worst_be >= -50,
                   fmt("40 oracle cases: max |terms - direct| / h = %.3g (bound 50); %d accepted scenarios: min BE margin / h = "
                       "%.3g (bound -50)",
                       worst_gap, accepted, worst_be)};
  });

  criterion(8, "dimension identity; constant fiber factor reduces to base Bochner", 5, [] {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> A(-10, 10), Nd(0.1, 20);
    double worst = 0;
    for (int k = 0; k < 10000; ++k) {
      const auto [a, b] = dimension_identity(A(rng), A(rng), Nd(rng));
      worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
    }
    double worst_reduce = 0;
    for (const auto& W : {WarpedProduct{BaseSpace::interval(0, pi), WarpFunction::catalog("sin", 1), 2, FiberSpace::interval(pi, 1, "sin")},
                          WarpedProduct{BaseSpace::half_line(0), WarpFunction::catalog("id", 0), 2, FiberSpace::interval(pi, 1, "sin")},
                          WarpedProduct{BaseSpace::line(), WarpFunction::catalog("cosh", -1), 2, FiberSpace::circle(2 * pi)}}) {
      auto u1 = [](double r) { return oracle::bump(r, 1.5, 0.6) * (1 + 0.3 * r); };
      auto p1 = [](double r) { return 0.5 + oracle::bump(r, 1.4, 0.9); };
      const auto u = TensorFunction::sample(W, u1, [](double) { return 2.0; }, 2049, 65);
      const auto phi = TensorFunction::sample(W, p1, [](double) { return 1.0; }, 2049, 65);
      const auto rep = gamma2_terms(W, u, phi);
      double mF = 0;
      for (double m : fiber_form(W.F, 400).mass) mF += m;
      const double expect = 4 * mF * base_bochner(W, [&](double r) { return u.base(r); }, [&](double r) { return phi.base(r); });
      worst_reduce = std::max(worst_reduce, std::abs(rep.total - expect) / std::abs(expect));
    }
    return Outcome{worst <= 1e-12 && worst_reduce <= 1e-12,
                   fmt("identity max rel. gap %.3g over 1e4 triples (bound 1e-12); reduction rel. gap %.3g", worst, worst_reduce)};
  });

  criterion(9, "Brunn-Minkowski and MCP margins on product, cone, suspension", 120, [] {
    std::string detail;
    bool ok = true;
    int checks = 0;
    for (auto [name, seeds] : {std::pair{"cartesian-product", 3}, std::pair{"euclidean-cone", 2}, std::pair{"spherical-suspension", 1}}) {
      const auto sc = load_scenario(scenario_path(name));
      double bm = std::numeric_limits<double>::infinity(), mcp = bm, same = bm;
      for (int seed = 1; seed <= seeds; ++seed) {
        RunOptions o;
        o.seed = static_cast<std::uint64_t>(seed);
        for (const char* cmd : {"brunn-minkowski", "mcp"}) {
          const auto rep = run(cmd, sc, o);
          for (const auto& [k, r] : rep.results) {
            ok = ok && r.pass;
            ++checks;
          }
          if (rep.results.count("brunn_minkowski")) {
            const auto& r = rep.results.at("brunn_minkowski");
            bm = std::min(bm, r.margin / r.tolerance);
            same = std::min(same, rep.results.at("brunn_minkowski_identical").margin);
          }
          if (rep.results.count("mcp")) mcp = std::min(mcp, rep.results.at("mcp").margin / rep.results.at("mcp").tolerance);
        }
      }
      ok = ok && same >= 0;
      detail += fmt("%s: BM margin/tol %.3g, A0=A1 margin %.3g, MCP margin/tol %.3g; ", name, bm, same, mcp);
    }
    return Outcome{ok, fmt("%d checks; ", checks) + detail};
  });

  criterion(10, "verdict truth table on 12 bundled scenarios", 5, [] {
    struct Row {
      const char* scenario;
      const char* route;
      const char* subject;
      const char* conclusion;
      bool holds;
    };
    const Row table[] = {
        {"spherical-suspension", "Thm6_iff", "product", "RCD(2, 3)", true},
        {"euclidean-cone", "Thm6_iff", "product", "RCD(0, 3)", true},
        {"cartesian-product", "Thm6_iff", "product", "RCD(0, 3)", true},
        {"elliptic-cone", "Thm6_iff", "product", "RCD(-2, 3)", true},
        {"parabolic-cone", "Thm6_iff", "product", "RCD(-2, 3)", true},
        {"hyperbolic-cone", "Thm6_iff", "product", "RCD(-2, 3)", true},
        {"example-1.2", "Thm2_item4", "fiber", "RCD(-2, 4)", true},
        {"concavity-violating", "Thm1_sufficient", "product", "RCD(0, 3)", false},
        {"boundary-violating", "Thm1_sufficient", "product", "RCD(0, 3)", false},
        {"under-attested-fiber", "Thm6_iff", "product", "RCD(2, 3)", false},
        {"affine-half-line", "Thm6_iff", "product", "RCD(-2, 3)", true},
        {"negative-kf-necessity", "Thm2_item4", "fiber", "RCD(-2, 3)", true},
    };
    int match = 0;
    std::string wrong;
    for (const auto& row : table) {
      const auto rep = run("classify", load_scenario(scenario_path(row.scenario)));
      const auto& r = rep.results.at("classify");
      const auto& p = r.parameters;
      if (p["route"] == row.route && p["subject"] == row.subject && p["conclusion"] == row.conclusion && r.pass == row.holds)
        ++match;
      else
        wrong += std::string(" ") + row.scenario + "->" + p.value("route", "?") + "/" + p.value("conclusion", "?");
    }
    return Outcome{match == 12, fmt("%d of 12 (route, conclusion, verdict) rows match", match) + wrong};
  });

  criterion(11, "byte-identical reports across 1, 2 and 8 threads", std::numeric_limits<double>::infinity(), [] {
    const auto root = fs::temp_directory_path() / ("warpcheck_accept_" + std::to_string(::getpid()));
    std::vector<std::string> runs;
    int exit_codes = 0;
    for (int threads : {1, 2, 8}) {
      const auto out = root / std::to_string(threads);
      const std::string cmd = "WARPCHECK_THREADS=" + std::to_string(threads) + " SOURCE_DATE_EPOCH=1700000000 " + WARPCHECK_CLI +
                              " all --scenario " + scenario_path("spherical-suspension").string() + " --seed 42 --out " +
                              out.string() + " -q";
      const int status = std::system(cmd.c_str());
      exit_codes += WIFEXITED(status) ? WEXITSTATUS(status) : 99;
      std::string all;
      for (const char* f : {"report.json", "spectrum.csv", "product_spectrum.csv", "geodesic.csv"}) all += slurp(out / f) + '\x1f';
      runs.push_back(all);
    }
    std::error_code ec;
    fs::remove_all(root, ec);
    const bool same = runs[0] == runs[1] && runs[1] == runs[2] && runs[0].size() > 1000;
    return Outcome{same && exit_codes == 0, fmt("run(all, spherical-suspension, 42): %s, exit codes sum %d, %zu bytes",
                                                 same ? "identical" : "DIFFERENT", exit_codes, runs[0].size())};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
