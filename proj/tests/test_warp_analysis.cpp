#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "warpcheck/verdict.hpp"
#include "warpcheck/warp_analysis.hpp"

using namespace warpcheck;
using std::numbers::pi;

namespace {

struct Model {
  const char* name;
  double K, KF;
  BaseSpace B;
};

std::vector<Model> models() {
  return {{"sin", 1, 1, BaseSpace::interval(0, pi)},   {"id", 0, 1, BaseSpace::half_line(0)},
          {"const", 0, 0, BaseSpace::line()},          {"sinh", -1, 1, BaseSpace::half_line(0)},
          {"exp", -1, 0, BaseSpace::line()},           {"cosh", -1, -1, BaseSpace::line()}};
}

WarpFunction hand(const char* name, double K, double (*g)(double)) {
  return WarpFunction::derived(name, K, g);
}

}  // namespace

TEST_CASE("alexandrov derivative at kinks and critical points") {
  const auto B = BaseSpace::line();
  auto v = hand("abs", 0, [](double r) { return std::abs(1 - r); });
  auto a = alexandrov_derivative(v, B, 1.0);
  CHECK(a.f_plus == Catch::Approx(1).margin(1e-9));
  CHECK(a.f_minus == Catch::Approx(-1).margin(1e-9));
  CHECK(a.Df == Catch::Approx(1).margin(1e-9));

  auto s = WarpFunction::catalog("sin", 1);
  a = alexandrov_derivative(s, BaseSpace::interval(0, pi), pi / 2);
  CHECK(std::abs(a.f_plus) < 1e-15);
  CHECK(std::abs(a.Df) < 1e-15);

  auto tent = hand("tent", 0, [](double r) { return std::min(r, 2 - r); });
  a = alexandrov_derivative(tent, B, 1.0);
  CHECK(a.f_plus == Catch::Approx(-1).margin(1e-9));
  CHECK(a.f_minus == Catch::Approx(1).margin(1e-9));
  CHECK(a.Df == 0);
  CHECK(a.Df_no_zero == Catch::Approx(-1).margin(1e-9));
}

TEST_CASE("alexandrov derivative agrees with exact slopes on smooth warps") {
  const auto B = BaseSpace::line();
  auto exact = WarpFunction::catalog("cosh", -1, 1.3, 0.8, 0.2);
  auto numeric = hand("cosh", -1, [](double r) { return 1.3 * std::cosh(0.8 * (r - 0.2)); });
  for (double r : {-2.0, -0.5, 0.2, 1.0, 3.0}) {
    const auto e = alexandrov_derivative(exact, B, r);
    const auto n = alexandrov_derivative(numeric, B, r);
    CHECK(std::abs(e.f_plus - n.f_plus) < 1e-8);
    CHECK(std::abs(e.f_minus - n.f_minus) < 1e-8);
  }
}

TEST_CASE("alexandrov derivative rejects wild oscillation") {
  auto w = hand("wild", 0, [](double r) { return r == 0 ? 0.0 : r * std::sin(1 / r); });
  CHECK_THROWS_AS(alexandrov_derivative(w, BaseSpace::line(), 0.0), Error);
  try {
    alexandrov_derivative(w, BaseSpace::line(), 0.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotSemiConcave);
  }
}

TEST_CASE("one-sided derivatives at the boundary ignore the missing side") {
  auto s = WarpFunction::catalog("sin", 1);
  const auto a = alexandrov_derivative(s, BaseSpace::interval(0, pi), 0.0);
  CHECK(a.has_plus);
  CHECK_FALSE(a.has_minus);
  CHECK(a.Df == Catch::Approx(1));
}

TEST_CASE("six model warps are fK-concave with the expected K_F") {
  for (const auto& m : models()) {
    auto f = WarpFunction::catalog(m.name, m.K);
    const auto rep = check_fK_concavity(f, m.B);
    INFO(m.name);
    CHECK(rep.is_fK_concave);
    CHECK(rep.boundary_ok);
    CHECK(std::abs(rep.K_F - m.KF) < 1e-10);
    CHECK(rep.df_convention_mismatches == 0);
  }
}

TEST_CASE("pythagorean residual vanishes on the model warps") {
  for (const auto& m : models()) {
    auto f = WarpFunction::catalog(m.name, m.K);
    INFO(m.name);
    CHECK(pythagorean_residual(f, m.B) <= 1e-12);
  }
  CHECK(pythagorean_residual(WarpFunction::catalog("id", 0), BaseSpace::half_line(0)) == 0);
}

TEST_CASE("constant warp with negative K has negative K_F") {
  auto f = WarpFunction::catalog("const", -2.0 / 3.0);
  const auto rep = check_fK_concavity(f, BaseSpace::line());
  CHECK(rep.is_fK_concave);
  CHECK(rep.K_F == Catch::Approx(-2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("concavity verdict follows the sign of f'' + K f") {
  struct Case {
    const char* name;
    double K, amp, rate, shift, offset;
    BaseSpace B;
  };
  const std::vector<Case> cases{
      {"sin", 1, 1, 1, 0, 0, BaseSpace::interval(0, pi)},
      {"sin", 0.5, 1, 1, 0, 0, BaseSpace::interval(0, pi)},
      {"sin", 1.5, 1, 1, 0, 0, BaseSpace::interval(0, pi)},
      {"cosh", 0, 1, 1, 0, 0, BaseSpace::line()},
      {"cosh", -1, 2, 1, 0.3, 0, BaseSpace::line()},
      {"cosh", -1.2, 1, 1, 0, 0, BaseSpace::line()},
      {"exp", -0.8, 1, 1, 0, 0, BaseSpace::line()},
      {"id", 0, 1, 1, 0, 1, BaseSpace::interval(0, 1)},
      {"sinh", -1, 1, 1, 0, 0.5, BaseSpace::half_line(0)},
      {"const", 0.1, 1, 1, 0, 0, BaseSpace::circle(2 * pi)},
  };
  for (const auto& c : cases) {
    auto f = WarpFunction::catalog(c.name, c.K, c.amp, c.rate, c.shift, c.offset);
    const auto [lo, hi] = c.B.window(4.0);
    double worst = -1e300;
    for (int i = 0; i <= 1024; ++i) {
      const double r = lo + (hi - lo) * i / 1024.0;
      worst = std::max(worst, f.d2(r) + c.K * f(r));
    }
    const bool analytic = worst <= 1e-8;
    INFO(c.name << " K=" << c.K);
    CHECK(check_fK_concavity(f, c.B).is_fK_concave == analytic);
  }
}

TEST_CASE("decreasing K never breaks concavity") {
  for (double K0 : {1.0, 0.0, -1.0}) {
    auto f = WarpFunction::catalog(K0 > 0 ? "sin" : K0 == 0 ? "id" : "cosh", K0);
    const BaseSpace B = K0 > 0 ? BaseSpace::interval(0, pi) : K0 == 0 ? BaseSpace::half_line(0) : BaseSpace::line();
    for (double dK : {0.0, 0.1, 0.5, 2.0}) {
      f.K = K0 - dK;
      CHECK(check_fK_concavity(f, B).is_fK_concave);
    }
  }
}

TEST_CASE("boundary condition uses the outward derivative") {
  auto f = WarpFunction::catalog("id", 0, 1, 1, 0, 1);  // 1 + r on [0,1]
  const auto rep = check_fK_concavity(f, BaseSpace::interval(0, 1));
  CHECK(rep.is_fK_concave);
  CHECK_FALSE(rep.boundary_ok);
  CHECK(rep.boundary_margin == Catch::Approx(-1));

  auto g = WarpFunction::catalog("id", 0, -1, 1, 0, 2);  // 2 - r on [0,1]
  const auto rep2 = check_fK_concavity(g, BaseSpace::interval(0, 1));
  CHECK_FALSE(rep2.boundary_ok);

  auto c = WarpFunction::catalog("const", 0);
  CHECK(check_fK_concavity(c, BaseSpace::interval(0.5, 1.5)).boundary_ok);
  auto s = WarpFunction::catalog("sin", 1);
  CHECK(check_fK_concavity(s, BaseSpace::interval(0, pi / 2)).boundary_ok);
}

TEST_CASE("domain mismatch for short samples") {
  std::vector<double> x{0, 0.5, 1}, y{0, 0.4, 0.8};
  auto f = WarpFunction::sampled(x, y, 0);
  CHECK_THROWS_AS(check_fK_concavity(f, BaseSpace::interval(0, 2)), Error);
  CHECK_NOTHROW(check_fK_concavity(f, BaseSpace::interval(0, 1)));
}

TEST_CASE("sampled sine is concave within its own tolerance") {
  std::vector<double> x, y;
  for (int i = 0; i <= 400; ++i) {
    x.push_back(pi * i / 400);
    y.push_back(std::sin(x.back()));
  }
  y.front() = 0;
  y.back() = 0;
  auto f = WarpFunction::sampled(x, y, 1);
  const auto rep = check_fK_concavity(f, BaseSpace::interval(0, pi));
  CHECK(rep.is_fK_concave);
  CHECK(std::abs(rep.K_F - 1) < 1e-2);
}

TEST_CASE("K_F equivalence on examples") {
  {
    auto f = WarpFunction::catalog("cosh", -1);
    const auto [l, r] = kf_equivalence(f, BaseSpace::line(), -1);
    CHECK(l);
    CHECK(r);
  }
  {
    auto f = WarpFunction::catalog("sin", 1);
    const auto [l, r] = kf_equivalence(f, BaseSpace::interval(0, pi), 0.5);
    CHECK_FALSE(l);
    CHECK_FALSE(r);
  }
  {
    auto f = WarpFunction::catalog("const", 0);
    const auto [l, r] = kf_equivalence(f, BaseSpace::line(), 0);
    CHECK(l);
    CHECK(r);
  }
  CHECK_THROWS_AS(kf_equivalence(WarpFunction::catalog("cosh", 0), BaseSpace::line(), 1), Error);
}

TEST_CASE("K_F equivalence holds across candidates and scenarios") {
  struct Case {
    WarpFunction f;
    BaseSpace B;
  };
  std::vector<Case> cases{
      {WarpFunction::catalog("sin", 1), BaseSpace::interval(0, pi)},
      {WarpFunction::catalog("id", 0), BaseSpace::half_line(0)},
      {WarpFunction::catalog("sinh", -1), BaseSpace::half_line(0)},
      {WarpFunction::catalog("cosh", -1, 2, 1, 0.3), BaseSpace::line()},
      {WarpFunction::catalog("const", -0.5), BaseSpace::line()},
      {WarpFunction::catalog("sin", 0.5, 1, 1, 0, 0), BaseSpace::interval(0, pi)},
      {WarpFunction::catalog("sin", 1), BaseSpace::interval(0, pi / 2)},
      {WarpFunction::catalog("cosh", -1), BaseSpace::interval(-1, 1)},
  };
  for (auto& c : cases) {
    for (double kf : {-4.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) {
      const auto [l, r] = kf_equivalence(c.f, c.B, kf);
      INFO(c.f.describe() << " K_F=" << kf);
      CHECK(l == r);
    }
  }
}

TEST_CASE("dagger gluing") {
  auto f = WarpFunction::catalog("id", 0, 1, 1, 0, 1);
  const auto g = dagger_glue(f, BaseSpace::interval(0, 1));
  CHECK(g.changed);
  CHECK(g.base.kind == BaseSpace::Kind::Circle);
  CHECK(g.base.period == 2.0);
  CHECK(g.warp(0.25) == Catch::Approx(1.25));
  CHECK(g.warp(1.75) == Catch::Approx(1.25));
  CHECK(g.warp(1.0) == Catch::Approx(2.0));

  auto s = WarpFunction::catalog("sin", 1);
  const auto u = dagger_glue(s, BaseSpace::interval(0, pi));
  CHECK_FALSE(u.changed);
  CHECK(u.base.kind == BaseSpace::Kind::Interval);

  auto e = hand("e", 0, [](double r) { return std::exp(-r) + 1; });
  const auto l = dagger_glue(e, BaseSpace::half_line(0));
  CHECK(l.base.kind == BaseSpace::Kind::Line);
  CHECK(l.warp(-0.7) == Catch::Approx(std::exp(-0.7) + 1));

  // one glued endpoint doubles the interval
  auto half = WarpFunction::catalog("sin", 1, 1, 0.5);  // sin(r/2) on [0, pi]
  const auto d = dagger_glue(half, BaseSpace::interval(0, pi));
  CHECK(d.base.kind == BaseSpace::Kind::Interval);
  CHECK(d.base.b == Catch::Approx(2 * pi));
  CHECK(d.warp(1.5 * pi) == Catch::Approx(std::sin(0.25 * pi)));

  CHECK_THROWS_AS(dagger_glue(f, BaseSpace::line()), Error);
}

TEST_CASE("dagger gluing is idempotent") {
  auto f = WarpFunction::catalog("id", 0, 1, 1, 0, 1);
  const auto g = dagger_glue(f, BaseSpace::interval(0, 1));
  try {
    const auto g2 = dagger_glue(g.warp, g.base);
    CHECK_FALSE(g2.changed);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NothingToGlue);
  }
  auto half = WarpFunction::catalog("sin", 1, 1, 0.5);
  const auto d = dagger_glue(half, BaseSpace::interval(0, pi));
  const auto d2 = dagger_glue(d.warp, d.base);
  CHECK_FALSE(d2.changed);
}

TEST_CASE("gluing condition matches concavity of the glued warp") {
  // 1 + r violates the outward condition, the glued circle warp has a convex kink
  auto bad = WarpFunction::catalog("id", 0, 1, 1, 0, 1);
  auto g = dagger_glue(bad, BaseSpace::interval(0, 1));
  CHECK_FALSE(check_fK_concavity(g.warp, g.base).is_fK_concave);
  // cosh on [-1, 1] with K = -1 increases toward both ends
  auto ch = WarpFunction::catalog("cosh", -1);
  const auto B = BaseSpace::interval(-1, 1);
  CHECK(check_fK_concavity(ch, B).boundary_ok);
  auto c = dagger_glue(ch, B);
  CHECK(c.base.kind == BaseSpace::Kind::Circle);
  CHECK(check_fK_concavity(c.warp, c.base).is_fK_concave);
}

TEST_CASE("mollifier fixes affine and constant warps") {
  auto lin = hand("lin", 0, [](double r) { return 2 + 0.7 * r; });
  auto m = mollify_warp(lin, BaseSpace::line(), 0.1);
  for (double s : {-1.0, 0.0, 0.3, 2.0}) {
    CHECK(std::abs(m(s) - lin(s)) < 1e-13);
    CHECK(std::abs(m.d1(s) - 0.7) < 1e-10);
    CHECK(std::abs(m.d2(s)) < 1e-7);
  }
  auto c = hand("c", 0, [](double) { return 3.0; });
  auto mc = mollify_warp(c, BaseSpace::line(), 0.4);
  CHECK(std::abs(mc(1.0) - 3.0) < 1e-13);
}

TEST_CASE("mollified convex kink stays convex") {
  auto v = hand("abs", 0, [](double r) { return std::abs(r); });
  auto m = mollify_warp(v, BaseSpace::line(), 0.2);
  CHECK(m(0.0) > 0);
  // oracle: fine trapezoid of the same convolution
  const int n = 200000;
  double num = 0, den = 0;
  for (int j = 0; j < n; ++j) {
    const double x = -1 + (j + 0.5) * 2.0 / n;
    const double phi = std::exp(-1 / (1 - x * x));
    num += phi * std::abs(0.2 * x);
    den += phi;
  }
  CHECK(std::abs(m(0.0) - num / den) < 1e-8);
  auto rep = check_fK_concavity(m, BaseSpace::line(), LatticeOptions{257, 1.0, std::nullopt});
  CHECK(rep.worst_violation > 0);
  CHECK_FALSE(rep.is_fK_concave);
}

TEST_CASE("mollified derivatives match finite differences") {
  auto f = WarpFunction::catalog("cosh", -1, 1, 1.3);
  auto m = mollify_warp(f, BaseSpace::line(), 0.3);
  const double h = 1e-3;
  for (double s : {-1.0, 0.2, 1.1}) {
    CHECK(std::abs(m.d1(s) - (m(s + h) - m(s - h)) / (2 * h)) < 1e-6);
    CHECK(std::abs(m.d2(s) - (m(s + h) - 2 * m(s) + m(s - h)) / (h * h)) < 1e-5);
  }
}

TEST_CASE("mollification respects the boundary") {
  auto f = WarpFunction::catalog("sin", 1);
  auto m = mollify_warp(f, BaseSpace::interval(0, pi), 0.1);
  CHECK_NOTHROW(m(0.5));
  try {
    m(0.05);
    FAIL("expected TooCloseToBoundary");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooCloseToBoundary);
  }
  CHECK_THROWS_AS(mollify_warp(f, BaseSpace::interval(0, pi), 2.0), Error);
}

TEST_CASE("mollification preserves fK-concavity on random inputs") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0, 1);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    // min of affine pieces plus a K-concave smooth part
    const int pieces = 2 + static_cast<int>(4 * U(rng));
    std::vector<std::pair<double, double>> aff;
    for (int p = 0; p < pieces; ++p) aff.emplace_back(-2 + 4 * U(rng), 10 + 2 * U(rng));
    const double K = -0.5 * U(rng);
    const double c = 0.5 * U(rng);
    auto g = [aff, c](double r) {
      double m = 1e300;
      for (auto [s, b] : aff) m = std::min(m, b + s * r);
      return m - c * r * r;
    };
    auto f = WarpFunction::derived("rand", K, g, {}, {}, -3, 3);
    const auto B = BaseSpace::interval(-1.5, 1.5);
    LatticeOptions o{129, 4.0, std::nullopt};
    const auto in = check_fK_concavity(f, B, o);
    if (!in.is_fK_concave) continue;
    ++checked;
    auto m = mollify_warp(f, BaseSpace::interval(-3, 3), 0.05 + 0.2 * U(rng));
    const auto out = check_fK_concavity(m, B, o);
    INFO("trial " << trial << " violation " << out.worst_violation << " tol " << out.tolerance);
    CHECK(out.is_fK_concave);
  }
  CHECK(checked >= 40);
}

TEST_CASE("boundary surgery on the sine") {
  auto f = WarpFunction::catalog("sin", 1);
  const auto B = BaseSpace::interval(0, pi);
  const double eps = 0.05, eta = 0.2;
  const auto s = boundary_surgery(f, B, eps, eta);
  CHECK(std::abs(s.t0 - eps) < 1e-8);
  CHECK(std::abs(s.K_eps - 1) < 1e-8);
  // C^1 matching at the splice and the values of gbar at 0
  const auto fe = mollify_warp(f, B, eps);
  CHECK(std::abs(s.h(s.splice) - fe(s.splice)) < 1e-14);
  CHECK(std::abs(s.h(s.splice - 1e-9) - fe(s.splice)) < 1e-8);
  CHECK(std::abs(s.h.d1(s.splice - 1e-12) - fe.d1(s.splice)) < 1e-10);
  CHECK(std::abs(s.h.d2(s.splice - 1e-12) - fe.d2(s.splice)) < 1e-8);
  CHECK(std::abs(s.h(s.base.a)) < 1e-10);
  for (double r : {0.3, 1.0, 2.0}) CHECK(std::abs(s.h(r) - std::sin(r)) < 1e-2);
  const auto rep = check_fK_concavity(s.h, s.base, LatticeOptions{257, 4, 1e-8});
  CHECK(rep.worst_violation <= 1e-8);
}

TEST_CASE("boundary surgery on a non-symmetric warp") {
  // f = r (1 - r/4) on [0, 4]: f'' = -1/2, f+ (0) = 1
  auto f = WarpFunction::derived("poly", 0, [](double r) { return r * (1 - r / 4); }, {}, {}, 0, 4);
  const auto B = BaseSpace::interval(0, 4);
  const auto s = boundary_surgery(f, B, 0.04, 0.2);
  CHECK(std::abs(s.h(s.base.a)) < 1e-10);
  CHECK(s.K_eps >= f.K);
  const auto rep = check_fK_concavity(s.h, s.base, LatticeOptions{257, 4, 1e-8});
  CHECK(rep.worst_violation <= 1e-8);
  const double gbar0 = s.h(s.splice);
  CHECK(std::abs(gbar0 - mollify_warp(f, B, 0.04)(0.04)) < 1e-14);
}

TEST_CASE("boundary surgery preconditions") {
  auto f = WarpFunction::catalog("sin", 1);
  const auto B = BaseSpace::interval(0, pi);
  CHECK_THROWS_AS(boundary_surgery(f, B, 0.05, 0.3), Error);  // eta >= f+/4
  CHECK_THROWS_AS(boundary_surgery(f, B, 0.5, 0.2), Error);   // outside the eta window
  CHECK_THROWS_AS(boundary_surgery(WarpFunction::catalog("const", 0), BaseSpace::interval(0, 1), 0.05, 0.1), Error);
}

TEST_CASE("verdict on the model cases") {
  struct Case {
    const char* name;
    double K;
    BaseSpace B;
    double N;
    FiberAttestation fib;
    double K_out, N_out;
  };
  const std::vector<Case> cases{
      {"sin", 1, BaseSpace::interval(0, pi), 2, {1, 2, true}, 2, 3},
      {"id", 0, BaseSpace::half_line(0), 2, {1, 2, true}, 0, 3},
      {"const", 0, BaseSpace::line(), 3, {0, 3, true}, 0, 4},
      {"sinh", -1, BaseSpace::half_line(0), 2, {1, 2, true}, -2, 3},
      {"exp", -1, BaseSpace::line(), 2, {0, 2, true}, -2, 3},
      {"cosh", -1, BaseSpace::line(), 2, {-1, 2, true}, -2, 3},
  };
  for (const auto& c : cases) {
    ProductConfig cfg{c.B, WarpFunction::catalog(c.name, c.K), c.N};
    const auto v = classify_rcd(cfg, c.fib);
    INFO(c.name);
    CHECK(v.route == Verdict::Route::Thm6_iff);
    CHECK(v.rcd);
    CHECK(v.K_out == Catch::Approx(c.K_out));
    CHECK(v.N_out == c.N_out);
  }
}

TEST_CASE("verdict necessity and failure routes") {
  {
    ProductConfig cfg{BaseSpace::line(), WarpFunction::catalog("const", -2.0 / 3.0), 3, true};
    const auto v = classify_rcd(cfg, {});
    CHECK(v.route == Verdict::Route::Thm2_item4);
    CHECK(v.rcd);
    CHECK(v.K_out == Catch::Approx(-2.0));
    CHECK(v.N_out == 4);
  }
  {
    ProductConfig cfg{BaseSpace::line(), WarpFunction::catalog("cosh", 0), 2};
    const auto v = classify_rcd(cfg, {5, 2, true});
    CHECK(v.route == Verdict::Route::Thm1_sufficient);
    CHECK_FALSE(v.rcd);
  }
  {
    ProductConfig cfg{BaseSpace::interval(0, 1), WarpFunction::catalog("id", 0, 1, 1, 0, 1), 2};
    const auto v = classify_rcd(cfg, {5, 2, true});
    CHECK(v.route == Verdict::Route::Thm1_sufficient);
    CHECK_FALSE(v.rcd);
  }
  {
    ProductConfig cfg{BaseSpace::interval(0, pi), WarpFunction::catalog("sin", 1), 2};
    const auto v = classify_rcd(cfg, {0.5, 2, true});
    CHECK(v.route == Verdict::Route::Thm6_iff);
    CHECK_FALSE(v.rcd);
  }
  {
    // strictly concave warp goes through the sufficient route
    ProductConfig cfg{BaseSpace::interval(0, pi), WarpFunction::catalog("sin", 0.5), 2};
    const auto v = classify_rcd(cfg, {1, 2, true});
    CHECK(v.route == Verdict::Route::Thm1_sufficient);
    CHECK(v.rcd);
    CHECK(v.K_out == Catch::Approx(1.0));
  }
  {
    ProductConfig cfg{BaseSpace::interval(0, pi), WarpFunction::catalog("sin", 1), 1};
    const auto v = classify_rcd(cfg, {0, 1, true});
    CHECK_FALSE(v.rcd);
    bool saw = false;
    for (const auto& n : v.notes) saw = saw || n.find("diam_F") != std::string::npos;
    CHECK(saw);
  }
}
