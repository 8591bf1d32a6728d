#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "warpcheck/errors.hpp"

namespace warpcheck {

/// Catalog entry: f(r) = offset + amp * g(rate * (r - shift)).
struct AnalyticSource {
  std::string name;
  double amp = 1, rate = 1, shift = 0, offset = 0;
};

/// Piecewise-linear interpolation of nonnegative samples.
struct SampledSource {
  std::vector<double> grid;
  std::vector<double> values;
};

/// Anything built from other warps (mollified, glued, spliced, hand-written).
struct DerivedSource {
  std::string description;
};

class WarpFunction {
 public:
  using Fn = std::function<double(double)>;
  using Source = std::variant<AnalyticSource, SampledSource, DerivedSource>;

  static const std::vector<std::string>& catalog_names() {
    static const std::vector<std::string> names{"sin", "id", "const", "sinh", "exp", "cosh"};
    return names;
  }

  static WarpFunction catalog(const std::string& name, double K, double amp = 1,
                              double rate = 1, double shift = 0, double offset = 0) {
    struct G {
      double (*g)(double);
      double (*g1)(double);
      double (*g2)(double);
    };
    G g;
    if (name == "sin") {
      g = {[](double x) { return std::sin(x); }, [](double x) { return std::cos(x); },
           [](double x) { return -std::sin(x); }};
    } else if (name == "id") {
      g = {[](double x) { return x; }, [](double) { return 1.0; }, [](double) { return 0.0; }};
    } else if (name == "const") {
      g = {[](double) { return 1.0; }, [](double) { return 0.0; }, [](double) { return 0.0; }};
    } else if (name == "sinh") {
      g = {[](double x) { return std::sinh(x); }, [](double x) { return std::cosh(x); },
           [](double x) { return std::sinh(x); }};
    } else if (name == "exp") {
      g = {[](double x) { return std::exp(x); }, [](double x) { return std::exp(x); },
           [](double x) { return std::exp(x); }};
    } else if (name == "cosh") {
      g = {[](double x) { return std::cosh(x); }, [](double x) { return std::sinh(x); },
           [](double x) { return std::cosh(x); }};
    } else {
      fail(ErrorCode::PreconditionFailed, "unknown catalog warp '" + name + "'");
    }
    WarpFunction w;
    w.K = K;
    w.source_ = AnalyticSource{name, amp, rate, shift, offset};
    w.f_ = [=](double r) { return offset + amp * g.g(rate * (r - shift)); };
    w.d1_ = [=](double r) { return amp * rate * g.g1(rate * (r - shift)); };
    w.d2_ = [=](double r) { return amp * rate * rate * g.g2(rate * (r - shift)); };
    return w;
  }

  static WarpFunction sampled(std::vector<double> grid, std::vector<double> values, double K) {
    if (grid.size() < 2 || grid.size() != values.size())
      fail(ErrorCode::PreconditionFailed, "sampled warp needs >= 2 matching grid/value entries");
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1]))
        fail(ErrorCode::PreconditionFailed, "sample grid must be strictly increasing");
    for (double v : values)
      if (!(v >= 0) || !std::isfinite(v))
        fail(ErrorCode::PreconditionFailed, "sampled warp values must be finite and >= 0");
    WarpFunction w;
    w.K = K;
    w.lo_ = grid.front();
    w.hi_ = grid.back();
    // h * Lip(f') from second differences.
    double tol = 0;
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
      const double s0 = (values[i] - values[i - 1]) / (grid[i] - grid[i - 1]);
      const double s1 = (values[i + 1] - values[i]) / (grid[i + 1] - grid[i]);
      tol = std::max(tol, std::abs(s1 - s0));
    }
    w.tol_ = std::max(tol, 1e-8);
    auto src = std::make_shared<SampledSource>(SampledSource{std::move(grid), std::move(values)});
    w.source_ = *src;
    w.f_ = [src](double r) {
      const auto& x = src->grid;
      const auto& y = src->values;
      if (r <= x.front()) return y.front();
      if (r >= x.back()) return y.back();
      const auto it = std::upper_bound(x.begin(), x.end(), r);
      const std::size_t i = static_cast<std::size_t>(it - x.begin()) - 1;
      const double s = (r - x[i]) / (x[i + 1] - x[i]);
      return (1 - s) * y[i] + s * y[i + 1];
    };
    return w;
  }

  static WarpFunction derived(std::string description, double K, Fn f, Fn d1 = {}, Fn d2 = {},
                              double lo = -std::numeric_limits<double>::infinity(),
                              double hi = std::numeric_limits<double>::infinity(),
                              double tolerance = 1e-8) {
    WarpFunction w;
    w.K = K;
    w.source_ = DerivedSource{std::move(description)};
    w.f_ = std::move(f);
    w.d1_ = std::move(d1);
    w.d2_ = std::move(d2);
    w.lo_ = lo;
    w.hi_ = hi;
    w.tol_ = tolerance;
    return w;
  }

  double K = 0;

  double operator()(double r) const {
    if (r < lo_ - 1e-12 || r > hi_ + 1e-12)
      fail(out_of_domain_, "warp evaluated outside its domain at r=" + std::to_string(r));
    return f_(r);
  }
  bool has_d1() const { return static_cast<bool>(d1_); }
  bool has_d2() const { return static_cast<bool>(d2_); }
  double d1(double r) const {
    if (!d1_) fail(ErrorCode::NeedsSmoothness, "warp has no first derivative");
    return d1_(r);
  }
  double d2(double r) const {
    if (!d2_) fail(ErrorCode::NeedsSmoothness, "warp has no second derivative");
    return d2_(r);
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  bool covers(double a, double b) const { return a >= lo_ - 1e-12 && b <= hi_ + 1e-12; }

  /// Default concavity tolerance: 1e-8 for closed forms, h * Lip(f') for samples.
  double tolerance_hint() const { return tol_; }
  void set_tolerance_hint(double t) { tol_ = t; }
  void set_out_of_domain_error(ErrorCode c) { out_of_domain_ = c; }

  const Source& source() const { return source_; }
  const AnalyticSource* analytic() const { return std::get_if<AnalyticSource>(&source_); }
  bool is_sampled() const { return std::holds_alternative<SampledSource>(source_); }

  std::string describe() const {
    if (auto a = analytic()) return a->name;
    if (auto d = std::get_if<DerivedSource>(&source_)) return d->description;
    return "sampled";
  }

  /// For a catalog entry without offset: the K making f'' + K f = 0 and the
  /// constant value of (f')^2 + K f^2.
  std::optional<double> natural_K() const {
    auto a = analytic();
    if (!a) return std::nullopt;
    const double kg = (a->name == "sin") ? 1.0 : (a->name == "id" || a->name == "const") ? 0.0 : -1.0;
    return kg * a->rate * a->rate;
  }
  std::optional<double> catalog_KF() const {
    auto a = analytic();
    if (!a) return std::nullopt;
    double kf = 0;
    if (a->name == "sin" || a->name == "id" || a->name == "sinh") kf = 1;
    else if (a->name == "cosh") kf = -1;
    if (a->name == "const") return K * (a->amp + a->offset) * (a->amp + a->offset);
    return a->amp * a->amp * a->rate * a->rate * kf;
  }

 private:
  Source source_;
  Fn f_, d1_, d2_;
  double lo_ = -std::numeric_limits<double>::infinity();
  double hi_ = std::numeric_limits<double>::infinity();
  double tol_ = 1e-8;
  ErrorCode out_of_domain_ = ErrorCode::DomainMismatch;
};

}  // namespace warpcheck
