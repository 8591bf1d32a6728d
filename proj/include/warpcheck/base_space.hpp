#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "warpcheck/errors.hpp"

namespace warpcheck {

/// One-dimensional model base: circle, line, half-line or compact interval.
struct BaseSpace {
  enum class Kind { Circle, Line, HalfLine, Interval };

  Kind kind = Kind::Line;
  double period = 0;  // Circle
  double origin = 0;  // HalfLine
  double a = 0, b = 0;  // Interval

  static BaseSpace circle(double period) {
    if (!(period > 0)) fail(ErrorCode::PreconditionFailed, "circle period must be > 0");
    BaseSpace s;
    s.kind = Kind::Circle;
    s.period = period;
    return s;
  }
  static BaseSpace line() { return BaseSpace{}; }
  static BaseSpace half_line(double origin = 0) {
    BaseSpace s;
    s.kind = Kind::HalfLine;
    s.origin = origin;
    return s;
  }
  static BaseSpace interval(double a, double b) {
    if (!(b > a)) fail(ErrorCode::PreconditionFailed, "interval needs b > a");
    BaseSpace s;
    s.kind = Kind::Interval;
    s.a = a;
    s.b = b;
    return s;
  }

  std::vector<double> boundary() const {
    switch (kind) {
      case Kind::HalfLine: return {origin};
      case Kind::Interval: return {a, b};
      default: return {};
    }
  }
  bool is_bounded() const { return kind == Kind::Circle || kind == Kind::Interval; }

  double lower() const {
    switch (kind) {
      case Kind::Circle: return 0;
      case Kind::Line: return -std::numeric_limits<double>::infinity();
      case Kind::HalfLine: return origin;
      case Kind::Interval: return a;
    }
    return 0;
  }
  double upper() const {
    switch (kind) {
      case Kind::Circle: return period;
      case Kind::Interval: return b;
      default: return std::numeric_limits<double>::infinity();
    }
  }

  bool contains(double r) const {
    if (kind == Kind::Circle) return std::isfinite(r);
    return r >= lower() - 1e-14 && r <= upper() + 1e-14;
  }

  /// Representative of r in [0, period) for circles, identity otherwise.
  double canonical(double r) const {
    if (kind != Kind::Circle) return r;
    double x = std::fmod(r, period);
    if (x < 0) x += period;
    return x;
  }

  double distance(double r, double s) const {
    if (kind == Kind::Circle) {
      const double d = canonical(s - r);
      return std::min(d, period - d);
    }
    return std::abs(r - s);
  }

  double diameter() const {
    switch (kind) {
      case Kind::Circle: return period / 2;
      case Kind::Interval: return b - a;
      default: return std::numeric_limits<double>::infinity();
    }
  }

  /// Finite window used for sampling; unbounded ends are cut at radius R.
  std::pair<double, double> window(double R) const {
    switch (kind) {
      case Kind::Circle: return {0, period};
      case Kind::Line: return {-R, R};
      case Kind::HalfLine: return {origin, origin + R};
      case Kind::Interval: return {a, b};
    }
    return {0, 0};
  }

  std::string describe() const {
    switch (kind) {
      case Kind::Circle: return "circle(" + std::to_string(period) + ")";
      case Kind::Line: return "line";
      case Kind::HalfLine: return "half_line(" + std::to_string(origin) + ")";
      case Kind::Interval: return "interval(" + std::to_string(a) + "," + std::to_string(b) + ")";
    }
    return "";
  }
};

}  // namespace warpcheck
