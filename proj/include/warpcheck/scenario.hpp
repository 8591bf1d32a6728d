#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "warpcheck/errors.hpp"
#include "warpcheck/fiber_space.hpp"
#include "warpcheck/verdict.hpp"
#include "warpcheck/warp_function.hpp"

namespace warpcheck {

struct GridSpec {
  int base_n = 400;
  int fiber_n = 128;
  double truncation_R = 8;
};

/// `be` is the constant C in the bound -C h on the Bakry-Emery margin.
struct Tolerances {
  double concavity = 1e-8;
  double spectral = 1e-2;
  double geodesic = 1e-3;
  double be = 50;
};

struct Scenario {
  std::string name;
  BaseSpace base;
  WarpFunction warp;
  double K = 0;
  double N = 1;
  FiberSpace fiber;
  FiberAttestation attestation;
  bool assert_product_rcd = false;
  GridSpec grid;
  Tolerances tolerances;
  nlohmann::json source;  // the validated document, echoed into reports
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
  fail(ErrorCode::SchemaError, path + ": " + what);
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) schema_error(path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : j_.items()) {
      bool known = false;
      for (const char* a : keys) known = known || k == a;
      if (!known) schema_error(at(k), "unknown key");
    }
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  std::string at(const std::string& k) const { return path_ + "." + k; }
  const std::string& path() const { return path_; }

  const json& require(const std::string& k) const {
    if (!j_.contains(k)) schema_error(at(k), "required field is missing");
    return j_.at(k);
  }

  double number(const std::string& k) const {
    const auto& v = require(k);
    if (!v.is_number()) schema_error(at(k), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) schema_error(at(k), "expected a finite number");
    return x;
  }
  double number(const std::string& k, double fallback) const { return has(k) ? number(k) : fallback; }

  int integer(const std::string& k, int fallback) const {
    if (!has(k)) return fallback;
    const auto& v = j_.at(k);
    if (!v.is_number_integer()) schema_error(at(k), "expected an integer");
    return v.get<int>();
  }

  std::string string(const std::string& k) const {
    const auto& v = require(k);
    if (!v.is_string()) schema_error(at(k), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& k, const std::string& fallback) const { return has(k) ? string(k) : fallback; }

  bool boolean(const std::string& k, bool fallback) const {
    if (!has(k)) return fallback;
    const auto& v = j_.at(k);
    if (!v.is_boolean()) schema_error(at(k), "expected a boolean");
    return v.get<bool>();
  }

  Reader child(const std::string& k) const { return Reader(require(k), at(k)); }

 private:
  const json& j_;
  std::string path_;
};

// Constructor preconditions surface as schema errors at the owning path.
template <class Fn>
auto at_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) throw;
    schema_error(path, e.what());
  }
}

inline std::string resolve(const std::filesystem::path& dir, const std::string& file, const std::string& path) {
  const auto p = std::filesystem::path(file).is_absolute() ? std::filesystem::path(file) : dir / file;
  if (!std::filesystem::is_regular_file(p)) schema_error(path, "file not found: " + p.string());
  return p.string();
}

inline BaseSpace parse_base(const Reader& r) {
  const auto kind = r.string("kind");
  if (kind == "line") {
    r.allow({"kind"});
    return BaseSpace::line();
  }
  if (kind == "half_line") {
    r.allow({"kind", "origin"});
    return BaseSpace::half_line(r.number("origin", 0));
  }
  if (kind == "interval") {
    r.allow({"kind", "a", "b"});
    const double a = r.number("a"), b = r.number("b");
    return at_path(r.path(), [&] { return BaseSpace::interval(a, b); });
  }
  if (kind == "circle") {
    r.allow({"kind", "period"});
    const double p = r.number("period");
    return at_path(r.at("period"), [&] { return BaseSpace::circle(p); });
  }
  schema_error(r.at("kind"), "expected one of line, half_line, interval, circle");
}

inline WarpFunction parse_warp(const Reader& r, double K, const std::filesystem::path& dir) {
  if (r.has("samples")) {
    r.allow({"samples"});
    const auto file = resolve(dir, r.string("samples"), r.at("samples"));
    std::vector<double> x, y;
    const auto rows = read_csv_cells(file);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double a, b;
      if (rows[i].size() != 2 || !parse_number(rows[i][0], a) || !parse_number(rows[i][1], b)) {
        if (i == 0) continue;  // header
        schema_error(r.at("samples"), "row " + std::to_string(i + 1) + " is not 'r,f'");
      }
      if (!(b >= 0)) schema_error(r.at("samples"), "warp value " + std::to_string(b) + " at r = " + std::to_string(a) + " is negative");
      x.push_back(a);
      y.push_back(b);
    }
    return at_path(r.at("samples"), [&] { return WarpFunction::sampled(x, y, K); });
  }
  r.allow({"catalog", "amp", "rate", "shift", "offset"});
  const auto name = r.string("catalog");
  const auto& names = WarpFunction::catalog_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    schema_error(r.at("catalog"), "unknown catalog warp '" + name + "'");
  const double amp = r.number("amp", 1), rate = r.number("rate", 1), shift = r.number("shift", 0), offset = r.number("offset", 0);
  return at_path(r.path(), [&] { return WarpFunction::catalog(name, K, amp, rate, shift, offset); });
}

inline FiberSpace parse_fiber(const Reader& r, const std::filesystem::path& dir) {
  const auto kind = r.string("kind");
  if (kind == "interval") {
    r.allow({"kind", "rcd", "compact", "geodesic", "diameter", "length", "weight", "exponent"});
    const double L = r.number("length"), M = r.number("exponent", 0);
    const auto w = r.string("weight", "const");
    const auto& names = WarpFunction::catalog_names();
    if (std::find(names.begin(), names.end(), w) == names.end()) schema_error(r.at("weight"), "unknown weight '" + w + "'");
    return at_path(r.path(), [&] { return FiberSpace::interval(L, M, w); });
  }
  if (kind == "circle") {
    r.allow({"kind", "rcd", "compact", "geodesic", "diameter", "circumference"});
    const double c = r.number("circumference");
    return at_path(r.at("circumference"), [&] { return FiberSpace::circle(c); });
  }
  if (kind == "finite") {
    r.allow({"kind", "rcd", "compact", "geodesic", "diameter", "distance_csv", "weight_csv"});
    const auto d = resolve(dir, r.string("distance_csv"), r.at("distance_csv"));
    const auto w = resolve(dir, r.string("weight_csv"), r.at("weight_csv"));
    return at_path(r.path(), [&] { return load_finite_fiber(d, w); });
  }
  schema_error(r.at("kind"), "expected one of interval, circle, finite");
}

}  // namespace detail

/// Validates a scenario document. Relative file references resolve against `dir`.
inline Scenario parse_scenario(const nlohmann::json& doc, const std::filesystem::path& dir = ".") {
  const detail::Reader r(doc, "$");
  r.allow({"name", "base", "warp", "K", "N", "fiber", "assert_product_rcd", "grid", "tolerances"});
  Scenario s;
  s.name = r.string("name");
  if (s.name.empty()) detail::schema_error(r.at("name"), "must not be empty");
  s.K = r.number("K");
  s.N = r.number("N");
  if (!(s.N > 0)) detail::schema_error(r.at("N"), "must be > 0");
  s.base = detail::parse_base(r.child("base"));
  s.warp = detail::parse_warp(r.child("warp"), s.K, dir);

  const auto fr = r.child("fiber");
  s.fiber = detail::parse_fiber(fr, dir);
  s.attestation.compact = fr.boolean("compact", true);
  s.attestation.geodesic = fr.boolean("geodesic", s.fiber.is_geodesic_space());
  s.attestation.diameter = fr.number("diameter", s.fiber.diameter());
  if (fr.has("rcd")) {
    const auto a = fr.child("rcd");
    a.allow({"K", "N", "verified"});
    s.attestation.K_fib = a.number("K");
    s.attestation.N_fib = a.number("N");
    if (!(s.attestation.N_fib >= 1)) detail::schema_error(a.at("N"), "must be >= 1");
    s.attestation.verified = a.boolean("verified", true);
    s.fiber.rcd_attestation = FiberRcd{s.attestation.K_fib, s.attestation.N_fib};
  }
  s.assert_product_rcd = r.boolean("assert_product_rcd", false);

  if (r.has("grid")) {
    const auto g = r.child("grid");
    g.allow({"base_n", "fiber_n", "truncation_R"});
    s.grid.base_n = g.integer("base_n", s.grid.base_n);
    s.grid.fiber_n = g.integer("fiber_n", s.grid.fiber_n);
    s.grid.truncation_R = g.number("truncation_R", s.grid.truncation_R);
    if (s.grid.base_n < 16) detail::schema_error(g.at("base_n"), "must be >= 16");
    if (s.grid.fiber_n < 16) detail::schema_error(g.at("fiber_n"), "must be >= 16");
    if (!(s.grid.truncation_R > 0)) detail::schema_error(g.at("truncation_R"), "must be > 0");
  }
  if (r.has("tolerances")) {
    const auto t = r.child("tolerances");
    t.allow({"concavity", "spectral", "geodesic", "be"});
    auto& T = s.tolerances;
    for (auto [key, slot] : {std::pair{"concavity", &T.concavity}, std::pair{"spectral", &T.spectral},
                             std::pair{"geodesic", &T.geodesic}, std::pair{"be", &T.be}}) {
      *slot = t.number(key, *slot);
      if (!(*slot > 0)) detail::schema_error(t.at(key), "must be > 0");
    }
  }
  if (s.base.kind != BaseSpace::Kind::Circle) {
    const auto [lo, hi] = s.base.window(s.grid.truncation_R);
    if (!s.warp.covers(lo, hi)) detail::schema_error("$.warp", "samples do not cover the base window");
  }
  s.source = doc;
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) detail::schema_error("$", "cannot read " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    detail::schema_error("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(doc, path.parent_path());
}

}  // namespace warpcheck
