#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "warpcheck/errors.hpp"
#include "warpcheck/linalg.hpp"
#include "warpcheck/warp_function.hpp"

namespace warpcheck {

struct FiberRcd {
  double K = 0;
  double N = 1;
};

/// Model fiber: weighted interval, round circle, or finite metric space.
struct FiberSpace {
  enum class Kind { Interval, Circle, Finite };

  Kind kind = Kind::Circle;
  double length = 0;           // Interval
  double weight_exponent = 0;  // Interval: density w^M
  std::string weight_name = "const";
  std::shared_ptr<const WarpFunction> weight_fn;
  double circumference = 0;    // Circle
  Eigen::MatrixXd dist;        // Finite
  std::vector<double> weights;  // Finite
  std::optional<FiberRcd> rcd_attestation;

  static FiberSpace interval(double L, double M = 0, const std::string& weight = "const") {
    if (!(L > 0)) fail(ErrorCode::PreconditionFailed, "interval fiber needs L > 0");
    if (!(M >= 0)) fail(ErrorCode::PreconditionFailed, "weight exponent must be >= 0");
    FiberSpace F;
    F.kind = Kind::Interval;
    F.length = L;
    F.weight_exponent = M;
    F.weight_name = weight;
    F.weight_fn = std::make_shared<const WarpFunction>(WarpFunction::catalog(weight, 0));
    const double lo = F.weight(0), hi = F.weight(L), mid = F.weight(L / 2);
    if (lo < -1e-12 || hi < -1e-12 || mid <= 0)
      fail(ErrorCode::PreconditionFailed, "fiber weight must be nonnegative on [0, L]");
    return F;
  }
  static FiberSpace circle(double c) {
    if (!(c > 0)) fail(ErrorCode::PreconditionFailed, "circle fiber needs circumference > 0");
    FiberSpace F;
    F.kind = Kind::Circle;
    F.circumference = c;
    return F;
  }
  static FiberSpace finite(Eigen::MatrixXd D, std::vector<double> w) {
    const auto n = D.rows();
    if (n < 1 || D.cols() != n || static_cast<Eigen::Index>(w.size()) != n)
      fail(ErrorCode::PreconditionFailed, "finite fiber needs a square matrix and matching weights");
    for (double x : w)
      if (!(x > 0)) fail(ErrorCode::PreconditionFailed, "finite fiber weights must be > 0");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (D(i, i) != 0) fail(ErrorCode::PreconditionFailed, "distance matrix needs a zero diagonal");
      for (Eigen::Index j = 0; j < n; ++j) {
        if (D(i, j) != D(j, i)) fail(ErrorCode::PreconditionFailed, "distance matrix must be symmetric");
        if (i != j && !(D(i, j) > 0)) fail(ErrorCode::PreconditionFailed, "distinct points need positive distance");
        for (Eigen::Index k = 0; k < n; ++k)
          if (D(i, k) > D(i, j) + D(j, k) + 1e-12 * (1 + D(i, k)))
            fail(ErrorCode::PreconditionFailed, "triangle inequality fails at (" + std::to_string(i) + "," +
                                                    std::to_string(j) + "," + std::to_string(k) + ")");
      }
    }
    FiberSpace F;
    F.kind = Kind::Finite;
    F.dist = std::move(D);
    F.weights = std::move(w);
    return F;
  }

  /// Density of m_F on the interval.
  double weight(double x) const {
    if (kind != Kind::Interval) return 1;
    if (weight_exponent == 0 || !weight_fn) return 1;
    const double w = (*weight_fn)(x);
    return std::pow(std::max(w, 0.0), weight_exponent);
  }

  double distance(double x, double y) const {
    switch (kind) {
      case Kind::Interval:
        if (x < 0 || x > length || y < 0 || y > length) fail(ErrorCode::OutOfRange, "point outside interval fiber");
        return std::abs(x - y);
      case Kind::Circle: {
        if (!std::isfinite(x) || !std::isfinite(y)) fail(ErrorCode::OutOfRange, "point outside circle fiber");
        double d = std::fmod(std::abs(x - y), circumference);
        return std::min(d, circumference - d);
      }
      case Kind::Finite: {
        const auto n = static_cast<double>(dist.rows());
        if (x < 0 || y < 0 || x >= n || y >= n || x != std::floor(x) || y != std::floor(y))
          fail(ErrorCode::OutOfRange, "finite fiber points are indices");
        return dist(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
      }
    }
    return 0;
  }

  double diameter() const {
    switch (kind) {
      case Kind::Interval: return length;
      case Kind::Circle: return circumference / 2;
      case Kind::Finite: return dist.maxCoeff();
    }
    return 0;
  }

  /// Point at arclength s from x along the minimizing fiber geodesic towards y.
  double geodesic_point(double x, double y, double s) const {
    switch (kind) {
      case Kind::Interval: return x + (y > x ? s : -s);
      case Kind::Circle: {
        double d = std::fmod(y - x, circumference);
        if (d < 0) d += circumference;
        const double dir = d <= circumference / 2 ? 1.0 : -1.0;
        double p = std::fmod(x + dir * s, circumference);
        return p < 0 ? p + circumference : p;
      }
      case Kind::Finite: fail(ErrorCode::NotApplicable, "finite fibers have no interior geodesic points");
    }
    return x;
  }

  bool is_geodesic_space() const { return kind != Kind::Finite; }

  std::string describe() const {
    switch (kind) {
      case Kind::Interval: return "interval(" + std::to_string(length) + ", " + weight_name + "^" + std::to_string(weight_exponent) + ")";
      case Kind::Circle: return "circle(" + std::to_string(circumference) + ")";
      case Kind::Finite: return "finite(" + std::to_string(dist.rows()) + ")";
    }
    return "";
  }
};

struct FiberSpectrum {
  std::vector<double> eigenvalues;
  Eigen::MatrixXd eigenvectors;  // columns on the grid, m_F-orthonormal
  std::vector<double> grid;
  std::vector<double> mass;
  bool approximate = false;  // graph Laplacian stand-in for finite fibers
};

/// Cell-centered divergence-form discretization of the weighted Laplacian.
inline GraphForm fiber_form(const FiberSpace& F, int grid_n, std::vector<double>* grid = nullptr) {
  GraphForm g;
  std::vector<double> x;
  switch (F.kind) {
    case FiberSpace::Kind::Interval: {
      if (grid_n < 16) fail(ErrorCode::GridTooCoarse, "fiber grid needs at least 16 points");
      const double h = F.length / grid_n;
      for (int i = 0; i < grid_n; ++i) {
        x.push_back((i + 0.5) * h);
        g.mass.push_back(F.weight(x.back()) * h);
      }
      // no-flux faces at 0 and L
      for (int i = 0; i + 1 < grid_n; ++i) g.edges.push_back({i, i + 1, F.weight((i + 1) * h) / h});
      break;
    }
    case FiberSpace::Kind::Circle: {
      if (grid_n < 16) fail(ErrorCode::GridTooCoarse, "fiber grid needs at least 16 points");
      const double h = F.circumference / grid_n;
      for (int i = 0; i < grid_n; ++i) {
        x.push_back(i * h);
        g.mass.push_back(h);
        g.edges.push_back({i, (i + 1) % grid_n, 1.0 / h});
      }
      g.path = false;
      break;
    }
    case FiberSpace::Kind::Finite: {
      const int n = static_cast<int>(F.dist.rows());
      for (int i = 0; i < n; ++i) {
        x.push_back(i);
        g.mass.push_back(F.weights[static_cast<std::size_t>(i)]);
        for (int j = i + 1; j < n; ++j) {
          const double d = F.dist(i, j);
          g.edges.push_back({i, j, F.weights[static_cast<std::size_t>(i)] * F.weights[static_cast<std::size_t>(j)] / (d * d)});
        }
      }
      g.path = n <= 2;
      break;
    }
  }
  g.q.assign(g.mass.size(), 0.0);
  if (grid) *grid = x;
  return g;
}

inline FiberSpectrum fiber_spectrum(const FiberSpace& F, int grid_n, int k = -1) {
  std::vector<double> x;
  const GraphForm g = fiber_form(F, grid_n, &x);
  const int n = g.size();
  if (k < 0 || k > n) k = std::min(n, 32);
  auto ep = smallest_eigenpairs(g, k);
  FiberSpectrum s;
  s.eigenvalues = ep.values;
  s.eigenvectors = ep.vectors;
  s.grid = x;
  s.mass = g.mass;
  s.approximate = F.kind == FiberSpace::Kind::Finite;
  return s;
}

/// lambda_1 - K_F N; nonnegative under RCD(K_F(N-1), N) with K_F > 0.
inline double lichnerowicz_check(const FiberSpectrum& spec, double K_F, double N) {
  if (!(K_F > 0)) fail(ErrorCode::NotApplicable, "Lichnerowicz bound needs K_F > 0");
  if (spec.eigenvalues.size() < 2) fail(ErrorCode::PreconditionFailed, "spectrum has no first nonzero eigenvalue");
  return spec.eigenvalues[1] - K_F * N;
}

inline double lichnerowicz_check(const FiberSpace& F, const FiberSpectrum& spec, double K_F, double N) {
  if (!F.rcd_attestation) fail(ErrorCode::PreconditionFailed, "fiber has no RCD attestation");
  const auto& a = *F.rcd_attestation;
  if (a.N > N + 1e-12 || a.K < K_F * (N - 1) - 1e-12)
    fail(ErrorCode::PreconditionFailed, "attestation weaker than RCD(K_F(N-1), N)");
  return lichnerowicz_check(spec, K_F, N);
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_cells(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::PreconditionFailed, "cannot read " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) {
      const auto b = c.find_first_not_of(" \t");
      const auto e = c.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? "" : c.substr(b, e - b + 1));
    }
    rows.push_back(cells);
  }
  return rows;
}

inline bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    v = std::stod(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

}  // namespace detail

/// Distance matrix CSV (optional header row and label column) plus a weight
/// file with one weight per row (optionally "label,weight").
inline FiberSpace load_finite_fiber(const std::string& distance_csv, const std::string& weight_csv) {
  auto rows = detail::read_csv_cells(distance_csv);
  double tmp;
  bool labeled = !rows.empty() && !rows[0].empty() && !detail::parse_number(rows[0][0], tmp);
  if (labeled) rows.erase(rows.begin());
  const std::size_t n = rows.size();
  Eigen::MatrixXd D(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = labeled ? 1 : 0;
    if (rows[i].size() != n + off) fail(ErrorCode::PreconditionFailed, "distance matrix row " + std::to_string(i) + " has wrong length");
    for (std::size_t j = 0; j < n; ++j)
      if (!detail::parse_number(rows[i][j + off], D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))))
        fail(ErrorCode::PreconditionFailed, "non-numeric distance entry");
  }
  auto wrows = detail::read_csv_cells(weight_csv);
  std::vector<double> w;
  for (std::size_t i = 0; i < wrows.size(); ++i) {
    double v;
    if (!detail::parse_number(wrows[i].back(), v)) {
      if (i == 0) continue;  // header
      fail(ErrorCode::PreconditionFailed, "non-numeric weight entry");
    }
    w.push_back(v);
  }
  return FiberSpace::finite(std::move(D), std::move(w));
}

}  // namespace warpcheck
