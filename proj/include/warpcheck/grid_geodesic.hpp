#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "warpcheck/base_space.hpp"
#include "warpcheck/errors.hpp"
#include "warpcheck/warp_function.hpp"

namespace warpcheck {

/// Shortest path in the strip [r_lo, r_hi] x [0, L] with metric dr^2 + f(r)^2 dy^2,
/// computed without shooting: 16-neighbor Dijkstra on an n x n node grid, then
/// the polyline is relaxed to a stationary point of the discrete energy with
/// Newton steps (banded Hessian, sparse LDLT). The relaxed length has an O(h^2)
/// error, the raw Dijkstra length an O(1) metrication error.
struct GridGeodesic {
  double dijkstra_length = 0;
  double length = 0;
  std::vector<double> r, y;  // relaxed polyline
  int newton_iterations = 0;
  bool relaxed = false;
};

namespace detail {

struct WarpEval {
  const WarpFunction* f;
  const BaseSpace* B;
  double operator()(double r) const { return (*f)(B->canonical(r)); }
  double d1(double r) const {
    if (f->has_d1()) return f->d1(B->canonical(r));
    const double h = 1e-6;
    return ((*this)(r + h) - (*this)(r - h)) / (2 * h);
  }
  double d2(double r) const {
    if (f->has_d2()) return f->d2(B->canonical(r));
    const double h = 1e-4;
    return ((*this)(r + h) - 2 * (*this)(r) + (*this)(r - h)) / (h * h);
  }
};

inline std::vector<std::pair<double, double>> dijkstra_strip(const WarpEval& f, double r_lo, double r_hi, double L,
                                                             double r0, double r1, int n, double& length) {
  const int nr = n, ny = n;
  const double hr = (r_hi - r_lo) / (nr - 1), hy = L / (ny - 1);
  std::vector<double> fh(static_cast<std::size_t>(2 * nr - 1));
  for (std::size_t k = 0; k < fh.size(); ++k) fh[k] = std::max(0.0, f(r_lo + 0.5 * static_cast<double>(k) * hr));
  auto node = [&](int i, int j) { return static_cast<std::size_t>(i) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(j); };
  const int i0 = std::clamp(static_cast<int>(std::lround((r0 - r_lo) / hr)), 0, nr - 1);
  const int i1 = std::clamp(static_cast<int>(std::lround((r1 - r_lo) / hr)), 0, nr - 1);
  static const int stencil[16][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1},
                                     {1, 2}, {1, -2}, {-1, 2}, {-1, -2}, {2, 1}, {2, -1}, {-2, 1}, {-2, -1}};
  const std::size_t total = static_cast<std::size_t>(nr) * static_cast<std::size_t>(ny);
  std::vector<double> dist(total, std::numeric_limits<double>::infinity());
  std::vector<int> prev(total, -1);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const std::size_t src = node(i0, 0), dst = node(i1, ny - 1);
  dist[src] = 0;
  pq.push({0, src});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    if (u == dst) break;
    const int i = static_cast<int>(u / static_cast<std::size_t>(ny)), j = static_cast<int>(u % static_cast<std::size_t>(ny));
    for (const auto& s : stencil) {
      const int a = i + s[0], b = j + s[1];
      if (a < 0 || a >= nr || b < 0 || b >= ny) continue;
      const double fm = fh[static_cast<std::size_t>(i + a)];  // f at the segment midpoint
      const double dr = s[0] * hr, dy = s[1] * hy;
      const double nd = d + std::sqrt(dr * dr + fm * fm * dy * dy);
      const std::size_t v = node(a, b);
      if (nd < dist[v]) {
        dist[v] = nd;
        prev[v] = static_cast<int>(u);
        pq.push({nd, v});
      }
    }
  }
  length = dist[dst];
  std::vector<std::pair<double, double>> path;
  for (long v = static_cast<long>(dst); v >= 0; v = prev[static_cast<std::size_t>(v)]) {
    const std::size_t uv = static_cast<std::size_t>(v);
    path.push_back({r_lo + static_cast<double>(uv / static_cast<std::size_t>(ny)) * hr,
                    static_cast<double>(uv % static_cast<std::size_t>(ny)) * hy});
  }
  std::reverse(path.begin(), path.end());
  path.front() = {r0, 0};
  path.back() = {r1, L};
  return path;
}

}  // namespace detail

inline double polyline_length(const WarpFunction& f, const BaseSpace& B, const std::vector<double>& r,
                              const std::vector<double>& y) {
  const detail::WarpEval F{&f, &B};
  double len = 0;
  for (std::size_t k = 0; k + 1 < r.size(); ++k) {
    const double a = r[k + 1] - r[k], b = y[k + 1] - y[k], fm = F(0.5 * (r[k] + r[k + 1]));
    len += std::sqrt(a * a + fm * fm * b * b);
  }
  return len;
}

inline GridGeodesic grid_geodesic(const WarpFunction& f, const BaseSpace& B, double r_lo, double r_hi, double L,
                                  double r0, double r1, int n_grid = 2049, int n_relax = 2049) {
  if (n_grid < 8 || n_relax < 3) fail(ErrorCode::GridTooCoarse, "grid geodesic needs at least 8 grid and 3 path nodes");
  if (!(L > 0)) fail(ErrorCode::PreconditionFailed, "grid geodesic needs L > 0");
  const detail::WarpEval F{&f, &B};
  GridGeodesic out;
  const auto path = detail::dijkstra_strip(F, r_lo, r_hi, L, r0, r1, n_grid, out.dijkstra_length);

  // resample at equal warped arclength
  std::vector<double> cum{0};
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const double a = path[k + 1].first - path[k].first, b = path[k + 1].second - path[k].second;
    const double fm = F(0.5 * (path[k].first + path[k + 1].first));
    cum.push_back(cum.back() + std::sqrt(a * a + fm * fm * b * b) + 1e-300);
  }
  const int M = n_relax - 1;
  Eigen::VectorXd r(n_relax), y(n_relax);
  std::size_t seg = 0;
  for (int k = 0; k <= M; ++k) {
    const double s = cum.back() * k / M;
    while (seg + 2 < cum.size() && cum[seg + 1] < s) ++seg;
    const double w = std::clamp((s - cum[seg]) / (cum[seg + 1] - cum[seg]), 0.0, 1.0);
    r[k] = path[seg].first + w * (path[seg + 1].first - path[seg].first);
    y[k] = path[seg].second + w * (path[seg + 1].second - path[seg].second);
  }
  r[0] = r0;
  y[0] = 0;
  r[M] = r1;
  y[M] = L;

  // variables: interior nodes, interleaved (r_k, y_k)
  const int nv = 2 * (M - 1);
  auto var = [](int k, int c) { return 2 * (k - 1) + c; };
  auto energy = [&](const Eigen::VectorXd& R, const Eigen::VectorXd& Y) {
    double e = 0;
    for (int k = 0; k < M; ++k) {
      const double a = R[k + 1] - R[k], b = Y[k + 1] - Y[k], fm = F(0.5 * (R[k] + R[k + 1]));
      e += a * a + fm * fm * b * b;
    }
    return e * M;
  };
  double mu = 1e-8;
  double E = energy(r, y);
  bool done = false;
  for (int it = 0; it < 200 && nv > 0 && !done; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nv);
    std::vector<Eigen::Triplet<double>> T;
    T.reserve(static_cast<std::size_t>(16 * M + nv));
    for (int k = 0; k < M; ++k) {
      const double a = r[k + 1] - r[k], b = y[k + 1] - y[k];
      const double m = 0.5 * (r[k] + r[k + 1]);
      const double fv = F(m), f1 = F.d1(m), f2 = F.d2(m);
      const double phi = fv * fv, dphi = 2 * fv * f1, ddphi = 2 * (f1 * f1 + fv * f2);
      // local gradient and Hessian in (r_k, y_k, r_k+1, y_k+1)
      const double lg[4] = {-2 * a + 0.5 * dphi * b * b, -2 * phi * b, 2 * a + 0.5 * dphi * b * b, 2 * phi * b};
      const double crr = 0.25 * ddphi * b * b;
      const double lh[4][4] = {{2 + crr, -dphi * b, -2 + crr, dphi * b},
                               {-dphi * b, 2 * phi, -dphi * b, -2 * phi},
                               {-2 + crr, -dphi * b, 2 + crr, dphi * b},
                               {dphi * b, -2 * phi, dphi * b, 2 * phi}};
      int idx[4] = {-1, -1, -1, -1};
      if (k >= 1) idx[0] = var(k, 0), idx[1] = var(k, 1);
      if (k + 1 <= M - 1) idx[2] = var(k + 1, 0), idx[3] = var(k + 1, 1);
      for (int p = 0; p < 4; ++p) {
        if (idx[p] < 0) continue;
        g[idx[p]] += M * lg[p];
        for (int q = 0; q < 4; ++q)
          if (idx[q] >= 0) T.emplace_back(idx[p], idx[q], M * lh[p][q]);
      }
    }
    Eigen::SparseMatrix<double> H(nv, nv);
    H.setFromTriplets(T.begin(), T.end());
    bool accepted = false;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::SparseMatrix<double> Hd = H;
      for (int i = 0; i < nv; ++i) Hd.coeffRef(i, i) += mu * M;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Hd);
      if (ldlt.info() != Eigen::Success) {
        mu *= 10;
        continue;
      }
      const Eigen::VectorXd step = ldlt.solve(-g);
      Eigen::VectorXd r2 = r, y2 = y;
      for (int k = 1; k < M; ++k) {
        r2[k] += step[var(k, 0)];
        y2[k] += step[var(k, 1)];
      }
      const double E2 = energy(r2, y2);
      if (E2 <= E + 1e-15 * std::abs(E)) {
        const double smax = step.cwiseAbs().maxCoeff();
        r = r2;
        y = y2;
        E = E2;
        mu = std::max(mu / 10, 1e-14);
        accepted = true;
        out.newton_iterations = it + 1;
        if (smax < 1e-13 * (1 + std::abs(r_hi - r_lo) + L)) {
          out.relaxed = true;
          done = true;
        }
        break;
      }
      mu *= 10;
    }
    if (!accepted) {
      out.relaxed = g.cwiseAbs().maxCoeff() < 1e-8;
      break;
    }
  }
  out.r.assign(r.data(), r.data() + r.size());
  out.y.assign(y.data(), y.data() + y.size());
  out.length = polyline_length(f, B, out.r, out.y);
  return out;
}

}  // namespace warpcheck
