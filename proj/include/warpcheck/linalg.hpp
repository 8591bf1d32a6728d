#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#if WARPCHECK_HAVE_LAPACKE
#include <lapacke.h>
#endif

#include "warpcheck/errors.hpp"

namespace warpcheck {

/// Symmetric nonnegative form  E(u) = sum_edges c (u_i - u_j)^2 + sum_i q_i u_i^2
/// against the lumped mass  |u|^2 = sum_i m_i u_i^2.  Both the fiber
/// Laplacians and the base operators are stored this way.
struct GraphForm {
  struct Edge {
    int i, j;
    double c;
  };
  std::vector<double> mass;
  std::vector<double> q;
  std::vector<Edge> edges;
  bool path = true;  // edges are exactly (i, i+1): tridiagonal

  int size() const { return static_cast<int>(mass.size()); }

  double energy(const Eigen::VectorXd& u) const {
    double e = 0;
    for (const auto& ed : edges) {
      const double d = u[ed.i] - u[ed.j];
      e += ed.c * d * d;
    }
    for (int i = 0; i < size(); ++i) e += q[static_cast<std::size_t>(i)] * u[i] * u[i];
    return e;
  }
  double norm2(const Eigen::VectorXd& u) const {
    double s = 0;
    for (int i = 0; i < size(); ++i) s += mass[static_cast<std::size_t>(i)] * u[i] * u[i];
    return s;
  }
  double inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    double s = 0;
    for (int i = 0; i < size(); ++i) s += mass[static_cast<std::size_t>(i)] * u[i] * v[i];
    return s;
  }
  /// Stiffness A with u^T A u = E(u).
  Eigen::MatrixXd stiffness() const {
    const int n = size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : edges) {
      A(e.i, e.i) += e.c;
      A(e.j, e.j) += e.c;
      A(e.i, e.j) -= e.c;
      A(e.j, e.i) -= e.c;
    }
    for (int i = 0; i < n; ++i) A(i, i) += q[static_cast<std::size_t>(i)];
    return A;
  }
  /// L u = -M^{-1} A u, the discrete generator.
  Eigen::VectorXd apply_generator(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
    for (const auto& e : edges) {
      const double flux = e.c * (u[e.j] - u[e.i]);
      out[e.i] += flux;
      out[e.j] -= flux;
    }
    for (int i = 0; i < size(); ++i) {
      out[i] -= q[static_cast<std::size_t>(i)] * u[i];
      out[i] /= mass[static_cast<std::size_t>(i)];
    }
    return out;
  }
};

/// Smallest k eigenpairs of the generalized problem A u = lambda M u.
/// Eigenvectors are M-orthonormal; eigenvalues are the Rayleigh quotients
/// E(u)/|u|^2 of the computed vectors, which keeps a zero eigenvalue at
/// rounding level instead of eps * |A|.
struct EigenPairs {
  std::vector<double> values;
  Eigen::MatrixXd vectors;  // columns
};

inline EigenPairs smallest_eigenpairs(const GraphForm& g, int k) {
  const int n = g.size();
  if (k < 1 || k > n) fail(ErrorCode::PreconditionFailed, "requested eigenpair count out of range");
  Eigen::VectorXd isq(n);
  for (int i = 0; i < n; ++i) isq[i] = 1.0 / std::sqrt(g.mass[static_cast<std::size_t>(i)]);
  // infinity norm of M^{-1/2} A M^{-1/2}; absolute eigenvalue error is about eps times this
  double scale = 0;
  {
    std::vector<double> row(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) row[static_cast<std::size_t>(i)] = std::abs(g.q[static_cast<std::size_t>(i)]) * isq[i] * isq[i];
    for (const auto& ed : g.edges) {
      const double c = std::abs(ed.c);
      row[static_cast<std::size_t>(ed.i)] += c * isq[ed.i] * (isq[ed.i] + isq[ed.j]);
      row[static_cast<std::size_t>(ed.j)] += c * isq[ed.j] * (isq[ed.i] + isq[ed.j]);
    }
    for (double r : row) scale = std::max(scale, r);
  }
  Eigen::MatrixXd V;
  std::vector<double> w(static_cast<std::size_t>(n));
  if (g.path) {
    std::vector<double> d(static_cast<std::size_t>(n), 0.0), e(static_cast<std::size_t>(std::max(n - 1, 1)), 0.0);
    for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = g.q[static_cast<std::size_t>(i)];
    for (const auto& ed : g.edges) {
      d[static_cast<std::size_t>(ed.i)] += ed.c;
      d[static_cast<std::size_t>(ed.j)] += ed.c;
      e[static_cast<std::size_t>(std::min(ed.i, ed.j))] -= ed.c;
    }
    for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] *= isq[i] * isq[i];
    for (int i = 0; i + 1 < n; ++i) e[static_cast<std::size_t>(i)] *= isq[i] * isq[i + 1];
#if WARPCHECK_HAVE_LAPACKE
    V.resize(n, k);
    std::vector<lapack_int> support(static_cast<std::size_t>(2 * k));
    lapack_int m = 0;
    const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', n, d.data(), e.data(), 0.0, 0.0, 1, k, 0.0, &m,
                                           w.data(), V.data(), n, support.data());
    if (info != 0 || m != k) fail(ErrorCode::ConvergenceFailure, "tridiagonal eigensolver failed");
#else
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    Eigen::VectorXd dd = Eigen::Map<Eigen::VectorXd>(d.data(), n);
    Eigen::VectorXd ee = Eigen::Map<Eigen::VectorXd>(e.data(), n - 1);
    es.computeFromTridiagonal(dd, ee, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) fail(ErrorCode::ConvergenceFailure, "tridiagonal eigensolver failed");
    V = es.eigenvectors().leftCols(k);
    for (int j = 0; j < n; ++j) w[static_cast<std::size_t>(j)] = es.eigenvalues()[j];
#endif
  } else {
    Eigen::MatrixXd S = g.stiffness();
    S = isq.asDiagonal() * S * isq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) fail(ErrorCode::ConvergenceFailure, "dense eigensolver failed");
    V = es.eigenvectors().leftCols(k);
    for (int j = 0; j < n; ++j) w[static_cast<std::size_t>(j)] = es.eigenvalues()[j];
  }
  EigenPairs out;
  out.vectors = isq.asDiagonal() * V;
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd u = out.vectors.col(j);
    const double nrm = std::sqrt(g.norm2(u));
    u /= nrm;
    // fix the sign so the first sizeable entry is positive
    const double mx = u.cwiseAbs().maxCoeff();
    int p = 0;
    while (p + 1 < n && std::abs(u[p]) <= 1e-3 * mx) ++p;
    if (u[p] < 0) u = -u;
    out.vectors.col(j) = u;
    out.values.push_back(g.energy(u));
    // badly graded masses can wreck the vectors while the values look fine
    const double wj = w[static_cast<std::size_t>(j)];
    if (!(std::abs(out.values.back() - wj) <= 1e-6 * std::max(1.0, std::abs(wj))))
      fail(ErrorCode::ConvergenceFailure, "eigenvector " + std::to_string(j) + " inconsistent with its eigenvalue");
    if (!(64 * std::numeric_limits<double>::epsilon() * scale <= 1e-7 * std::max(1.0, std::abs(out.values.back()))))
      fail(ErrorCode::ConvergenceFailure, "operator too badly graded to resolve eigenvalue " + std::to_string(j));
  }
  return out;
}

}  // namespace warpcheck
