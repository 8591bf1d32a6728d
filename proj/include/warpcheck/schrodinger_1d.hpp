#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "warpcheck/base_space.hpp"
#include "warpcheck/errors.hpp"
#include "warpcheck/linalg.hpp"
#include "warpcheck/warp_function.hpp"

namespace warpcheck {

enum class FarEnd { Dirichlet, Neumann };

struct Truncation {
  double R = 8;  // window radius for unbounded bases
  FarEnd far_end = FarEnd::Dirichlet;
};

/// End condition of a discretized operator at one side of the grid.
enum class EndKind { Periodic, Degenerate, Neumann, Dirichlet };

/// Discretized -L^{B,N,lambda} on cell centers of a uniform partition.
/// The form is  sum_faces f(face)^N (u_{i+1}-u_i)^2 / h + lambda sum_i f_i^{N-2} h u_i^2
/// against the mass f_i^N h, so the matrix is symmetric in the m_B^N inner product.
struct SpectralOperator {
  BaseSpace B;
  WarpFunction f;
  double N = 1;
  double lambda = 0;
  double lo = 0, hi = 0, h = 0;
  std::vector<double> grid;  // cell centers
  std::vector<double> fval;  // f at cell centers
  EndKind left = EndKind::Neumann, right = EndKind::Neumann;
  std::optional<Truncation> truncation;
  GraphForm form;

  int size() const { return form.size(); }

  /// L u on the grid (the nonpositive operator).
  Eigen::VectorXd apply(const Eigen::VectorXd& u) const { return form.apply_generator(u); }

  /// Dense matrix of L; symmetric after conjugation by the mass.
  Eigen::MatrixXd matrix() const {
    Eigen::VectorXd im(size());
    for (int i = 0; i < size(); ++i) im[i] = 1.0 / form.mass[static_cast<std::size_t>(i)];
    return -(im.asDiagonal() * form.stiffness());
  }

  double inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const { return form.inner(u, v); }
  double integral(const Eigen::VectorXd& u) const {
    double s = 0;
    for (int i = 0; i < size(); ++i) s += form.mass[static_cast<std::size_t>(i)] * u[i];
    return s;
  }
};

namespace detail {

inline EndKind end_kind(const WarpFunction& f, double x, bool finite_end, FarEnd far) {
  if (!finite_end) return far == FarEnd::Dirichlet ? EndKind::Dirichlet : EndKind::Neumann;
  return f(x) <= 0 ? EndKind::Degenerate : EndKind::Neumann;
}

}  // namespace detail

inline SpectralOperator assemble(const BaseSpace& B, const WarpFunction& f, double N, double lambda, int grid_n,
                                 Truncation trunc = {}) {
  if (!(lambda >= 0)) fail(ErrorCode::PreconditionFailed, "lambda must be >= 0");
  if (!(N >= 1)) fail(ErrorCode::PreconditionFailed, "N must be >= 1");
  if (grid_n < 3) fail(ErrorCode::GridTooCoarse, "operator grid needs at least 3 cells");
  SpectralOperator op{B, f, N, lambda};
  const auto [lo, hi] = B.window(trunc.R);
  if (!f.covers(lo, hi)) fail(ErrorCode::DomainMismatch, "warp does not cover the base window");
  op.lo = lo;
  op.hi = hi;
  op.h = (hi - lo) / grid_n;
  if (!B.is_bounded()) op.truncation = trunc;
  const double h = op.h;
  const bool circle = B.kind == BaseSpace::Kind::Circle;
  if (circle) {
    op.left = op.right = EndKind::Periodic;
  } else {
    op.left = detail::end_kind(f, lo, B.kind != BaseSpace::Kind::Line, trunc.far_end);
    op.right = detail::end_kind(f, hi, B.kind == BaseSpace::Kind::Interval, trunc.far_end);
  }

  auto& g = op.form;
  for (int i = 0; i < grid_n; ++i) {
    const double x = lo + (i + 0.5) * h;
    const double fx = f(x);
    if (!(fx > 0)) fail(ErrorCode::SingularWeight, "f vanishes at interior point r=" + std::to_string(x));
    op.grid.push_back(x);
    op.fval.push_back(fx);
    const double m = std::pow(fx, N) * h;
    g.mass.push_back(m);
    g.q.push_back(lambda * m / (fx * fx));
  }
  const int faces = circle ? grid_n : grid_n - 1;
  for (int i = 0; i < faces; ++i) {
    const double x = lo + (i + 1) * h;
    const double fx = f(x);
    if (!(fx > 0)) fail(ErrorCode::SingularWeight, "f vanishes at interior point r=" + std::to_string(x));
    g.edges.push_back({i, (i + 1) % grid_n, std::pow(fx, N) / h});
  }
  g.path = !circle;
  // Dirichlet ends: the boundary value 0 sits half a cell away
  if (op.left == EndKind::Dirichlet) g.q.front() += 2 * std::pow(f(lo), N) / h;
  if (op.right == EndKind::Dirichlet) g.q.back() += 2 * std::pow(f(hi), N) / h;
  return op;
}

/// Sampled potential V of the unitarily equivalent operator -d^2/dr^2 + V.
struct SchrodingerForm {
  std::vector<double> grid;
  std::vector<double> V;
  double h = 0;
  EndKind left = EndKind::Neumann, right = EndKind::Neumann;
  double robin_left = 0, robin_right = 0;  // psi' = beta psi at Neumann ends
  GraphForm form;
};

inline double schrodinger_potential(const WarpFunction& f, double N, double lambda, double r) {
  const double fv = f(r), d1 = f.d1(r), d2 = f.d2(r);
  return ((N * N - 2 * N) / 4 * d1 * d1 + N / 2 * fv * d2 + lambda) / (fv * fv);
}

inline SchrodingerForm schrodinger_transform(const SpectralOperator& op) {
  if (!op.f.has_d1() || !op.f.has_d2())
    fail(ErrorCode::NeedsSmoothness, "potential needs two derivatives of f; mollify sampled warps first");
  SchrodingerForm s;
  s.grid = op.grid;
  s.h = op.h;
  s.left = op.left;
  s.right = op.right;
  const int n = op.size();
  const double h = op.h;
  auto& g = s.form;
  for (int i = 0; i < n; ++i) {
    s.V.push_back(schrodinger_potential(op.f, op.N, op.lambda, op.grid[static_cast<std::size_t>(i)]));
    g.mass.push_back(h);
    g.q.push_back(s.V.back() * h);
  }
  const bool periodic = op.left == EndKind::Periodic;
  for (int i = 0; i < (periodic ? n : n - 1); ++i) g.edges.push_back({i, (i + 1) % n, 1 / h});
  g.path = !periodic;
  // psi = f^{N/2} u: Neumann for u becomes psi' = (N/2)(f'/f) psi, a degenerate end becomes psi = 0
  auto end_term = [&](EndKind k, double x, double sign, double& beta) -> double {
    switch (k) {
      case EndKind::Degenerate:
      case EndKind::Dirichlet: return 2 / h;
      case EndKind::Neumann: {
        beta = op.N / 2 * op.f.d1(x) / op.f(x);
        // boundary value psi(x) = psi_end / (1 + sign h beta / 2); flux through the face is beta psi(x)
        return sign * beta / (1 + sign * h * beta / 2);
      }
      case EndKind::Periodic: return 0;
    }
    return 0;
  };
  if (!periodic) {
    g.q.front() += end_term(op.left, op.lo, 1, s.robin_left);
    g.q.back() += end_term(op.right, op.hi, -1, s.robin_right);
  }
  return s;
}

/// True iff V(r) > 3/(4 dist(r, end)^2) on the 10 cells next to the endpoint.
inline bool limit_point_check(const SchrodingerForm& form, double endpoint) {
  const int n = static_cast<int>(form.grid.size());
  const bool at_left = std::abs(endpoint - (form.grid.front() - form.h / 2)) <
                       std::abs(endpoint - (form.grid.back() + form.h / 2));
  for (int k = 0; k < std::min(10, n); ++k) {
    const int i = at_left ? k : n - 1 - k;
    const double d = std::abs(form.grid[static_cast<std::size_t>(i)] - endpoint);
    if (!(form.V[static_cast<std::size_t>(i)] > 0.75 / (d * d))) return false;
  }
  return true;
}

/// k smallest eigenpairs of -L, m_B^N-orthonormal.
inline EigenPairs spectrum(const SpectralOperator& op, int k) {
  if (k < 1 || k > op.size() - 2) fail(ErrorCode::PreconditionFailed, "k must be in [1, grid_n - 2]");
  return smallest_eigenpairs(op.form, k);
}

inline EigenPairs spectrum(const SchrodingerForm& s, int k) { return smallest_eigenpairs(s.form, k); }

/// Richardson-extrapolated k smallest eigenvalues from grids h and h/2, of -L or
/// (conjugate = true) of its Schrodinger form.
inline std::vector<double> extrapolated_spectrum(const SpectralOperator& op, int k, bool conjugate = false) {
  const auto fine = assemble(op.B, op.f, op.N, op.lambda, 2 * op.size(), op.truncation.value_or(Truncation{}));
  auto values = [&](const SpectralOperator& o) {
    return conjugate ? spectrum(schrodinger_transform(o), k).values : spectrum(o, k).values;
  };
  const auto a = values(op), b = values(fine);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = b[i] + (b[i] - a[i]) / 3;
  return out;
}

/// Mass of the ground state outside half the truncation radius.
inline double truncation_tail_mass(const SpectralOperator& op) {
  if (!op.truncation) return 0;
  const auto ep = smallest_eigenpairs(op.form, 1);
  const double R2 = op.truncation->R / 2;
  const double c = op.B.kind == BaseSpace::Kind::HalfLine ? op.B.origin : 0.0;
  double tail = 0;
  for (int i = 0; i < op.size(); ++i)
    if (std::abs(op.grid[static_cast<std::size_t>(i)] - c) > R2)
      tail += op.form.mass[static_cast<std::size_t>(i)] * ep.vectors(i, 0) * ep.vectors(i, 0);
  return tail;
}

struct TruncationChoice {
  double R = 0;
  double tail = 1;
  bool met = false;  // tail below the target
};

/// Smallest R in steps of 2 whose ground state has tail mass below `target`
/// outside R/2; stops at R_max or when the solver can no longer resolve it.
inline TruncationChoice choose_truncation(const BaseSpace& B, const WarpFunction& f, double N, double lambda, int grid_n,
                                          FarEnd far = FarEnd::Dirichlet, double target = 1e-10, double R_max = 32) {
  TruncationChoice best;
  if (B.is_bounded()) return {0, 0, true};
  for (double R = 2; R <= R_max; R += 2) {
    double tail;
    try {
      tail = truncation_tail_mass(assemble(B, f, N, lambda, grid_n, {R, far}));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConvergenceFailure) break;
      throw;
    }
    best = {R, tail, tail < target};
    if (best.met) break;
  }
  return best;
}

/// Spectral heat flow over all grid modes.
inline Eigen::VectorXd heat_apply(const SpectralOperator& op, double t, const Eigen::VectorXd& u0) {
  if (!(t > 0)) fail(ErrorCode::PreconditionFailed, "heat time must be > 0");
  if (u0.size() != op.size()) fail(ErrorCode::DomainMismatch, "initial datum is not on the operator grid");
  const auto ep = smallest_eigenpairs(op.form, op.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(op.size());
  for (int k = 0; k < op.size(); ++k) {
    const Eigen::VectorXd e = ep.vectors.col(k);
    out += std::exp(-ep.values[static_cast<std::size_t>(k)] * t) * op.inner(u0, e) * e;
  }
  return out;
}

/// j-th eigenvalue of the warped Laplacian in the sector u1 (x) u2 with L^F u2 = -fiber_lambda u2.
inline double product_eigenvalue(const BaseSpace& B, const WarpFunction& f, double N, double fiber_lambda, int j,
                                 int grid_n, Truncation trunc = {}) {
  const auto op = assemble(B, f, N, fiber_lambda, grid_n, trunc);
  return spectrum(op, j + 1).values[static_cast<std::size_t>(j)];
}

inline void write_spectrum_csv(std::ostream& os, const std::vector<double>& values) {
  os << "k,lambda_k\n";
  os.precision(17);
  for (std::size_t k = 0; k < values.size(); ++k) os << k << ',' << values[k] << '\n';
}

}  // namespace warpcheck
