#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "nlheat/coefficient.hpp"
#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"
#include "nlheat/iterative.hpp"

namespace nlheat {

struct SpectralEstimates {
  double lambda_min = 0.0;
  double rho = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

/// Extreme eigenvalues of a symmetric operator by the plain Lanczos
/// recurrence. Converged when both extreme Ritz pairs have residual-based
/// error bounds below tol relative to the Ritz value.
template <class Apply>
SpectralEstimates lanczos_extremes(Apply&& apply, Eigen::Index n, double tol,
                                   std::size_t max_iter) {
  if (!(tol > 0.0)) throw InvalidArgument("spectral tolerance must be positive");
  SpectralEstimates est;
  std::vector<double> alpha, beta;
  Vector q = deterministic_random(n, 20240917);
  q.normalize();
  Vector q_prev = Vector::Zero(n);
  Vector w(n);
  double beta_prev = 0.0;
  double scale = 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;

  auto ritz = [&](bool vectors) {
    const auto m = static_cast<Eigen::Index>(alpha.size());
    Vector d = Eigen::Map<const Vector>(alpha.data(), m);
    Vector e = m > 1 ? Vector(Eigen::Map<const Vector>(beta.data(), m - 1))
                     : Vector(0);
    tri.computeFromTridiagonal(d, e,
                               vectors ? Eigen::ComputeEigenvectors
                                       : Eigen::EigenvaluesOnly);
  };

  for (std::size_t it = 1; it <= max_iter; ++it) {
    apply(q, w);
    const double a = q.dot(w);
    w.noalias() -= a * q;
    w.noalias() -= beta_prev * q_prev;
    // one local reorthogonalization pass
    const double c = q.dot(w);
    w.noalias() -= c * q;
    alpha.push_back(a + c);
    const double b = w.norm();
    scale = std::max(scale, std::abs(a) + b + beta_prev);
    const bool breakdown = b <= 1e-12 * scale;
    const auto m = static_cast<Eigen::Index>(alpha.size());

    if (breakdown || it % 5 == 0 || it == max_iter || m == n) {
      ritz(true);
      const Vector& theta = tri.eigenvalues();
      const double lo = theta[0];
      const double hi = theta[m - 1];
      const double r_lo = b * std::abs(tri.eigenvectors()(m - 1, 0));
      const double r_hi = b * std::abs(tri.eigenvectors()(m - 1, m - 1));
      auto bound = [&](double r, Eigen::Index i) {
        double gap = std::numeric_limits<double>::infinity();
        if (m > 1) gap = i == 0 ? theta[1] - theta[0] : theta[m - 1] - theta[m - 2];
        // spurious copies in plain Lanczos collapse the gap; fall back to r
        if (gap <= r) return r;
        return std::min(r, r * r / gap);
      };
      est.lambda_min = lo;
      est.rho = hi;
      est.iterations = it;
      if (breakdown || (bound(r_lo, 0) <= tol * std::abs(lo) &&
                        bound(r_hi, m - 1) <= tol * std::abs(hi)))
        return est;
    }
    beta.push_back(b);
    q_prev.swap(q);
    q = w / b;
    beta_prev = b;
  }
  throw ConvergenceError("spectral estimates did not converge", est.lambda_min);
}

}  // namespace detail

/// Matrix-free second-order centered-difference discretization A_h of
/// -div(a grad .) with homogeneous Dirichlet conditions on the interior
/// unknowns. Face coefficients are sampled at cell midpoints, which keeps the
/// stencil symmetric for variable a. Immutable after construction.
class EllipticOperator {
 public:
  EllipticOperator(const Grid& grid, Coefficient coeff, double estimate_tol = 1e-6)
      : grid_(grid), coeff_(std::move(coeff)) {
    const std::size_t n = grid_.n_dof();
    const double inv_h2 = static_cast<double>(grid_.subdivisions()) * grid_.subdivisions();
    const double two_n = 2.0 * grid_.subdivisions();
    diag_ = Vector::Zero(static_cast<Eigen::Index>(n));
    for (int a = 0; a < grid_.dim(); ++a) {
      minus_[a].resize(static_cast<Eigen::Index>(n));
      plus_[a].resize(static_cast<Eigen::Index>(n));
    }
    for (std::size_t j = 0; j < n; ++j) {
      const auto idx = grid_.multi_index(j);
      Point x{0.0, 0.0, 0.0};
      for (int a = 0; a < grid_.dim(); ++a) x[a] = idx[a] / static_cast<double>(grid_.subdivisions());
      for (int a = 0; a < grid_.dim(); ++a) {
        Point face = x;
        face[a] = (2.0 * idx[a] - 1.0) / two_n;
        const double wm = coeff_(face) * inv_h2;
        face[a] = (2.0 * idx[a] + 1.0) / two_n;
        const double wp = coeff_(face) * inv_h2;
        minus_[a][j] = wm;
        plus_[a][j] = wp;
        diag_[j] += wm + wp;
      }
    }
    estimates_ = compute_estimates(estimate_tol);
  }

  const Grid& grid() const noexcept { return grid_; }
  const Coefficient& coefficient() const noexcept { return coeff_; }
  std::size_t size() const noexcept { return grid_.n_dof(); }
  const Vector& diagonal() const noexcept { return diag_; }
  /// a(x_j - h/2 e_axis) / h^2 and a(x_j + h/2 e_axis) / h^2 per interior point.
  const Vector& minus_weights(int axis) const { return minus_.at(axis); }
  const Vector& plus_weights(int axis) const { return plus_.at(axis); }

  /// Cached smallest-eigenvalue estimate.
  double lambda_min() const noexcept { return estimates_.lambda_min; }
  /// Cached spectral-radius estimate (largest eigenvalue).
  double rho() const noexcept { return estimates_.rho; }
  const SpectralEstimates& estimates() const noexcept { return estimates_; }

  /// out = shift * in + scale * A in
  void apply_shifted(double shift, double scale, const Vector& in, Vector& out) const {
    const int m = grid_.interior();
    const int e0 = m;
    const int e1 = grid_.dim() > 1 ? m : 1;
    const int e2 = grid_.dim() > 2 ? m : 1;
    const std::ptrdiff_t s1 = e0;
    const std::ptrdiff_t s2 = static_cast<std::ptrdiff_t>(e0) * e1;
    out.resize(in.size());
    const double* u = in.data();
    double* y = out.data();
    std::ptrdiff_t j = 0;
    for (int i2 = 0; i2 < e2; ++i2) {
      for (int i1 = 0; i1 < e1; ++i1) {
        for (int i0 = 0; i0 < e0; ++i0, ++j) {
          double acc = diag_[j] * u[j];
          if (i0 > 0) acc -= minus_[0][j] * u[j - 1];
          if (i0 < e0 - 1) acc -= plus_[0][j] * u[j + 1];
          if (e1 > 1) {
            if (i1 > 0) acc -= minus_[1][j] * u[j - s1];
            if (i1 < e1 - 1) acc -= plus_[1][j] * u[j + s1];
          }
          if (e2 > 1) {
            if (i2 > 0) acc -= minus_[2][j] * u[j - s2];
            if (i2 < e2 - 1) acc -= plus_[2][j] * u[j + s2];
          }
          y[j] = shift * u[j] + scale * acc;
        }
      }
    }
  }

  void apply(const Vector& in, Vector& out) const { apply_shifted(0.0, 1.0, in, out); }

  Vector apply(const Vector& in) const {
    Vector out(in.size());
    apply(in, out);
    return out;
  }

  Field apply(const Field& f) const {
    if (!(f.grid() == grid_)) throw InvalidArgument("field and operator grids differ");
    return Field(grid_, apply(f.values()));
  }

  /// Re-runs the extreme-eigenvalue estimation at a given relative tolerance.
  SpectralEstimates compute_estimates(double tol) const {
    const auto n = static_cast<Eigen::Index>(grid_.n_dof());
    const std::size_t cap = std::min<std::size_t>(3 * grid_.n_dof() + 10, 20000);
    return detail::lanczos_extremes(
        [this](const Vector& in, Vector& out) { apply(in, out); }, n, tol, cap);
  }

 private:
  Grid grid_;
  Coefficient coeff_;
  Vector diag_;
  std::array<Vector, 3> minus_;
  std::array<Vector, 3> plus_;
  SpectralEstimates estimates_;
};

inline EllipticOperator assemble_operator(const Grid& grid, const Coefficient& coeff) {
  return EllipticOperator(grid, coeff);
}

/// (lambda_1, rho) within relative tol.
inline SpectralEstimates spectral_estimates(const EllipticOperator& op, double tol) {
  return op.compute_estimates(tol);
}

/// Solves A x = rhs with rtol on the relative residual; the iteration cap
/// defaults to 10 n_dof.
inline Field solve_spd(const EllipticOperator& op, const Field& rhs, double rtol = 1e-12,
                       std::size_t max_iter = 0) {
  if (!(rhs.grid() == op.grid())) throw InvalidArgument("rhs and operator grids differ");
  if (max_iter == 0) max_iter = 10 * op.size();
  auto res = conjugate_gradient([&op](const Vector& in, Vector& out) { op.apply(in, out); },
                                op.diagonal(), rhs.values(), rtol, max_iter);
  return Field(op.grid(), std::move(res.x));
}

/// Solves (shift I + scale A) x = rhs; used by the Crank-Nicolson step.
inline Vector solve_shifted(const EllipticOperator& op, double shift, double scale,
                            const Vector& rhs, double rtol = 1e-12,
                            std::size_t max_iter = 0) {
  if (max_iter == 0) max_iter = 10 * op.size() + 100;
  Vector diag = op.diagonal() * scale;
  diag.array() += shift;
  auto res = conjugate_gradient(
      [&](const Vector& in, Vector& out) { op.apply_shifted(shift, scale, in, out); },
      diag, rhs, rtol, max_iter);
  return std::move(res.x);
}

}  // namespace nlheat
