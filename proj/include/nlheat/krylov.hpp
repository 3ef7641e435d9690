#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "nlheat/elliptic_operator.hpp"
#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"

namespace nlheat {

/// Smallest admissible value of T * mu_1 for b(z) = (1 - e^{-z})^{-1}.
inline constexpr double kGeomGuard = 1e-8;

/// Raised by apply_geom when the reduced matrix is too close to singular.
class SingularFunctionError : public Error {
 public:
  SingularFunctionError(const std::string& what, double mu1) : Error(what), mu1_(mu1) {}
  double mu1() const noexcept { return mu1_; }

 private:
  double mu1_;
};

/// Lanczos factorization A Q = Q H + beta_k q_{k+1} e_k^T of A_h for a seed b,
/// with q_1 = b / ||b||. Q has orthonormal columns in the Euclidean inner
/// product; H is symmetric tridiagonal and is kept in eigendecomposed form.
class KrylovBasis {
 public:
  KrylovBasis(const Grid& grid, Eigen::MatrixXd q, Vector alpha, Vector beta,
              double seed_norm, double residual, bool exact, std::string seed_id)
      : grid_(grid),
        q_(std::move(q)),
        alpha_(std::move(alpha)),
        beta_(std::move(beta)),
        seed_norm_(seed_norm),
        residual_(residual),
        exact_(exact),
        seed_id_(std::move(seed_id)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(alpha_, beta_, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) {
      es.compute(H());
      if (es.info() != Eigen::Success)
        throw Error("eigendecomposition of the reduced matrix did not converge");
    }
    ritz_ = es.eigenvalues();
    ritz_vectors_ = es.eigenvectors();
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t rank() const noexcept { return static_cast<std::size_t>(q_.cols()); }
  const Eigen::MatrixXd& Q() const noexcept { return q_; }
  const Vector& diagonal() const noexcept { return alpha_; }
  const Vector& off_diagonal() const noexcept { return beta_; }
  double seed_norm() const noexcept { return seed_norm_; }
  /// beta_k, the norm of the residual direction left after k steps.
  double residual() const noexcept { return residual_; }
  /// True when the Krylov space became invariant (lucky breakdown).
  bool exact() const noexcept { return exact_; }
  const std::string& seed_id() const noexcept { return seed_id_; }

  const Vector& ritz_values() const noexcept { return ritz_; }
  double min_ritz() const noexcept { return ritz_[0]; }
  double max_ritz() const noexcept { return ritz_[ritz_.size() - 1]; }

  Eigen::MatrixXd H() const {
    const auto k = alpha_.size();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(k, k);
    h.diagonal() = alpha_;
    if (k > 1) {
      h.diagonal(1) = beta_;
      h.diagonal(-1) = beta_;
    }
    return h;
  }

  /// fn(H) y for a reduced vector y, via the eigendecomposition of H.
  template <class Fn>
  Vector reduced_function(Fn&& fn, const Vector& y) const {
    Vector c = ritz_vectors_.transpose() * y;
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] *= fn(ritz_[i]);
    return ritz_vectors_ * c;
  }

  /// ||b|| Q fn(H) e_1, the Krylov approximation of fn(A) b for the seed b.
  template <class Fn>
  Field seed_function(Fn&& fn) const {
    Vector e1 = Vector::Zero(alpha_.size());
    e1[0] = seed_norm_;
    return Field(grid_, q_ * reduced_function(fn, e1));
  }

  /// Q fn(H) Q^T w for an arbitrary operand w (shared-basis use).
  template <class Fn>
  Field projected_function(Fn&& fn, const Field& w) const {
    w.check_same(Field(grid_));
    return Field(grid_, q_ * reduced_function(fn, q_.transpose() * w.values()));
  }

  Vector project(const Field& w) const { return q_.transpose() * w.values(); }
  Field lift(const Vector& y) const { return Field(grid_, q_ * y); }

 private:
  Grid grid_;
  Eigen::MatrixXd q_;
  Vector alpha_;
  Vector beta_;
  double seed_norm_;
  double residual_;
  bool exact_;
  std::string seed_id_;
  Vector ritz_;
  Eigen::MatrixXd ritz_vectors_;
};

/// Lanczos with full (two-pass classical Gram-Schmidt) reorthogonalization.
/// Terminates early on lucky breakdown, beta_j < 1e-12 ||A||, returning a
/// basis of smaller rank flagged exact.
inline KrylovBasis lanczos(const EllipticOperator& op, const Field& seed, std::size_t k,
                           std::string seed_id = "") {
  if (!(seed.grid() == op.grid())) throw InvalidArgument("seed and operator grids differ");
  const std::size_t n = op.size();
  if (k < 1 || k > n)
    throw InvalidArgument("Krylov rank " + std::to_string(k) + " outside [1, " +
                          std::to_string(n) + "]");
  const double seed_norm = seed.values().norm();
  if (seed_norm == 0.0) throw InvalidArgument("Krylov seed vector is zero");

  const auto nn = static_cast<Eigen::Index>(n);
  const auto kk = static_cast<Eigen::Index>(k);
  const double breakdown_tol = 1e-12 * op.rho();
  Eigen::MatrixXd q(nn, kk);
  Vector alpha(kk);
  Vector beta(kk);
  q.col(0) = seed.values() / seed_norm;
  Vector w(nn);
  Eigen::Index used = kk;
  bool exact = false;
  double residual = 0.0;

  for (Eigen::Index j = 0; j < kk; ++j) {
    op.apply(q.col(j), w);
    double a = q.col(j).dot(w);
    w.noalias() -= a * q.col(j);
    if (j > 0) w.noalias() -= beta[j - 1] * q.col(j - 1);
    for (int pass = 0; pass < 2; ++pass) {
      const Vector c = q.leftCols(j + 1).transpose() * w;
      w.noalias() -= q.leftCols(j + 1) * c;
      a += c[j];
    }
    alpha[j] = a;
    const double b = w.norm();
    beta[j] = b;
    residual = b;
    if (b < breakdown_tol || j + 1 == nn) {
      used = j + 1;
      exact = true;
      break;
    }
    if (j + 1 < kk) q.col(j + 1) = w / b;
  }
  Vector off = used > 1 ? Vector(beta.head(used - 1)) : Vector(0);
  return KrylovBasis(op.grid(), q.leftCols(used), alpha.head(used), std::move(off),
                     seed_norm, residual, exact, std::move(seed_id));
}

/// Krylov approximation of e^{-tA} b for the basis seed b.
inline Field apply_expm(const KrylovBasis& basis, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("expm time must be non-negative");
  return basis.seed_function([t](double l) { return std::exp(-t * l); });
}

namespace detail {
inline void check_geom(const KrylovBasis& basis, double horizon) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  const double mu1 = basis.min_ritz();
  if (!(horizon * mu1 >= kGeomGuard))
    throw SingularFunctionError(
        "(1 - exp(-T H))^{-1} is singular: T * mu_1 = " + std::to_string(horizon * mu1),
        mu1);
}
inline double geom(double z) { return -1.0 / std::expm1(-z); }
}  // namespace detail

/// Krylov approximation of (I - e^{-TA})^{-1} b for the basis seed b.
inline Field apply_geom(const KrylovBasis& basis, double horizon) {
  detail::check_geom(basis, horizon);
  return basis.seed_function([horizon](double l) { return detail::geom(horizon * l); });
}

/// Q (I - e^{-TH})^{-1} Q^T w.
inline Field apply_geom_projected(const KrylovBasis& basis, double horizon, const Field& w) {
  detail::check_geom(basis, horizon);
  return basis.projected_function([horizon](double l) { return detail::geom(horizon * l); },
                                  w);
}

/// Inputs of the a priori Krylov error bound for e^{-B} b with spectrum of B
/// in [0, rho]. For B = T A_h, rho = T * rho(A_h).
struct BoundParams {
  double rho = 0.0;
  std::size_t k = 1;
  double lambda1 = 0.0;
  double horizon = 0.0;
};

/// Raised when k < sqrt(rho): the bound does not cover this rank.
class BoundNotApplicable : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline double bound_small_rank(double rho, double k) {
  return 10.0 * std::exp(-4.0 * k * k / (5.0 * rho));
}
inline double bound_large_rank(double rho, double k) {
  // (40/rho) e^{-rho/4} (e rho / (4k))^k, evaluated in log space
  return std::exp(std::log(40.0 / rho) - rho / 4.0 + k * (1.0 + std::log(rho / (4.0 * k))));
}
}  // namespace detail

/// Relative error bound ||e^{-B}b - Q e^{-H} Q^T b|| / ||b||.
///   10 e^{-4k^2/(5 rho)}                       for sqrt(rho) <= k <= rho/2
///   (40/rho) e^{-rho/4} (e rho/(4k))^k          for k >= rho/2
/// In the second regime the first formula taken at k = rho/2 also holds, so the
/// smaller of the two is returned; that keeps the bound non-increasing in k.
inline double expm_bound(const BoundParams& p) {
  if (!(p.rho > 0.0) || p.k < 1)
    throw InvalidArgument("expm_bound needs rho > 0 and k >= 1");
  const double k = static_cast<double>(p.k);
  if (k < std::sqrt(p.rho))
    throw BoundNotApplicable("Krylov rank " + std::to_string(p.k) +
                             " below sqrt(rho) = " + std::to_string(std::sqrt(p.rho)) +
                             "; increase k");
  if (k <= p.rho / 2.0) return detail::bound_small_rank(p.rho, k);
  return std::min(detail::bound_small_rank(p.rho, p.rho / 2.0),
                  detail::bound_large_rank(p.rho, k));
}

/// Lower limit on k for the Krylov fixed-point map to contract:
/// sqrt((5 T rho / 4) ln(10 / (1 - e^{-T lambda_1}))).
inline double contraction_rank_floor(double scaled_rho, double scaled_lambda1) {
  return std::sqrt(1.25 * scaled_rho * std::log(10.0 / -std::expm1(-scaled_lambda1)));
}

struct RankChoice {
  std::size_t k = 1;
  bool reachable = true;
  double bound = 0.0;
  std::string warning;
};

/// Smallest k <= cap with expm_bound(rho_T, k) <= target that also exceeds the
/// contraction floor. rho_T = T rho(A), lambda_T = T lambda_1(A).
inline RankChoice rank_for_bound(double scaled_rho, double scaled_lambda1, double target,
                                 std::size_t cap) {
  if (!(target > 0.0 && target <= 1.0))
    throw InvalidArgument("rank target must lie in (0, 1]");
  if (cap < 1) throw InvalidArgument("rank cap must be positive");
  const double floor_k = contraction_rank_floor(scaled_rho, scaled_lambda1);
  auto start = static_cast<std::size_t>(std::max(1.0, std::ceil(std::sqrt(scaled_rho))));
  start = std::max(start, static_cast<std::size_t>(std::floor(floor_k)) + 1);
  RankChoice out;
  for (std::size_t k = start; k <= cap; ++k) {
    const double b = expm_bound({scaled_rho, k, scaled_lambda1, 1.0});
    if (b <= target) {
      out.k = k;
      out.bound = b;
      return out;
    }
  }
  out.k = cap;
  out.reachable = false;
  out.bound = static_cast<double>(cap) >= std::sqrt(scaled_rho)
                  ? expm_bound({scaled_rho, cap, scaled_lambda1, 1.0})
                  : std::numeric_limits<double>::infinity();
  out.warning = "target " + std::to_string(target) + " unreachable below n_dof = " +
                std::to_string(cap) + "; using k = n_dof";
  return out;
}

inline RankChoice choose_rank(const EllipticOperator& op, double horizon, double target) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  return rank_for_bound(horizon * op.rho(), horizon * op.lambda_min(), target, op.size());
}

}  // namespace nlheat
