#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nlheat/dense.hpp"
#include "nlheat/elliptic_operator.hpp"
#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"
#include "nlheat/krylov.hpp"
#include "nlheat/timestepping.hpp"

namespace nlheat {

/// Capability to apply e^{-tA} and A^{-1} to grid functions. The quadrature
/// rules and the Krylov solvers are written once against this interface.
class PropagatorApplier {
 public:
  virtual ~PropagatorApplier() = default;
  virtual const Grid& grid() const = 0;
  /// e^{-tA} w
  virtual Field expm(double t, const Field& w) const = 0;
  /// A^{-1} w
  virtual Field inverse(const Field& w) const = 0;
  virtual std::string name() const = 0;
  /// Whether fn(A) w can be applied for an arbitrary scalar fn.
  virtual bool has_functional_calculus() const { return false; }
  virtual Field apply_function(const std::function<double(double)>& fn,
                               const Field& w) const {
    (void)fn;
    (void)w;
    throw InvalidArgument(name() + " has no functional calculus");
  }
};

/// Exact action through a dense eigendecomposition (small problems only).
class DenseApplier final : public PropagatorApplier {
 public:
  explicit DenseApplier(std::shared_ptr<const DenseSpectrum> spectrum)
      : spectrum_(std::move(spectrum)) {}
  explicit DenseApplier(const EllipticOperator& op)
      : spectrum_(std::make_shared<const DenseSpectrum>(op)) {}

  const Grid& grid() const override { return spectrum_->grid(); }
  Field expm(double t, const Field& w) const override { return spectrum_->expm(t, w); }
  Field inverse(const Field& w) const override { return spectrum_->inverse(w); }
  std::string name() const override { return "dense"; }
  bool has_functional_calculus() const override { return true; }
  Field apply_function(const std::function<double(double)>& fn,
                       const Field& w) const override {
    return Field(grid(), spectrum_->apply_function(fn, w.values()));
  }
  const DenseSpectrum& spectrum() const noexcept { return *spectrum_; }

 private:
  std::shared_ptr<const DenseSpectrum> spectrum_;
};

/// Full-space Krylov action: every operand gets its own Lanczos basis of
/// rank min(k, n_dof); A^{-1} goes through conjugate gradients.
class KrylovApplier final : public PropagatorApplier {
 public:
  KrylovApplier(const EllipticOperator& op, std::size_t rank, double solve_rtol = 1e-12)
      : op_(op), rank_(std::min(rank, op.size())), rtol_(solve_rtol) {
    if (rank < 1) throw InvalidArgument("Krylov rank must be positive");
  }

  const Grid& grid() const override { return op_.grid(); }

  Field expm(double t, const Field& w) const override {
    if (w.values().squaredNorm() == 0.0) return Field(op_.grid());
    bases_built_.fetch_add(1, std::memory_order_relaxed);
    return apply_expm(lanczos(op_, w, rank_, "operand"), t);
  }

  Field inverse(const Field& w) const override { return solve_spd(op_, w, rtol_); }

  std::string name() const override { return "krylov-per-operand"; }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t bases_built() const noexcept { return bases_built_.load(); }

 private:
  const EllipticOperator& op_;
  std::size_t rank_;
  double rtol_;
  mutable std::atomic<std::size_t> bases_built_{0};
};

/// Reduced-space action Q f(H) Q^T w with one fixed basis for every operand.
class SharedBasisApplier final : public PropagatorApplier {
 public:
  explicit SharedBasisApplier(std::shared_ptr<const KrylovBasis> basis)
      : basis_(std::move(basis)) {}

  const Grid& grid() const override { return basis_->grid(); }

  Field expm(double t, const Field& w) const override {
    return basis_->projected_function([t](double l) { return std::exp(-t * l); }, w);
  }

  /// Q H^{-1} Q^T w
  Field inverse(const Field& w) const override {
    return basis_->projected_function([](double l) { return 1.0 / l; }, w);
  }

  std::string name() const override { return "krylov-shared-basis"; }
  bool has_functional_calculus() const override { return true; }
  Field apply_function(const std::function<double(double)>& fn,
                       const Field& w) const override {
    return basis_->projected_function(fn, w);
  }
  const KrylovBasis& basis() const noexcept { return *basis_; }

 private:
  std::shared_ptr<const KrylovBasis> basis_;
};

namespace detail {
inline void check_panels(double horizon, std::size_t panels) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  if (panels < 1) throw InvalidArgument("need at least one quadrature panel");
}

/// S_M = sum_k E^{M-k} w_k with E = e^{-tau A}, by Horner's rule.
template <class Operand>
Field horner_sweep(const PropagatorApplier& ap, double tau, std::size_t panels,
                   Operand&& operand) {
  Field acc(ap.grid());
  for (std::size_t k = 1; k <= panels; ++k) {
    if (k > 1) acc = ap.expm(tau, acc);
    acc += operand(k);
  }
  return acc;
}

/// theta at the panel midpoints.
inline std::vector<double> midpoint_weights(const SourceTerm::Separable& sep, double tau,
                                            std::size_t panels) {
  std::vector<double> th(panels);
  for (std::size_t k = 1; k <= panels; ++k)
    th[k - 1] = sep.theta((static_cast<double>(k) - 0.5) * tau);
  return th;
}

/// Horner sweep of sum_k th_k z^{M-k} at z = e^{-tau lambda}.
inline double scalar_sweep(const std::vector<double>& th, double z) {
  double acc = 0.0;
  for (double t : th) acc = acc * z + t;
  return acc;
}

inline bool reduced_path(const PropagatorApplier& ap, const SourceTerm& f) {
  return f.separable_parts() != nullptr && ap.has_functional_calculus();
}
}  // namespace detail

/// tau sum_k e^{-(T - t_{k-1/2})A} f(t_{k-1/2}). Second order in tau, with an
/// error constant that grows like ||A^2||.
inline Field convolve_naive_midpoint(const PropagatorApplier& ap, const SourceTerm& f,
                                     double horizon, std::size_t panels) {
  detail::check_panels(horizon, panels);
  if (f.is_zero()) return Field(ap.grid());
  const double tau = horizon / static_cast<double>(panels);
  if (detail::reduced_path(ap, f)) {
    const auto* sep = f.separable_parts();
    const auto th = detail::midpoint_weights(*sep, tau, panels);
    return ap.apply_function(
        [&](double l) {
          return tau * std::exp(-0.5 * tau * l) * detail::scalar_sweep(th, std::exp(-tau * l));
        },
        sep->g);
  }
  Field s = detail::horner_sweep(ap, tau, panels, [&](std::size_t k) {
    return f((static_cast<double>(k) - 0.5) * tau, ap.grid());
  });
  return tau * ap.expm(0.5 * tau, s);
}

/// sum_k (e^{-(T - t_k)A} - e^{-(T - t_{k-1})A}) A^{-1} f(t_{k-1/2}).
/// The exponential is integrated exactly on each panel, so the first-order
/// error constant only involves d/dt f.
inline Field convolve_increment(const PropagatorApplier& ap, const SourceTerm& f,
                                double horizon, std::size_t panels) {
  detail::check_panels(horizon, panels);
  if (f.is_zero()) return Field(ap.grid());
  const double tau = horizon / static_cast<double>(panels);
  if (detail::reduced_path(ap, f)) {
    const auto* sep = f.separable_parts();
    const auto th = detail::midpoint_weights(*sep, tau, panels);
    return ap.apply_function(
        [&](double l) {
          // (1 - e^{-tau l}) / l
          return -std::expm1(-tau * l) / l * detail::scalar_sweep(th, std::exp(-tau * l));
        },
        sep->g);
  }
  Field s = detail::horner_sweep(ap, tau, panels, [&](std::size_t k) {
    return ap.inverse(f((static_cast<double>(k) - 0.5) * tau, ap.grid()));
  });
  // (I - e^{-tau A}) S_M
  return s - ap.expm(tau, s);
}

/// 2 I_{2M} - I_M of the increment rule; second order in tau.
inline Field convolve_richardson(const PropagatorApplier& ap, const SourceTerm& f,
                                 double horizon, std::size_t panels) {
  detail::check_panels(horizon, panels);
  if (f.is_zero()) return Field(ap.grid());
  return 2.0 * convolve_increment(ap, f, horizon, 2 * panels) -
         convolve_increment(ap, f, horizon, panels);
}

}  // namespace nlheat
