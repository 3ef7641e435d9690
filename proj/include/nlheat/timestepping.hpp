#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "nlheat/elliptic_operator.hpp"
#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"

namespace nlheat {

enum class Smoothness { kContinuous, kC1, kC2 };

/// Time-dependent source f_h(t) sampled on a grid. Deterministic in (t, grid).
class SourceTerm {
 public:
  using Fn = std::function<Field(double, const Grid&)>;

  SourceTerm() = default;
  SourceTerm(Fn fn, Smoothness smoothness = Smoothness::kC2)
      : fn_(std::move(fn)), smoothness_(smoothness) {}

  static SourceTerm zero() { return SourceTerm(); }

  /// f(t, x) = theta(t) g(x) for a fixed spatial field g.
  static SourceTerm separable(std::function<double(double)> theta, Field g,
                              Smoothness smoothness = Smoothness::kC2) {
    auto parts = std::make_shared<const Separable>(Separable{std::move(theta), std::move(g)});
    SourceTerm f(
        [parts](double t, const Grid& grid) {
          if (!(grid == parts->g.grid())) throw InvalidArgument("source evaluated on a foreign grid");
          return parts->theta(t) * parts->g;
        },
        smoothness);
    f.separable_ = std::move(parts);
    return f;
  }

  struct Separable {
    std::function<double(double)> theta;
    Field g;
  };
  /// Non-null when f(t) = theta(t) g.
  const Separable* separable_parts() const noexcept { return separable_.get(); }

  bool is_zero() const noexcept { return !fn_; }
  Smoothness smoothness() const noexcept { return smoothness_; }

  Field operator()(double t, const Grid& grid) const {
    if (!fn_) return Field(grid);
    return fn_(t, grid);
  }

 private:
  Fn fn_;
  Smoothness smoothness_ = Smoothness::kC2;
  std::shared_ptr<const Separable> separable_;
};

/// States v^0 .. v^M at t_m = m tau.
struct Trajectory {
  Grid grid;
  double tau = 0.0;
  std::vector<Field> states;

  std::size_t steps() const noexcept { return states.empty() ? 0 : states.size() - 1; }
  double time(std::size_t m) const noexcept { return static_cast<double>(m) * tau; }
  const Field& final_state() const { return states.back(); }
};

/// Inner-solve tolerance for the (I + tau A / 2) systems.
inline constexpr double kCnSolveTol = 1e-12;

/// One Crank-Nicolson step from t to t + tau with midpoint source sampling:
/// (I + tau A/2) v' = (I - tau A/2) v + tau f(t + tau/2).
inline Field cn_step(const EllipticOperator& op, const Field& v, double t, double tau,
                     const SourceTerm& f) {
  if (!(tau > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(v.grid() == op.grid())) throw InvalidArgument("state and operator grids differ");
  Vector rhs;
  op.apply_shifted(1.0, -0.5 * tau, v.values(), rhs);
  if (!f.is_zero()) rhs.noalias() += tau * f(t + 0.5 * tau, op.grid()).values();
  return Field(op.grid(), solve_shifted(op, 1.0, 0.5 * tau, rhs, kCnSolveTol));
}

namespace detail {
inline void check_ivp(double horizon, std::size_t steps) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon T must be positive");
  if (steps < 1) throw InvalidArgument("need at least one time step");
}
}  // namespace detail

/// M Crank-Nicolson steps over [0, T] from v0, keeping every state.
inline Trajectory cn_solve_ivp(const EllipticOperator& op, const Field& v0,
                               const SourceTerm& f, double horizon, std::size_t steps) {
  detail::check_ivp(horizon, steps);
  const double tau = horizon / static_cast<double>(steps);
  Trajectory traj{op.grid(), tau, {}};
  traj.states.reserve(steps + 1);
  traj.states.push_back(v0);
  for (std::size_t m = 0; m < steps; ++m)
    traj.states.push_back(cn_step(op, traj.states.back(), traj.time(m), tau, f));
  return traj;
}

/// Same as cn_solve_ivp but only returns v^M.
inline Field cn_final_state(const EllipticOperator& op, const Field& v0,
                            const SourceTerm& f, double horizon, std::size_t steps) {
  detail::check_ivp(horizon, steps);
  const double tau = horizon / static_cast<double>(steps);
  Field v = v0;
  for (std::size_t m = 0; m < steps; ++m)
    v = cn_step(op, v, static_cast<double>(m) * tau, tau, f);
  return v;
}

/// Amplification factor of the CN propagator G(A; tau) at eigenvalue lambda.
inline double cn_amplification(double lambda, double tau) {
  return (1.0 - 0.5 * tau * lambda) / (1.0 + 0.5 * tau * lambda);
}

/// |(1 - tau lambda_1/2) / (1 + tau lambda_1/2)| from the cached lambda_1.
inline double propagator_norm(const EllipticOperator& op, double tau) {
  return std::abs(cn_amplification(op.lambda_min(), tau));
}

/// max_j |g(lambda_j)| over the spectrum; g is monotone, so the maximum sits at
/// lambda_1 or rho. Differs from propagator_norm once tau rho / 2 is large.
inline double propagator_spectral_norm(const EllipticOperator& op, double tau) {
  return std::max(std::abs(cn_amplification(op.lambda_min(), tau)),
                  std::abs(cn_amplification(op.rho(), tau)));
}

}  // namespace nlheat
