#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "nlheat/elliptic_operator.hpp"
#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"
#include "nlheat/krylov.hpp"
#include "nlheat/quadrature.hpp"
#include "nlheat/timestepping.hpp"

namespace nlheat {

enum class Method { kDirect, kShooting, kHybrid, kPureArnoldi };
enum class SeedMode { kPerOperand, kSharedBasis };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kDirect: return "direct";
    case Method::kShooting: return "shooting";
    case Method::kHybrid: return "hybrid";
    case Method::kPureArnoldi: return "pure";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "direct") return Method::kDirect;
  if (s == "shooting") return Method::kShooting;
  if (s == "hybrid") return Method::kHybrid;
  if (s == "pure" || s == "pure-arnoldi" || s == "arnoldi") return Method::kPureArnoldi;
  throw InvalidArgument("unknown method '" + s + "'");
}

inline std::string to_string(SeedMode m) {
  return m == SeedMode::kPerOperand ? "per-operand" : "shared-basis";
}

inline SeedMode parse_seed_mode(const std::string& s) {
  if (s == "per-operand") return SeedMode::kPerOperand;
  if (s == "shared-basis" || s == "shared") return SeedMode::kSharedBasis;
  throw InvalidArgument("unknown seed mode '" + s + "'");
}

/// Semi-discrete nonlocal problem v' + A v = f, v(0) = v(T) - phi.
struct InverseProblem {
  std::shared_ptr<const EllipticOperator> op;
  SourceTerm f;
  Field phi;
  double horizon = 0.0;

  const Grid& grid() const { return op->grid(); }

  void validate() const {
    if (!op) throw InvalidArgument("inverse problem has no operator");
    if (!(horizon > 0.0)) throw InvalidArgument("horizon T must be positive");
    if (!(phi.grid() == op->grid())) throw InvalidArgument("phi lives on a different grid");
    if (!phi.values().allFinite()) throw InvalidArgument("phi has non-finite entries");
  }
};

/// Default quadrature refinement relative to the time grid.
inline constexpr std::size_t kPanelsPerStep = 16;

struct SolverConfig {
  Method method = Method::kShooting;
  /// Crank-Nicolson steps M.
  std::size_t steps = 0;
  /// Krylov rank; 0 selects it with choose_rank(rank_target).
  std::size_t rank = 0;
  double rank_target = 1e-5;
  double fp_tol = 1e-10;
  std::size_t fp_max_iter = 500;
  SeedMode seed_mode = SeedMode::kSharedBasis;
  /// Quadrature panels for the convolution term; 0 means kPanelsPerStep * steps.
  std::size_t quad_panels = 0;
  /// Keep every fixed-point iterate in the diagnostics.
  bool keep_iterates = false;

  void validate() const {
    if (steps < 1) throw InvalidArgument("solver needs M >= 1 time steps");
    if (!(fp_tol > 0.0)) throw InvalidArgument("fp_tol must be positive");
    if (fp_max_iter < 1) throw InvalidArgument("fp_max_iter must be >= 1");
  }
};

struct Diagnostics {
  std::size_t iterations = 0;
  bool converged = true;
  /// ||alpha_{n+1} - alpha_n|| at the last iteration.
  double fp_residual = 0.0;
  /// Successive-difference norms, one per iteration.
  std::vector<double> step_norms;
  /// A priori per-iteration contraction factor (NaN when not available).
  double contraction = std::numeric_limits<double>::quiet_NaN();
  /// C / (1 - C) * fp_residual, a certified bound on the distance to the fixed
  /// point when C < 1.
  double error_bound = std::numeric_limits<double>::quiet_NaN();
  /// ||v^M - phi - v^0|| after rerunning Crank-Nicolson from v^0.
  double self_consistency = 0.0;
  double wall_time_s = 0.0;
  std::size_t rank = 0;
  double expm_bound = std::numeric_limits<double>::quiet_NaN();
  std::string seed_mode;
  std::vector<std::string> warnings;
  std::vector<Field> iterates;
};

struct InverseSolution {
  Field v0;
  Field p;
  Trajectory u;
  Diagnostics diagnostics;
};

/// Raised when the fixed-point map is observed to diverge.
class NonContractionError : public Error {
 public:
  using Error::Error;
};

/// p = -A v(0), u^m = v^m - v^0.
inline std::pair<Field, Trajectory> recover_pair(const InverseProblem& prob, const Field& v0,
                                                 const Trajectory& traj) {
  if (traj.states.empty()) throw InvalidArgument("empty trajectory");
  const Field& first = traj.states.front();
  first.check_same(v0);
  if ((first.values() - v0.values()).lpNorm<Eigen::Infinity>() >
      1e-14 * std::max(1.0, v0.max_abs()))
    throw InvalidArgument("trajectory does not start at v0");
  Field p = -prob.op->apply(v0);
  Trajectory u{traj.grid, traj.tau, {}};
  u.states.reserve(traj.states.size());
  for (const Field& v : traj.states) u.states.push_back(v - first);
  return {std::move(p), std::move(u)};
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class Map>
Field fixed_point(const Field& start, Map&& map, const SolverConfig& cfg, Diagnostics& diag) {
  Field alpha = start;
  if (cfg.keep_iterates) diag.iterates.push_back(alpha);
  diag.converged = false;
  for (std::size_t it = 1; it <= cfg.fp_max_iter; ++it) {
    Field next = map(alpha);
    const double step = norm(next - alpha);
    diag.step_norms.push_back(step);
    diag.iterations = it;
    diag.fp_residual = step;
    alpha = std::move(next);
    if (cfg.keep_iterates) diag.iterates.push_back(alpha);
    if (step <= cfg.fp_tol) {
      diag.converged = true;
      break;
    }
    const auto& s = diag.step_norms;
    const std::size_t n = s.size();
    if (n >= 4 && s[n - 1] > s[n - 2] && s[n - 2] > s[n - 3] && s[n - 3] > s[n - 4] &&
        s[n - 1] > s[0])
      throw NonContractionError(
          "fixed-point iteration diverges (step norm " + std::to_string(s[n - 1]) +
          " after " + std::to_string(n) + " iterations); increase k");
  }
  if (!diag.converged)
    diag.warnings.push_back("fp_max_iter reached without meeting fp_tol");
  if (diag.contraction < 1.0)
    diag.error_bound = diag.contraction / (1.0 - diag.contraction) * diag.fp_residual;
  return alpha;
}

/// Runs Crank-Nicolson from v0 and assembles the solution.
inline InverseSolution finish(const InverseProblem& prob, const SolverConfig& cfg, Field v0,
                              Diagnostics diag, Clock::time_point start) {
  Trajectory traj = cn_solve_ivp(*prob.op, v0, prob.f, prob.horizon, cfg.steps);
  diag.self_consistency = norm(traj.final_state() - prob.phi - v0);
  auto [p, u] = recover_pair(prob, v0, traj);
  diag.wall_time_s = seconds_since(start);
  return InverseSolution{std::move(v0), std::move(p), std::move(u), std::move(diag)};
}

inline std::size_t resolve_rank(const InverseProblem& prob, const SolverConfig& cfg,
                                Diagnostics& diag) {
  const EllipticOperator& op = *prob.op;
  std::size_t k = cfg.rank;
  if (k == 0) {
    const RankChoice choice = choose_rank(op, prob.horizon, cfg.rank_target);
    if (!choice.reachable) diag.warnings.push_back(choice.warning);
    k = choice.k;
  }
  k = std::min(k, op.size());
  diag.rank = k;
  diag.seed_mode = to_string(cfg.seed_mode);

  const double rho_t = prob.horizon * op.rho();
  const double lam_t = prob.horizon * op.lambda_min();
  if (static_cast<double>(k) <= contraction_rank_floor(rho_t, lam_t) && k < op.size())
    diag.warnings.push_back("k = " + std::to_string(k) +
                            " is below the rank that guarantees a contracting Krylov "
                            "fixed-point map");
  if (k >= op.size()) {
    diag.expm_bound = 0.0;
  } else {
    try {
      diag.expm_bound = expm_bound({rho_t, k, lam_t, prob.horizon});
    } catch (const BoundNotApplicable& e) {
      diag.warnings.push_back(e.what());
    }
  }
  return k;
}

/// Builds the applier for the configured seed mode. Shared-basis mode seeds
/// from the first operand, -phi (falling back to f(T/2) when phi = 0).
inline std::unique_ptr<PropagatorApplier> make_applier(const InverseProblem& prob,
                                                       const SolverConfig& cfg,
                                                       std::size_t k) {
  if (cfg.seed_mode == SeedMode::kPerOperand)
    return std::make_unique<KrylovApplier>(*prob.op, k);
  Field seed = -prob.phi;
  std::string id = "-phi";
  if (seed.values().squaredNorm() == 0.0) {
    seed = prob.f(0.5 * prob.horizon, prob.grid());
    id = "f(T/2)";
  }
  if (seed.values().squaredNorm() == 0.0) return nullptr;
  return std::make_unique<SharedBasisApplier>(
      std::make_shared<const KrylovBasis>(lanczos(*prob.op, seed, k, id)));
}

inline std::size_t panels(const SolverConfig& cfg) {
  return cfg.quad_panels ? cfg.quad_panels : kPanelsPerStep * cfg.steps;
}

}  // namespace detail

/// Shooting: alpha_{k+1} = v^M(alpha_k) - phi with Crank-Nicolson, alpha_0 = -phi.
inline InverseSolution solve_shooting(const InverseProblem& prob, const SolverConfig& cfg) {
  prob.validate();
  cfg.validate();
  const auto start = detail::Clock::now();
  const EllipticOperator& op = *prob.op;
  Diagnostics diag;
  const double tau = prob.horizon / static_cast<double>(cfg.steps);
  diag.contraction = std::pow(propagator_spectral_norm(op, tau), static_cast<double>(cfg.steps));
  Field v0 = detail::fixed_point(
      -prob.phi,
      [&](const Field& alpha) {
        return cn_final_state(op, alpha, prob.f, prob.horizon, cfg.steps) - prob.phi;
      },
      cfg, diag);
  return detail::finish(prob, cfg, std::move(v0), std::move(diag), start);
}

/// Hybrid shooting-Krylov: alpha_n = E_T alpha_{n-1} + Conv(f) - phi, where E_T
/// is the Krylov action of e^{-TA} and Conv the Richardson-extrapolated
/// increment quadrature, then a Crank-Nicolson pass from the fixed point.
inline InverseSolution solve_hybrid(const InverseProblem& prob, const SolverConfig& cfg) {
  prob.validate();
  cfg.validate();
  const auto start = detail::Clock::now();
  const EllipticOperator& op = *prob.op;
  Diagnostics diag;
  const std::size_t k = detail::resolve_rank(prob, cfg, diag);
  const double decay = std::exp(-prob.horizon * op.lambda_min());
  diag.contraction = k >= op.size() ? decay
                     : std::isnan(diag.expm_bound) ? std::numeric_limits<double>::quiet_NaN()
                                                   : decay + diag.expm_bound;
  if (!(diag.contraction < 1.0))
    diag.warnings.push_back("a priori bound does not certify contraction; increase k");

  auto applier = detail::make_applier(prob, cfg, k);
  if (!applier) {
    diag.iterations = 1;
    diag.step_norms.push_back(0.0);
    return detail::finish(prob, cfg, Field(prob.grid()), std::move(diag), start);
  }
  const Field offset =
      convolve_richardson(*applier, prob.f, prob.horizon, detail::panels(cfg)) - prob.phi;
  Field v0 = detail::fixed_point(
      -prob.phi,
      [&](const Field& alpha) { return applier->expm(prob.horizon, alpha) + offset; }, cfg,
      diag);
  return detail::finish(prob, cfg, std::move(v0), std::move(diag), start);
}

/// Pure Krylov: v0 = (I - e^{-TA})^{-1} (-phi + Conv(f)) with the geometric
/// function evaluated on the reduced matrix; no fixed-point loop.
inline InverseSolution solve_pure_arnoldi(const InverseProblem& prob, const SolverConfig& cfg) {
  prob.validate();
  cfg.validate();
  const auto start = detail::Clock::now();
  Diagnostics diag;
  const std::size_t k = detail::resolve_rank(prob, cfg, diag);
  diag.iterations = 1;
  diag.step_norms.push_back(0.0);

  auto applier = detail::make_applier(prob, cfg, k);
  if (!applier) return detail::finish(prob, cfg, Field(prob.grid()), std::move(diag), start);
  const Field g =
      convolve_richardson(*applier, prob.f, prob.horizon, detail::panels(cfg)) - prob.phi;
  Field v0(prob.grid());
  if (cfg.seed_mode == SeedMode::kSharedBasis) {
    const auto& shared = static_cast<const SharedBasisApplier&>(*applier);
    v0 = apply_geom_projected(shared.basis(), prob.horizon, g);
  } else if (g.values().squaredNorm() > 0.0) {
    v0 = apply_geom(lanczos(*prob.op, g, k, "g"), prob.horizon);
  }
  return detail::finish(prob, cfg, std::move(v0), std::move(diag), start);
}

/// Direct space-time elimination of the Crank-Nicolson nonlocal system (d = 1).
/// Per spatial node the M unknowns v^1..v^M form one block; v^0 = v^M - phi
/// closes the system. Block rows C- V_{n-1} + B V_n + C+ V_{n+1} = Phi_n are
/// solved by forward elimination V_n = alpha_{n+1} V_{n+1} + beta_{n+1} from
/// alpha_1 = 0, beta_1 = 0 and back substitution from V_N = 0.
inline InverseSolution solve_direct(const InverseProblem& prob, const SolverConfig& cfg) {
  prob.validate();
  cfg.validate();
  const Grid& grid = prob.grid();
  if (grid.dim() != 1)
    throw InvalidArgument("direct elimination is only supported for d = 1");
  const auto start = detail::Clock::now();
  const EllipticOperator& op = *prob.op;
  const auto steps = static_cast<Eigen::Index>(cfg.steps);
  const auto nodes = static_cast<Eigen::Index>(grid.n_dof());
  const double tau = prob.horizon / static_cast<double>(cfg.steps);

  // time-difference and time-average couplings; column j holds v^{j+1}
  Eigen::MatrixXd dt = Eigen::MatrixXd::Zero(steps, steps);
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(steps, steps);
  for (Eigen::Index m = 0; m < steps; ++m) {
    const Eigen::Index prev = m == 0 ? steps - 1 : m - 1;
    dt(m, m) += 1.0 / tau;
    dt(m, prev) -= 1.0 / tau;
    avg(m, m) += 0.5;
    avg(m, prev) += 0.5;
  }

  std::vector<Vector> source;
  source.reserve(cfg.steps);
  for (Eigen::Index m = 0; m < steps; ++m)
    source.push_back(prob.f((static_cast<double>(m) + 0.5) * tau, grid).values());
  const Vector a_phi = op.apply(prob.phi.values());

  const Vector& diag_w = op.diagonal();
  const Vector& minus_w = op.minus_weights(0);
  const Vector& plus_w = op.plus_weights(0);

  std::vector<Eigen::MatrixXd> alpha(static_cast<std::size_t>(nodes) + 1);
  std::vector<Vector> beta(static_cast<std::size_t>(nodes) + 1);
  alpha[0] = Eigen::MatrixXd::Zero(steps, steps);
  beta[0] = Vector::Zero(steps);
  for (Eigen::Index j = 0; j < nodes; ++j) {
    const Eigen::MatrixXd b = dt + diag_w[j] * avg;
    const Eigen::MatrixXd c_minus = -minus_w[j] * avg;
    const Eigen::MatrixXd c_plus = -plus_w[j] * avg;
    Vector rhs(steps);
    for (Eigen::Index m = 0; m < steps; ++m) rhs[m] = source[m][j];
    rhs[0] += 0.5 * a_phi[j] - prob.phi[j] / tau;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(b + c_minus * alpha[j]);
    if (!(lu.rcond() > 1e-14))
      throw Error("singular elimination block at node " + std::to_string(j + 1));
    alpha[j + 1] = -lu.solve(c_plus);
    beta[j + 1] = lu.solve(rhs - c_minus * beta[j]);
  }

  std::vector<Vector> blocks(static_cast<std::size_t>(nodes));
  Vector next = Vector::Zero(steps);
  for (Eigen::Index j = nodes - 1; j >= 0; --j) {
    blocks[j] = alpha[j + 1] * next + beta[j + 1];
    next = blocks[j];
  }

  Trajectory traj{grid, tau, {}};
  traj.states.reserve(cfg.steps + 1);
  Vector v0(nodes);
  for (Eigen::Index j = 0; j < nodes; ++j) v0[j] = blocks[j][steps - 1] - prob.phi[j];
  traj.states.emplace_back(grid, v0);
  for (Eigen::Index m = 0; m < steps; ++m) {
    Vector vm(nodes);
    for (Eigen::Index j = 0; j < nodes; ++j) vm[j] = blocks[j][m];
    traj.states.emplace_back(grid, std::move(vm));
  }

  Diagnostics diag;
  diag.iterations = 1;
  diag.step_norms.push_back(0.0);
  Field v0_field = traj.states.front();
  diag.self_consistency =
      norm(cn_final_state(op, v0_field, prob.f, prob.horizon, cfg.steps) - prob.phi - v0_field);
  auto [p, u] = recover_pair(prob, v0_field, traj);
  diag.wall_time_s = detail::seconds_since(start);
  return InverseSolution{std::move(v0_field), std::move(p), std::move(u), std::move(diag)};
}

inline InverseSolution solve(const InverseProblem& prob, const SolverConfig& cfg) {
  switch (cfg.method) {
    case Method::kDirect: return solve_direct(prob, cfg);
    case Method::kShooting: return solve_shooting(prob, cfg);
    case Method::kHybrid: return solve_hybrid(prob, cfg);
    case Method::kPureArnoldi: return solve_pure_arnoldi(prob, cfg);
  }
  throw InvalidArgument("unknown method");
}

}  // namespace nlheat
