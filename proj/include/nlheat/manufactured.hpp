#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>

#include "nlheat/coefficient.hpp"
#include "nlheat/elliptic_operator.hpp"
#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"
#include "nlheat/solvers.hpp"
#include "nlheat/timestepping.hpp"

namespace nlheat {

/// Benchmark problem with exact solution
///   u(t, x) = (e^{-t} - 1) prod_j sin^2(2 pi x_j)
/// on the unit cube, a = 1, so that p = Delta prod_j sin^2(2 pi x_j) and
/// f = -e^{-t} (prod_j sin^2(2 pi x_j) + p).
class ManufacturedCase {
 public:
  ManufacturedCase(int dim, double horizon) : dim_(dim), horizon_(horizon) {
    if (dim < 1 || dim > 3) throw InvalidArgument("manufactured case needs d in {1,2,3}");
    if (!(horizon > 0.0)) throw InvalidArgument("manufactured case needs T > 0");
  }

  int dim() const noexcept { return dim_; }
  double horizon() const noexcept { return horizon_; }

  /// prod_j sin^2(2 pi x_j)
  double shape(const Point& x) const {
    double s = 1.0;
    for (int j = 0; j < dim_; ++j) s *= sq_sin(x[j]);
    return s;
  }

  double exact_u(double t, const Point& x) const { return std::expm1(-t) * shape(x); }

  /// 8 pi^2 sum_j cos(4 pi x_j) prod_{k != j} sin^2(2 pi x_k)
  double exact_p(const Point& x) const {
    constexpr double pi = std::numbers::pi;
    double sum = 0.0;
    for (int j = 0; j < dim_; ++j) {
      double term = std::cos(4.0 * pi * x[j]);
      for (int k = 0; k < dim_; ++k)
        if (k != j) term *= sq_sin(x[k]);
      sum += term;
    }
    return 8.0 * pi * pi * sum;
  }

  double source(double t, const Point& x) const {
    return -std::exp(-t) * (shape(x) + exact_p(x));
  }

  /// phi(x) = u(T, x)
  double phi(const Point& x) const { return exact_u(horizon_, x); }

  SourceTerm source_term() const {
    return SourceTerm([c = *this](double t, const Grid& g) {
      return Field::sample(g, [&](const Point& x) { return c.source(t, x); });
    });
  }

  /// Same source as theta(t) g(x) on a fixed grid, theta(t) = -e^{-t}.
  SourceTerm source_term(const Grid& grid) const {
    Field g = Field::sample(grid, [this](const Point& x) { return shape(x) + exact_p(x); });
    return SourceTerm::separable([](double t) { return -std::exp(-t); }, std::move(g));
  }

  /// Inverse problem on an N-grid with a = 1.
  InverseProblem problem(int subdivisions) const {
    const Grid grid(dim_, subdivisions);
    auto op = std::make_shared<const EllipticOperator>(grid, Coefficient::constant(1.0));
    Field phi_h = Field::sample(grid, [this](const Point& x) { return phi(x); });
    return InverseProblem{std::move(op), source_term(grid), std::move(phi_h), horizon_};
  }

 private:
  static double sq_sin(double x) {
    const double s = std::sin(2.0 * std::numbers::pi * x);
    return s * s;
  }

  int dim_;
  double horizon_;
};

inline ManufacturedCase manufactured_case(int dim, double horizon) {
  return ManufacturedCase(dim, horizon);
}

inline constexpr double kRelativeErrorFloor = 1e-12;

struct ErrorReport {
  /// Pointwise max relative errors.
  double e_u = 0.0;
  double e_p = 0.0;
  /// max |error| / max |exact|, for reference next to the pointwise values.
  double e_u_scaled = 0.0;
  double e_p_scaled = 0.0;
  std::size_t excluded_u = 0;
  std::size_t excluded_p = 0;
  double threshold = kRelativeErrorFloor;
};

/// Max relative errors of u over all (t_k, x_j) and of p over x_j. Points
/// where the exact value is below `threshold` in magnitude are skipped.
inline ErrorReport measure_errors(const InverseSolution& sol, const ManufacturedCase& c,
                                  double threshold = kRelativeErrorFloor) {
  const Grid& grid = sol.p.grid();
  if (grid.dim() != c.dim()) throw InvalidArgument("solution and case dimensions differ");
  const double t_end = sol.u.time(sol.u.steps());
  if (std::abs(t_end - c.horizon()) > 1e-12 * c.horizon())
    throw InvalidArgument("solution and case horizons differ");

  ErrorReport r;
  r.threshold = threshold;
  std::size_t used_u = 0;
  std::size_t used_p = 0;
  double max_u = 0.0, max_p = 0.0, err_u = 0.0, err_p = 0.0;
  for (std::size_t j = 0; j < grid.n_dof(); ++j) {
    const Point x = grid.point(j);
    for (std::size_t m = 0; m < sol.u.states.size(); ++m) {
      const double exact = c.exact_u(sol.u.time(m), x);
      max_u = std::max(max_u, std::abs(exact));
      err_u = std::max(err_u, std::abs(exact - sol.u.states[m][j]));
      if (std::abs(exact) < threshold) {
        ++r.excluded_u;
        continue;
      }
      ++used_u;
      r.e_u = std::max(r.e_u, std::abs((exact - sol.u.states[m][j]) / exact));
    }
    const double exact_p = c.exact_p(x);
    max_p = std::max(max_p, std::abs(exact_p));
    err_p = std::max(err_p, std::abs(exact_p - sol.p[j]));
    if (std::abs(exact_p) < threshold) {
      ++r.excluded_p;
      continue;
    }
    ++used_p;
    r.e_p = std::max(r.e_p, std::abs((exact_p - sol.p[j]) / exact_p));
  }
  if (used_u == 0 || used_p == 0)
    throw InvalidArgument("every grid point was excluded from the relative error");
  r.e_u_scaled = err_u / max_u;
  r.e_p_scaled = err_p / max_p;
  return r;
}

}  // namespace nlheat
