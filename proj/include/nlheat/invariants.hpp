#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "nlheat/coefficient.hpp"
#include "nlheat/dense.hpp"
#include "nlheat/elliptic_operator.hpp"
#include "nlheat/grid.hpp"
#include "nlheat/iterative.hpp"
#include "nlheat/krylov.hpp"

namespace nlheat {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {
inline std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

/// Smooth variable coefficient in [1, 2] used by the invariant suites.
inline Coefficient bumpy_coefficient() {
  return Coefficient::function(
      [](const Point& x) { return 1.5 + 0.5 * std::sin(2.0 * x[0] + 3.0 * x[1] - x[2]); },
      1.0, 2.0);
}
}  // namespace detail

/// <Au, v> = <u, Av> and <Au, u> > 0 on `pairs` random pairs, constant and
/// variable coefficient, d = 1..3, N <= max_n.
inline Check check_symmetry_positivity(int max_n = 16, int pairs = 100) {
  Check c{"symmetry-positivity", true, ""};
  double worst = 0.0;
  std::uint64_t seed = 1;
  for (int d = 1; d <= 3; ++d) {
    for (int n : {4, max_n}) {
      const Grid g(d, n);
      for (const auto& coeff : {Coefficient::constant(1.0), detail::bumpy_coefficient()}) {
        const EllipticOperator op(g, coeff);
        for (int i = 0; i < pairs; ++i) {
          const Field u(g, deterministic_random(g.n_dof(), seed++));
          const Field v(g, deterministic_random(g.n_dof(), seed++));
          const Field au = op.apply(u);
          const double lhs = inner_product(au, v);
          const double rhs = inner_product(u, op.apply(v));
          const double scale = op.rho() * norm(u) * norm(v);
          worst = std::max(worst, std::abs(lhs - rhs) / scale);
          if (std::abs(lhs - rhs) > 1e-12 * scale) c.passed = false;
          if (!(inner_product(au, u) > 0.0)) c.passed = false;
        }
      }
    }
  }
  c.detail = detail::fmt("max relative asymmetry %.3e", worst);
  return c;
}

/// ||e^{-TA} g|| <= e^{-lambda_1 T} ||g|| + slack with the dense oracle.
inline Check check_contraction(int samples = 50, double horizon = 0.1, double slack = 1e-10) {
  Check c{"semigroup-contraction", true, ""};
  double worst = -1.0;
  std::uint64_t seed = 101;
  const std::vector<Grid> grids{Grid(1, 32), Grid(2, 16), Grid(3, 8)};
  for (const Grid& g : grids) {
    const EllipticOperator op(g, detail::bumpy_coefficient());
    const DenseSpectrum ds(op);
    const double lam = ds.eigenvalues()[0];
    for (int i = 0; i < samples; ++i) {
      const Field b(g, deterministic_random(g.n_dof(), seed++));
      const double lhs = norm(ds.expm(horizon, b));
      const double rhs = std::exp(-lam * horizon) * norm(b);
      worst = std::max(worst, lhs - rhs);
      if (lhs > rhs + slack) c.passed = false;
    }
  }
  c.detail = detail::fmt("max excess %.3e", worst);
  return c;
}

/// apply_expm and apply_geom at k = n_dof against the dense oracle.
inline Check check_krylov_exactness(double horizon = 0.1, double tol = 1e-9) {
  Check c{"krylov-full-rank", true, ""};
  double worst = 0.0;
  std::uint64_t seed = 501;
  const std::vector<Grid> grids{Grid(1, 64), Grid(2, 20), Grid(3, 10)};
  for (const Grid& g : grids) {
    const EllipticOperator op(g, detail::bumpy_coefficient());
    const DenseSpectrum ds(op);
    const Field b(g, deterministic_random(g.n_dof(), seed++));
    const KrylovBasis basis = lanczos(op, b, g.n_dof(), "random");
    const Field ex = ds.expm(horizon, b);
    const Field gx = ds.geom(horizon, b);
    const double e1 = norm(apply_expm(basis, horizon) - ex) / norm(ex);
    const double e2 = norm(apply_geom(basis, horizon) - gx) / norm(gx);
    worst = std::max({worst, e1, e2});
  }
  c.passed = worst <= tol;
  c.detail = detail::fmt("max relative error %.3e", worst);
  return c;
}

/// Measured ||e^{-tA} b - Krylov|| / ||b|| below expm_bound on randomized
/// instances where the bound applies.
inline Check check_expm_bound(int instances = 20) {
  Check c{"krylov-error-bound", true, ""};
  double worst_ratio = 0.0;
  std::uint64_t state = 0x5eed;
  auto uniform = [&state]() {
    return 0.5 * (deterministic_random(1, state++)[0] + 1.0);
  };
  int done = 0;
  while (done < instances) {
    const int d = 1 + done % 2;
    const int n = d == 1 ? 24 + static_cast<int>(40 * uniform()) : 8 + static_cast<int>(8 * uniform());
    const double t = 0.002 + 0.02 * uniform();
    const Grid g(d, n);
    const EllipticOperator op(g, detail::bumpy_coefficient());
    const DenseSpectrum ds(op);
    const double rho = t * ds.eigenvalues()[ds.eigenvalues().size() - 1];
    const auto k_lo = static_cast<std::size_t>(std::ceil(std::sqrt(rho)));
    const std::size_t k = std::min(k_lo + static_cast<std::size_t>(6 * uniform()), g.n_dof() - 1);
    if (k < k_lo) {
      ++state;
      continue;
    }
    const Field b(g, deterministic_random(g.n_dof(), state++));
    const double err = norm(apply_expm(lanczos(op, b, k, "random"), t) - ds.expm(t, b)) / norm(b);
    const double bound = expm_bound({rho, k, t * ds.eigenvalues()[0], t});
    worst_ratio = std::max(worst_ratio, err / bound);
    if (err > bound) c.passed = false;
    ++done;
  }
  c.detail = detail::fmt("max error / bound %.3e", worst_ratio);
  return c;
}

inline std::vector<Check> operator_invariants() {
  return {check_symmetry_positivity(), check_contraction(), check_krylov_exactness(),
          check_expm_bound()};
}

}  // namespace nlheat
