#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "nlheat/dense.hpp"
#include "nlheat/invariants.hpp"
#include "nlheat/timestepping.hpp"

using namespace nlheat;

namespace {

constexpr double kPi = std::numbers::pi;

Field sine_mode(const Grid& g, int j) {
  return Field::sample(g, [j](const Point& x) { return std::sin(j * kPi * x[0]); });
}

// Exact semi-discrete solution of v' + Av = cos(t) g, v(0) = v0, by
// diagonalising A; per eigenvalue l the convolution integral is
// (l cos T + sin T - l e^{-lT}) / (l^2 + 1).
Field exact_final(const DenseSpectrum& ds, const Field& v0, const Field& g, double horizon) {
  const Field hom = ds.expm(horizon, v0);
  const Vector conv = ds.apply_function(
      [horizon](double l) {
        return (l * std::cos(horizon) + std::sin(horizon) - l * std::exp(-l * horizon)) /
               (l * l + 1.0);
      },
      g.values());
  return hom + Field(v0.grid(), conv);
}

}  // namespace

TEST(CrankNicolson, AmplificationOfLowestMode) {
  const Grid g(1, 4);
  const EllipticOperator op(g, Coefficient::constant(1.0));
  // oracle lambda_1 from a dense eigensolve
  const double l1 = DenseSpectrum(op).eigenvalues()[0];
  const double tau = 0.025;
  const double expect = (1.0 - 0.5 * tau * l1) / (1.0 + 0.5 * tau * l1);
  EXPECT_NEAR(expect, 0.79026, 1e-5);
  EXPECT_NEAR(cn_amplification(l1, tau), expect, 1e-14);

  const Field v = sine_mode(g, 1);
  const Field w = cn_step(op, v, 0.0, tau, SourceTerm::zero());
  EXPECT_LT((w - expect * v).max_abs(), 1e-11);
}

TEST(CrankNicolson, EigenvectorEvolvesByPowers) {
  const Grid g(1, 16);
  const EllipticOperator op(g, Coefficient::constant(1.0));
  const double l3 = DenseSpectrum(op).eigenvalues()[2];
  const Field v = sine_mode(g, 3);
  const std::size_t steps = 10;
  const Trajectory tr = cn_solve_ivp(op, v, SourceTerm::zero(), 0.1, steps);
  ASSERT_EQ(tr.steps(), steps);
  EXPECT_DOUBLE_EQ(tr.time(steps), 0.1);
  for (std::size_t m = 0; m <= steps; ++m) {
    const double gm = std::pow(cn_amplification(l3, 0.01), static_cast<double>(m));
    EXPECT_LT((tr.states[m] - gm * v).max_abs(), 1e-10) << "m=" << m;
  }
  EXPECT_LT((cn_final_state(op, v, SourceTerm::zero(), 0.1, steps) - tr.final_state()).max_abs(),
            1e-15);
}

TEST(CrankNicolson, SecondOrderInTime) {
  const Grid g(2, 8);
  const EllipticOperator op(g, detail::bumpy_coefficient());
  const DenseSpectrum ds(op);
  const Field v0 = Field::sample(g, [](const Point& x) {
    return std::sin(kPi * x[0]) * std::sin(kPi * x[1]) * (1.0 + x[0]);
  });
  const Field gsrc = Field::sample(g, [](const Point& x) { return x[0] * (1.0 - x[1]); });
  const SourceTerm f = SourceTerm::separable([](double t) { return std::cos(t); }, gsrc);
  const double horizon = 0.5;
  const Field exact = exact_final(ds, v0, gsrc, horizon);

  std::vector<double> err;
  for (std::size_t m : {40, 80, 160, 320})
    err.push_back((cn_final_state(op, v0, f, horizon, m) - exact).max_abs());
  for (std::size_t i = 1; i < err.size(); ++i)
    EXPECT_NEAR(std::log2(err[i - 1] / err[i]), 2.0, 0.2) << "refinement " << i;
}

TEST(CrankNicolson, SeparableAndGenericSourcesAgree) {
  const Grid g(1, 12);
  const EllipticOperator op(g, Coefficient::constant(1.0));
  const Field gsrc = Field::sample(g, [](const Point& x) { return x[0]; });
  const SourceTerm sep = SourceTerm::separable([](double t) { return 1.0 + t; }, gsrc);
  const SourceTerm gen([](double t, const Grid& grid) {
    return Field::sample(grid, [t](const Point& x) { return (1.0 + t) * x[0]; });
  });
  const Field v0(g, deterministic_random(g.n_dof(), 1));
  EXPECT_LT((cn_final_state(op, v0, sep, 0.2, 7) - cn_final_state(op, v0, gen, 0.2, 7)).max_abs(),
            1e-13);
  EXPECT_THROW(sep(0.0, Grid(1, 13)), InvalidArgument);
}

TEST(PropagatorNorm, VanishesAtTauLambdaTwo) {
  const EllipticOperator op(Grid(1, 16), Coefficient::constant(1.0));
  const double tau = 2.0 / op.lambda_min();
  EXPECT_NEAR(propagator_norm(op, tau), 0.0, 1e-12);
  EXPECT_GT(propagator_spectral_norm(op, tau), 0.9);
}

TEST(PropagatorNorm, PowerApproachesExponential) {
  const EllipticOperator op(Grid(1, 4), Coefficient::constant(1.0));
  const double l1 = DenseSpectrum(op).eigenvalues()[0];
  EXPECT_NEAR(0.1 * l1, 0.937, 1e-3);
  const double pm = std::pow(propagator_norm(op, 0.1 / 64), 64);
  EXPECT_NEAR(pm / std::exp(-0.1 * l1), 1.0, 0.01);
  // a=1, d=1: the lowest mode dominates for small tau
  EXPECT_DOUBLE_EQ(propagator_spectral_norm(op, 0.1 / 64), propagator_norm(op, 0.1 / 64));
}

TEST(PropagatorNorm, SpectralNormBoundsEveryStep) {
  const Grid g(2, 10);
  const EllipticOperator op(g, detail::bumpy_coefficient());
  const double tau = 0.02;
  const double bound = propagator_spectral_norm(op, tau);
  for (unsigned s = 0; s < 10; ++s) {
    const Field v(g, deterministic_random(g.n_dof(), 100 + s));
    const Field w = cn_step(op, v, 0.0, tau, SourceTerm::zero());
    EXPECT_LE(norm(w), bound * norm(v) * (1.0 + 1e-9));
  }
}

TEST(CrankNicolson, PropagatorIsSelfAdjoint) {
  const Grid g(2, 9);
  const EllipticOperator op(g, detail::bumpy_coefficient());
  const Field u(g, deterministic_random(g.n_dof(), 7));
  const Field w(g, deterministic_random(g.n_dof(), 8));
  const auto step = [&](const Field& v) { return cn_step(op, v, 0.0, 0.05, SourceTerm::zero()); };
  const double a = inner_product(step(u), w), b = inner_product(u, step(w));
  EXPECT_NEAR(a, b, 1e-10 * norm(u) * norm(w));
}

TEST(CrankNicolson, RejectsBadInput) {
  const Grid g(1, 8);
  const EllipticOperator op(g, Coefficient::constant(1.0));
  const Field v(g);
  EXPECT_THROW(cn_solve_ivp(op, v, SourceTerm::zero(), 0.0, 4), InvalidArgument);
  EXPECT_THROW(cn_solve_ivp(op, v, SourceTerm::zero(), 0.1, 0), InvalidArgument);
  EXPECT_THROW(cn_step(op, v, 0.0, -0.1, SourceTerm::zero()), InvalidArgument);
  EXPECT_THROW(cn_step(op, Field(Grid(1, 9)), 0.0, 0.1, SourceTerm::zero()), InvalidArgument);
}
