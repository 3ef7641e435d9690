#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"

namespace nlheat {

struct CgResult {
  Vector x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients for an SPD operator given as
/// apply(in, out). Stops on the true residual ||b - A x|| <= rtol ||b||.
template <class Apply>
CgResult conjugate_gradient(Apply&& apply, const Vector& diag, const Vector& b,
                            double rtol, std::size_t max_iter) {
  if (!(rtol > 0.0)) throw InvalidArgument("CG tolerance must be positive");
  const Eigen::Index n = b.size();
  CgResult out;
  out.x = Vector::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) return out;

  Vector r = b;
  Vector z = r.cwiseQuotient(diag);
  Vector p = z;
  Vector q(n);
  double rz = r.dot(z);
  const double target = rtol * bnorm;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    apply(p, q);
    const double alpha = rz / p.dot(q);
    out.x.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    const double rnorm = r.norm();
    out.iterations = it;
    if (rnorm <= target) {
      // the recurrence residual drifts; confirm against the true one
      apply(out.x, q);
      const double true_res = (b - q).norm();
      if (true_res <= target) {
        out.relative_residual = true_res / bnorm;
        return out;
      }
      r = b - q;
    }
    z = r.cwiseQuotient(diag);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  apply(out.x, q);
  out.relative_residual = (b - q).norm() / bnorm;
  throw ConvergenceError("conjugate gradient hit the iteration cap",
                         out.relative_residual);
}

/// Deterministic pseudo-random vector in [-1, 1)^n (platform independent).
inline Vector deterministic_random(Eigen::Index n, std::uint64_t seed) {
  Vector v(n);
  std::uint64_t s = seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL;
  for (Eigen::Index i = 0; i < n; ++i) {
    // splitmix64
    s += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    v[i] = static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
  }
  return v;
}

}  // namespace nlheat
