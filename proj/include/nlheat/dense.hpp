#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "nlheat/elliptic_operator.hpp"
#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"

namespace nlheat {

inline constexpr std::size_t kDenseOracleCap = 4096;

/// Dense copy of A_h, column by column.
inline Eigen::MatrixXd to_dense(const EllipticOperator& op) {
  const auto n = static_cast<Eigen::Index>(op.size());
  Eigen::MatrixXd a(n, n);
  Vector e = Vector::Zero(n);
  Vector col(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    op.apply(e, col);
    a.col(j) = col;
    e[j] = 0.0;
  }
  return a;
}

/// Full symmetric eigendecomposition of A_h. Test and study oracle only:
/// O(n^3) setup, n capped.
class DenseSpectrum {
 public:
  explicit DenseSpectrum(const EllipticOperator& op, std::size_t cap = kDenseOracleCap)
      : grid_(op.grid()) {
    if (op.size() > cap)
      throw InvalidArgument("dense oracle size cap exceeded: n_dof " +
                            std::to_string(op.size()) + " > " + std::to_string(cap));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_dense(op));
    values_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
  }

  const Grid& grid() const noexcept { return grid_; }
  const Vector& eigenvalues() const noexcept { return values_; }
  const Eigen::MatrixXd& eigenvectors() const noexcept { return vectors_; }

  /// V diag(fn(lambda)) V^T b
  template <class Fn>
  Vector apply_function(Fn&& fn, const Vector& b) const {
    Vector coeffs = vectors_.transpose() * b;
    for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs[i] *= fn(values_[i]);
    return vectors_ * coeffs;
  }

  Field expm(double t, const Field& b) const {
    return Field(grid_, apply_function([t](double l) { return std::exp(-t * l); }, b.values()));
  }

  /// (I - e^{-T A})^{-1} b
  Field geom(double horizon, const Field& b) const {
    return Field(grid_, apply_function(
                            [horizon](double l) { return -1.0 / std::expm1(-horizon * l); },
                            b.values()));
  }

  Field inverse(const Field& b) const {
    return Field(grid_, apply_function([](double l) { return 1.0 / l; }, b.values()));
  }

 private:
  Grid grid_;
  Vector values_;
  Eigen::MatrixXd vectors_;
};

/// Exact e^{-tA} b through the full eigendecomposition.
inline Field dense_expm_oracle(const EllipticOperator& op, double t, const Field& b,
                               std::size_t cap = kDenseOracleCap) {
  return DenseSpectrum(op, cap).expm(t, b);
}

}  // namespace nlheat
