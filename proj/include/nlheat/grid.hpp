#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "nlheat/error.hpp"

namespace nlheat {

using Vector = Eigen::VectorXd;
using Point = std::array<double, 3>;

/// Uniform tensor-product grid on the unit cube. Unknowns live on the
/// (N-1)^d interior points; axis 0 varies fastest in the linear index.
class Grid {
 public:
  Grid(int dim, int subdivisions) : dim_(dim), n_(subdivisions) {
    if (dim < 1 || dim > 3)
      throw InvalidArgument("unsupported dimension " + std::to_string(dim));
    if (subdivisions < 2)
      throw InvalidArgument("grid needs N >= 2, got " +
                            std::to_string(subdivisions));
    n_dof_ = 1;
    for (int a = 0; a < dim_; ++a) n_dof_ *= static_cast<std::size_t>(n_ - 1);
  }

  int dim() const noexcept { return dim_; }
  int subdivisions() const noexcept { return n_; }
  double h() const noexcept { return 1.0 / n_; }
  std::size_t n_dof() const noexcept { return n_dof_; }

  /// Interior points per axis (N-1).
  int interior() const noexcept { return n_ - 1; }

  /// Linear-index stride along `axis` (1 for axis 0).
  std::size_t stride(int axis) const noexcept {
    std::size_t s = 1;
    for (int a = 0; a < axis; ++a) s *= static_cast<std::size_t>(n_ - 1);
    return s;
  }

  /// Multi-index (n_1, ..., n_d) with 1 <= n_i <= N-1; unused axes are 0.
  std::array<int, 3> multi_index(std::size_t j) const {
    std::array<int, 3> idx{0, 0, 0};
    const auto m = static_cast<std::size_t>(n_ - 1);
    for (int a = 0; a < dim_; ++a) {
      idx[a] = static_cast<int>(j % m) + 1;
      j /= m;
    }
    return idx;
  }

  std::size_t linear_index(const std::array<int, 3>& idx) const {
    std::size_t j = 0;
    for (int a = dim_ - 1; a >= 0; --a) {
      if (idx[a] < 1 || idx[a] > n_ - 1)
        throw InvalidArgument("multi-index outside interior");
      j = j * static_cast<std::size_t>(n_ - 1) +
          static_cast<std::size_t>(idx[a] - 1);
    }
    return j;
  }

  /// Coordinates of interior point j; unused axes are 0.
  Point point(std::size_t j) const {
    const auto idx = multi_index(j);
    Point x{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) x[a] = static_cast<double>(idx[a]) / n_;
    return x;
  }

  /// Weight h^d of the discrete inner product.
  double cell_volume() const noexcept { return std::pow(h(), dim_); }

  friend bool operator==(const Grid& a, const Grid& b) noexcept {
    return a.dim_ == b.dim_ && a.n_ == b.n_;
  }

 private:
  int dim_;
  int n_;
  std::size_t n_dof_;
};

inline Grid build_grid(int dim, int subdivisions) {
  return Grid(dim, subdivisions);
}

/// Real grid function over the interior points.
class Field {
 public:
  explicit Field(const Grid& grid) : grid_(grid), values_(Vector::Zero(grid.n_dof())) {}

  Field(const Grid& grid, Vector values) : grid_(grid), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != grid_.n_dof())
      throw InvalidArgument("field length " + std::to_string(values_.size()) +
                            " does not match grid n_dof " +
                            std::to_string(grid_.n_dof()));
    if (!values_.allFinite()) throw InvalidArgument("field has non-finite entries");
  }

  /// Samples g at every interior point.
  template <class Fn>
  static Field sample(const Grid& grid, Fn&& g) {
    Vector v(grid.n_dof());
    for (std::size_t j = 0; j < grid.n_dof(); ++j) v[j] = g(grid.point(j));
    return Field(grid, std::move(v));
  }

  const Grid& grid() const noexcept { return grid_; }
  const Vector& values() const noexcept { return values_; }
  Vector& values() noexcept { return values_; }
  std::size_t size() const noexcept { return grid_.n_dof(); }

  double operator[](std::size_t j) const { return values_[j]; }
  double& operator[](std::size_t j) { return values_[j]; }

  Field& operator+=(const Field& o) {
    check_same(o);
    values_ += o.values_;
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_same(o);
    values_ -= o.values_;
    return *this;
  }
  Field& operator*=(double s) {
    values_ *= s;
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }
  friend Field operator-(Field a) { return a *= -1.0; }

  double max_abs() const { return values_.size() ? values_.cwiseAbs().maxCoeff() : 0.0; }

  void check_same(const Field& o) const {
    if (!(grid_ == o.grid_)) throw InvalidArgument("fields live on different grids");
  }

 private:
  Grid grid_;
  Vector values_;
};

/// h^d * sum_j f_j g_j
inline double inner_product(const Field& f, const Field& g) {
  f.check_same(g);
  return f.grid().cell_volume() * f.values().dot(g.values());
}

inline double norm(const Field& f) { return std::sqrt(inner_product(f, f)); }

}  // namespace nlheat
