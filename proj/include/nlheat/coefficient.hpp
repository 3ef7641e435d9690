#pragma once

#include <functional>
#include <string>

#include "nlheat/error.hpp"
#include "nlheat/grid.hpp"

namespace nlheat {

/// Scalar diffusion coefficient a(x) of -div(a grad u) with declared bounds
/// 0 < a_min <= a(x) <= a_max.
class Coefficient {
 public:
  static Coefficient constant(double value) {
    if (!(value > 0.0))
      throw InvalidArgument("constant coefficient must be positive");
    Coefficient c;
    c.constant_ = true;
    c.a_min_ = c.a_max_ = value;
    c.fn_ = [value](const Point&) { return value; };
    return c;
  }

  static Coefficient function(std::function<double(const Point&)> fn, double a_min,
                              double a_max) {
    if (!(a_min > 0.0) || !(a_max >= a_min))
      throw InvalidArgument("coefficient bounds must satisfy 0 < a_min <= a_max");
    Coefficient c;
    c.constant_ = false;
    c.a_min_ = a_min;
    c.a_max_ = a_max;
    c.fn_ = std::move(fn);
    return c;
  }

  bool is_constant() const noexcept { return constant_; }
  double a_min() const noexcept { return a_min_; }
  double a_max() const noexcept { return a_max_; }

  /// Evaluates a(x) and checks the declared bounds.
  double operator()(const Point& x) const {
    const double v = fn_(x);
    if (!(v > 0.0))
      throw InvalidArgument("non-positive coefficient sample " + std::to_string(v));
    if (v < a_min_ * (1.0 - 1e-14) || v > a_max_ * (1.0 + 1e-14))
      throw InvalidArgument("coefficient sample " + std::to_string(v) +
                            " outside declared bounds");
    return v;
  }

 private:
  Coefficient() = default;

  bool constant_ = true;
  double a_min_ = 1.0;
  double a_max_ = 1.0;
  std::function<double(const Point&)> fn_;
};

}  // namespace nlheat
