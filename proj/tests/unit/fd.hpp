#pragma once

// Finite-difference helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace testing {

inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of f along coordinate i of x.
inline double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                 Eigen::Index i, double h = 1e-5) {
  const double x0 = x(i);
  x(i) = x0 + h;
  const double fp = f(x);
  x(i) = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2 * h);
}

}  // namespace testing
