#pragma once

// Jump measure nu(dz) = exp(-|z|^gamma) dz on a truncated tensor grid, and
// the integral functionals built on it.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>

#include "instanton/errors.hpp"

namespace instanton::levy {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LevyMeasureSpec {
  double gamma = 2.0;
  int dimension = 2;

  /// Throws ConfigError unless gamma > 1 and 1 <= dimension <= 3.
  void validate() const;
  double density(const Eigen::Ref<const Vector>& z) const;
};

/// nu(R^d) in closed form.
double analytic_total_mass(const LevyMeasureSpec& spec);
/// int |z|^2 nu(dz) over R^d in closed form.
double analytic_msd_constant(const LevyMeasureSpec& spec);

/// Tensor-product trapezoid rule on [-R, R]^d with the measure density folded
/// into the weights. Nodes are stored column-wise with the first coordinate
/// varying fastest, so node K-1-k is the mirror image -z_k of node k.
class QuadratureGrid {
 public:
  QuadratureGrid() = default;

  const LevyMeasureSpec& spec() const noexcept { return spec_; }
  int dimension() const noexcept { return spec_.dimension; }
  double half_width() const noexcept { return half_width_; }
  double mesh() const noexcept { return mesh_; }
  /// Points per axis.
  Eigen::Index points_per_axis() const noexcept { return per_axis_; }
  Eigen::Index size() const noexcept { return weights_.size(); }

  /// d x K node coordinates.
  const Matrix& nodes() const noexcept { return nodes_; }
  /// K x d, the transpose of nodes(); contiguous per coordinate.
  const Matrix& coordinates() const noexcept { return coordinates_; }
  /// K weights, trapezoid weight times exp(-|z|^gamma).
  const Vector& weights() const noexcept { return weights_; }
  Eigen::Index mirror(Eigen::Index k) const noexcept { return size() - 1 - k; }

 private:
  friend QuadratureGrid build_grid(const LevyMeasureSpec&, double, double);

  LevyMeasureSpec spec_;
  double half_width_ = 0;
  double mesh_ = 0;
  Eigen::Index per_axis_ = 0;
  Matrix nodes_;
  Matrix coordinates_;
  Vector weights_;
};

/// Node count per axis is floor(2R/delta) + 1, centred on the origin.
QuadratureGrid build_grid(const LevyMeasureSpec& spec, double half_width, double mesh);

double total_mass(const QuadratureGrid& grid);

/// sum_k w_k (g_k ln g_k - g_k + 1). Throws AdmissibilityError if any g_k <= 0.
double running_cost(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& g);
/// sum_k w_k (g_k - 1) z_k.
Vector drift_correction(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& g);

/// Per-node integrand (g ln g - g + 1) * w_k, e.g. for heat maps.
Vector running_cost_integrand(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& g);

/// Exponential tilt exp(theta . z_k) at every node.
Vector exponential_tilt(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta);

/// H(theta) = sum_k w_k (exp(theta . z_k) - 1 - theta . z_k).
double cumulant(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta);
Vector cumulant_gradient(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta);
Matrix cumulant_hessian(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta);

/// Exponents theta . z are clamped at this value before exponentiation.
inline constexpr double kMaxExponent = 700.0;

struct LegendreOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
};

struct LegendreResult {
  Vector theta;
  /// sup_theta (theta . v - H(theta)).
  double local_cost = 0;
  int iterations = 0;
};

/// Solves grad H(theta) = v by damped Newton on the dual objective
/// H(theta) - theta . v. Starts from `start` when given, otherwise theta = 0.
LegendreResult legendre(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& v,
                        const LegendreOptions& options = {}, const Vector* start = nullptr);

/// K = sum_k w_k |z_k|^2.
double msd_constant(const QuadratureGrid& grid);

/// Error estimate for the box truncation: analytic full-space mass minus the
/// grid mass.
double truncation_mass_deficit(const QuadratureGrid& grid);

// ---- sampling from nu / nu(R^d) -------------------------------------------

/// One jump size. |z|^gamma ~ Gamma(d/gamma, 1) and the direction is uniform.
Vector sample_jump(const LevyMeasureSpec& spec, std::mt19937_64& rng);

struct MonteCarloEstimate {
  double value = 0;
  double standard_error = 0;
};

/// int f dnu over R^d by sampling jumps, i.e. importance sampling with
/// density proportional to exp(-|z|^gamma). For spot checks only.
MonteCarloEstimate monte_carlo_integral(const LevyMeasureSpec& spec, const std::function<double(const Vector&)>& f,
                                        std::int64_t samples, std::uint64_t seed);

}  // namespace instanton::levy
