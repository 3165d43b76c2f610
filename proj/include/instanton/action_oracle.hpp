#pragma once

// Direct collocation minimizers of the Gaussian and Levy actions on a fixed
// uniform time grid.

#include <vector>

#include "instanton/dynamics.hpp"
#include "instanton/levy_measure.hpp"
#include "instanton/path.hpp"

namespace instanton {

struct CollocationSettings {
  /// Nodes including both pinned end points.
  int nodes = 100;
  int iterations = 200000;
  double learning_rate = 1e-3;
  /// Stop once the relative action change over `check_every` steps is below this.
  double tolerance = 1e-7;
  int check_every = 1000;
  /// Learning-rate factor applied whenever a check finds no decrease.
  double plateau_decay = 0.5;
  /// Amplitude of the sin(pi s) bump added to the second coordinate of the
  /// initial straight segment.
  double perturbation = 1e-3;

  /// Throws ConfigError on N < 8 or non-positive step settings.
  void validate() const;
};

/// 1/2 int (phi' - b)^T a^{-1} (phi' - b) dt, a = sigma sigma^T, summed over
/// intervals with the forward-difference velocity and b at the midpoint.
/// Throws NumericalError if a is singular.
double gaussian_action(const Path& path, const DriftField& drift, const DiffusionField& diffusion);
/// Same, plus d(action)/d(states) into `gradient` (d x n).
double gaussian_action(const Path& path, const DriftField& drift, const DiffusionField& diffusion,
                       Matrix& gradient);

struct OracleResult {
  Path path;
  double action = 0;
  int iterations = 0;
  bool converged = false;
  /// (iteration, action) at every convergence check.
  std::vector<std::pair<int, double>> history;
};

/// Adam over the interior nodes, end points pinned to x1, x2, started from
/// the perturbed straight segment (or `initial` when given).
OracleResult minimize_gaussian_action(const ControlProblem& problem, const CollocationSettings& settings,
                                      const Path* initial = nullptr);

/// inf over controls of the Levy running cost at velocity v.
double levy_local_cost(const levy::QuadratureGrid& grid, const Vector& v);

/// sum_j dt_j L(v_j), v_j = (x_{j+1} - x_j)/dt_j - b((x_j + x_{j+1})/2). `theta` receives the
/// maximizing tilt per interval (d x (n-1)), `gradient` d(action)/d(states).
/// `warm` optionally seeds the Newton solves. Throws RangeError naming the
/// interval when a velocity cannot be reached on the grid.
double levy_action(const Path& path, const DriftField& drift, const levy::QuadratureGrid& grid, Matrix* theta = nullptr,
                   Matrix* gradient = nullptr, const Matrix* warm = nullptr);

struct LevyOracleResult {
  Path path;
  /// d x (N-1) tilt vectors, one per interval.
  Matrix theta;
  double action = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::pair<int, double>> history;
};

LevyOracleResult minimize_levy_action(const ControlProblem& problem, const CollocationSettings& settings,
                                      const Path* initial = nullptr);

}  // namespace instanton
