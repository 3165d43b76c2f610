#pragma once

// Monte Carlo sampling of the driving noise and of the full SDE
//   dX = b(X) dt + noise,
// where the noise is either sqrt(eps) sigma dB or eps times a compensated
// compound Poisson process with jump measure nu / eps.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

#include "instanton/dynamics.hpp"
#include "instanton/levy_measure.hpp"
#include "instanton/path.hpp"

namespace instanton {

struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian;
  double epsilon = 0.1;
  levy::LevyMeasureSpec levy;
  /// Gaussian only; empty means the identity.
  DiffusionField diffusion;

  /// Throws ConfigError on eps < 0 or a dimension mismatch.
  void validate(int dimension) const;
};

struct JumpRecord {
  /// Sorted jump times in [0, T].
  Vector times;
  /// d x n jump sizes, already multiplied by eps.
  Matrix sizes;

  Vector sum() const;
};

/// Jumps of eps * L on [0, T]: exponential waiting times with rate
/// nu(R^d) / eps and sizes eps * z with z ~ nu / nu(R^d). eps = 0 gives no jumps.
JumpRecord sample_levy_increments(const levy::LevyMeasureSpec& spec, double epsilon, double horizon,
                                  std::mt19937_64& rng);

struct MsdEstimate {
  double value = 0;
  double standard_error = 0;
  /// K eps T with the full-space K.
  double expected = 0;

  double z_score() const;
};

/// Monte Carlo mean of |eps L_T|^2 over independent trials.
MsdEstimate estimate_msd(const levy::LevyMeasureSpec& spec, double epsilon, double horizon, std::int64_t trials,
                         std::uint64_t seed);

struct SimulationSettings {
  double horizon = 1.0;
  double dt = 1e-2;
  int trials = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Keep every k-th grid point of each trajectory.
  int record_stride = 1;

  void validate() const;
};

/// States beyond this norm count as a blow-up.
inline constexpr double kBlowUpNorm = 1e6;

struct TrajectoryBatch {
  /// Shared recorded time grid.
  Vector times;
  /// One d x times.size() matrix per trial; columns after a blow-up are NaN.
  std::vector<Matrix> states;
  std::vector<std::uint64_t> seeds;
  std::vector<bool> blown_up;
  /// d x trials states at the final time (NaN after a blow-up).
  Matrix terminal;

  int trials() const noexcept { return static_cast<int>(states.size()); }
  Path trajectory(int trial) const;
};

/// Euler steps of length dt; Levy jumps land at their exact times inside a
/// step. Trial i uses the seed derive_seed(seed, i), so the batch does not
/// depend on the thread count.
TrajectoryBatch sample_sde(const DriftField& drift, const Vector& x0, const NoiseModel& noise,
                           const SimulationSettings& settings);

enum class TubeMetric {
  /// sup_t |X_t - phi(t)| with phi interpolated in time.
  time_aligned,
  /// sup_t dist(X_t, curve of phi), ignoring parametrisation.
  geometric,
};

/// Whether every state of `trajectory` lies within `width` of `reference`.
bool inside_tube(const Path& trajectory, const Path& reference, double width, TubeMetric metric);
/// Fraction of trials inside the tube; blown-up trials count as outside.
double tube_fraction(const TrajectoryBatch& batch, const Path& reference, double width,
                     TubeMetric metric = TubeMetric::time_aligned);

struct TransitionSettings {
  Vector source;
  Vector target;
  /// Radius of the balls around source and target.
  double radius = 0.2;
  /// A trial is inside the tube if its transition segment stays within
  /// `tube_width` of any of these curves.
  std::vector<Path> references;
  double tube_width = 0.3;
};

struct TrialSummary {
  int trial = 0;
  bool transition = false;
  bool tube = false;
  bool blown_up = false;
  Vector terminal;
};

/// Streams trials without storing them. The transition segment runs from the
/// last visit of the source ball to the first entry into the target ball; its
/// distance to the references uses the geometric metric.
std::vector<TrialSummary> transition_summaries(const DriftField& drift, const NoiseModel& noise,
                                               const SimulationSettings& settings,
                                               const TransitionSettings& transition);

}  // namespace instanton
