#pragma once

// Penalized optimal-control solver: networks for the state phi(t) and the
// control g, trained jointly with Adam.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "instanton/autodiff/adam.hpp"
#include "instanton/autodiff/checkpoint.hpp"
#include "instanton/autodiff/network.hpp"
#include "instanton/dynamics.hpp"
#include "instanton/levy_measure.hpp"
#include "instanton/path.hpp"

namespace instanton {

struct SolverConfig {
  std::vector<int> phi_layers;
  std::vector<int> g_layers;
  ad::OutputTransform g_transform = ad::OutputTransform::identity;
  std::int64_t iterations = 200000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// Only "uniform_deterministic" is implemented.
  std::string residual_scheme = "uniform_deterministic";
  /// Alternate phi and g updates instead of one joint step.
  bool alternate = false;
  int record_every = 100;
  std::int64_t checkpoint_every = 10000;

  /// phi [1,20,20,d]; Gaussian g [1,128,128,128,m], Levy g [1+d,20,20,1]
  /// with a clamped exponential output.
  static SolverConfig defaults(const ControlProblem& problem);
  /// Throws ConfigError if the layer shapes do not fit the problem.
  void validate(const ControlProblem& problem) const;
};

/// t_i = (i-1) T/(N_T - 1), i = 1..N_T.
Vector residual_times(double horizon, int count);

struct LossValue {
  double loss_phi = 0;
  double loss_g = 0;
  double total = 0;
};

/// The loss graph of one problem, recorded once and replayed after every
/// parameter update. The networks are referenced, not copied.
class LossGraph {
 public:
  LossGraph(const ControlProblem& problem, const ad::FeedForwardNet& phi, const ad::FeedForwardNet& g);
  LossGraph(const LossGraph&) = delete;
  LossGraph& operator=(const LossGraph&) = delete;
  ~LossGraph();

  /// Re-reads the network parameters and evaluates.
  LossValue evaluate();
  /// Also fills d(total)/d[phi params; g params].
  LossValue evaluate(Vector& gradient);

  const levy::QuadratureGrid* grid() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

LossValue gaussian_loss(const ad::FeedForwardNet& phi, const ad::FeedForwardNet& g, const ControlProblem& problem);
LossValue levy_loss(const ad::FeedForwardNet& phi, const ad::FeedForwardNet& g, const levy::QuadratureGrid& grid,
                    const ControlProblem& problem);

struct TrainRecord {
  std::int64_t iteration = 0;
  double loss_phi = 0;
  double loss_g = 0;
  double total = 0;
  double seconds = 0;
};

struct TrainResult {
  ad::FeedForwardNet phi;
  ad::FeedForwardNet g;
  std::vector<TrainRecord> history;
  ad::AdamState optimizer;
  /// Alternating mode keeps a second state for the g parameters.
  std::optional<ad::AdamState> g_optimizer;
  std::int64_t iteration = 0;
};

struct TrainHooks {
  /// Called every `checkpoint_every` iterations with the state so far.
  std::function<void(const ad::Checkpoint&)> checkpoint;
  /// Called after each history record.
  std::function<void(const TrainRecord&)> progress;
};

/// Initial networks for a problem (phi seeded from config.seed, g from a
/// derived stream).
TrainResult initial_state(const ControlProblem& problem, const SolverConfig& config);

/// Runs Adam from `start` (or from fresh networks) until `config.iterations`
/// total iterations. Records every `record_every` iterations plus a final
/// record. Throws NumericalError on a non-finite loss.
TrainResult train(const ControlProblem& problem, const SolverConfig& config, const TrainHooks& hooks = {},
                  std::optional<TrainResult> start = std::nullopt);

ad::Checkpoint to_checkpoint(const TrainResult& state);
TrainResult from_checkpoint(const ad::Checkpoint& c);

/// phi evaluated at the given times (network input t/T).
Path extract_path(const ad::FeedForwardNet& phi, const Vector& times, double horizon);

struct RateReport {
  /// (T/N_T) sum_i cost(t_i), the time integral of the running cost.
  double rate = 0;
  /// (1/N_T) sum_i cost(t_i), the bare mean over residual points.
  double mean_cost = 0;
  Vector times;
  Vector profile;
  double start_residual = 0;
  double end_residual = 0;
};

RateReport evaluate_rate(const ad::FeedForwardNet& phi, const ad::FeedForwardNet& g, const ControlProblem& problem);

/// Least-squares fit of ln g(t, z) against (1, z) over nodes with |z| <= radius.
struct TiltFit {
  Vector theta;
  double intercept = 0;
  double r_squared = 0;
};
TiltFit fit_exponential_tilt(const ad::FeedForwardNet& g, const levy::QuadratureGrid& grid, double t, double horizon,
                             double radius = 2.0);

/// Per-node running-cost integrand w_k (g ln g - g + 1) at time t.
Vector running_cost_integrand_at(const ad::FeedForwardNet& g, const levy::QuadratureGrid& grid, double t,
                                 double horizon);

}  // namespace instanton
