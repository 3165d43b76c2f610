#pragma once

// Declarative experiment configs, run manifests, figure export and the
// command implementations behind the `instanton` executable.

#include <cstdint>
#include <functional>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "instanton/action_oracle.hpp"
#include "instanton/dynamics.hpp"
#include "instanton/path.hpp"
#include "instanton/simulator.hpp"
#include "instanton/solver.hpp"

namespace instanton::experiment {

using nlohmann::json;

struct SimulateBlock {
  double epsilon = 0.1;
  double dt = 0.01;
  double horizon = 1.0;
  int trials = 1000;
  double radius = 0.2;
  double tube_width = 0.3;
  /// Reference path CSV for the tube test; empty means the straight segment x1 -> x2.
  std::string reference;
  /// Trials for the MSD estimate of the Levy noise (0 = skip).
  std::int64_t msd_trials = 0;
  bool dump_trajectories = false;
  int record_stride = 1;
};

struct ExperimentConfig {
  std::string name;
  std::string description;
  /// "seconds", "minutes" or "hours".
  std::string runtime_class;
  std::uint64_t seed = 0;
  std::filesystem::path output;

  ControlProblem problem;
  /// Horizons to run; one entry unless the config gives a T list.
  std::vector<double> horizons;
  SolverConfig solver;
  CollocationSettings oracle;
  std::optional<SimulateBlock> simulate;

  /// The resolved document (paper-scale overrides applied).
  json snapshot;

  /// problem with horizon = T.
  ControlProblem problem_at(double horizon) const;
};

/// Deep merge of `patch` into `base`; objects merge key by key, anything else replaces.
json merge(json base, const json& patch);

/// Parses and validates a config document. `paper_scale` applies the
/// document's "paper_scale" overrides first. Throws ConfigError naming the field.
ExperimentConfig parse_config(const json& document, bool paper_scale = false);
ExperimentConfig load_config(const std::filesystem::path& file, bool paper_scale = false);

/// Git-style blob hash: SHA-1 of "blob <n>\0" followed by the canonical dump.
std::string content_hash(const json& document);

/// Status file written when a run starts and rewritten on every change.
class RunManifest {
 public:
  RunManifest(std::filesystem::path directory, std::string command, const json& config, std::uint64_t seed);
  ~RunManifest();
  RunManifest(const RunManifest&) = delete;
  RunManifest& operator=(const RunManifest&) = delete;

  void begin_stage(const std::string& name);
  void end_stage(const std::string& status = "succeeded");
  /// Path relative to the run directory.
  void add_artifact(const std::filesystem::path& file);
  void finish(const std::string& status, const std::string& error = "");

  const json& document() const noexcept { return doc_; }
  std::filesystem::path file() const { return dir_ / "manifest.json"; }

 private:
  void write() const;

  std::filesystem::path dir_;
  json doc_;
  bool finished_ = false;
};

// ---- CSV writers ------------------------------------------------------------

void write_history_csv(std::ostream& out, const std::vector<TrainRecord>& history);
std::vector<TrainRecord> read_history_csv(std::istream& in);

// ---- figures ----------------------------------------------------------------

struct LabeledPath {
  Path path;
  std::string label;
};

/// Paths over grey streamlines of `drift` (if given) with one legend entry per path.
std::string paths_svg(const std::vector<LabeledPath>& paths, const DriftField* drift, const std::string& title = "");
/// Streamlines from a 12 x 12 seed lattice on [-2, 2]^2, RK4 with step 0.01 and 400 steps.
std::vector<Path> streamlines(const DriftField& drift);

/// n x n cell values over [-R, R]^2, downsampled by block maxima to at most
/// 101 x 101 cells. The title attribute carries the largest cell value.
std::string heatmap_svg(const Matrix& values, double half_width, const std::string& title = "");
/// Loss curves on a log axis.
std::string history_svg(const std::vector<TrainRecord>& history, const std::string& title = "");
/// Rate against horizon.
std::string rate_table_svg(const std::vector<std::pair<double, double>>& rates, const std::string& title = "");

/// (g ln g - g + 1) exp(-|z|^gamma) on the grid nodes at time t, reshaped to
/// points_per_axis^2 (2-d grids only).
Matrix running_cost_density(const ad::FeedForwardNet& g, const levy::QuadratureGrid& grid, double t, double horizon);

// ---- commands -----------------------------------------------------------------

enum ExitCode : int { kSuccess = 0, kFailure = 1, kConfigFailure = 2, kNumericalFailure = 3 };

struct GlobalOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool paper_scale = false;
};

struct FigureOptions {
  /// "paths", "heatmap", "history" or "rates".
  std::string kind = "paths";
  std::vector<std::string> paths;
  std::string drift;
  std::vector<std::string> params;
  std::filesystem::path checkpoint;
  std::filesystem::path history;
  std::filesystem::path rates;
  std::optional<double> time;
  std::string title;
  std::filesystem::path output;
};

/// Each command prints a short report to `log` and returns an ExitCode.
/// Errors are mapped to exit codes by run_guarded.
int cmd_train(const GlobalOptions& g, std::ostream& log, const std::optional<std::filesystem::path>& resume = {});
int cmd_oracle(const GlobalOptions& g, std::ostream& log);
int cmd_compare(const GlobalOptions& g, const std::filesystem::path& a, const std::filesystem::path& b,
                std::ostream& log);
int cmd_simulate(const GlobalOptions& g, std::ostream& log);
int cmd_export_figure(const GlobalOptions& g, const FigureOptions& f, std::ostream& log);
int cmd_validate_config(const GlobalOptions& g, std::ostream& log);

/// Runs `body`, printing errors to `err` and translating them to exit codes:
/// ConfigError/ParseError -> 2, NumericalError/AdmissibilityError/RangeError -> 3.
int run_guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace instanton::experiment
