#include <iostream>

#include "CLI11.hpp"
#include "instanton/experiment.hpp"

using namespace instanton::experiment;

int main(int argc, char** argv) {
  CLI::App app{"Most likely transition paths for SDEs with Gaussian or Levy noise"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::string config, out;
  std::uint64_t seed = 0;
  app.add_option("--config", config, "Experiment config (JSON)");
  app.add_option("--out", out, "Output directory (overrides the config)");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--threads", g.threads, "Worker threads for the simulator")->check(CLI::PositiveNumber);
  app.add_flag("--paper-scale", g.paper_scale, "Use the config's paper-scale settings");

  auto* train = app.add_subcommand("train", "Train the state and control networks");
  std::string resume;
  train->add_option("--resume", resume, "Continue from a checkpoint");

  app.add_subcommand("oracle", "Minimize the discretized action directly");

  auto* compare = app.add_subcommand("compare", "Distances between two path CSV files");
  std::string path_a, path_b;
  compare->add_option("a", path_a)->required();
  compare->add_option("b", path_b)->required();

  app.add_subcommand("simulate", "Monte Carlo trajectories and noise statistics");

  auto* figure = app.add_subcommand("export-figure", "Write an SVG figure");
  FigureOptions f;
  std::string checkpoint, history, rates, output;
  double time = 0;
  figure->add_option("--kind", f.kind, "paths, heatmap, history or rates")
      ->check(CLI::IsMember({"paths", "heatmap", "history", "rates"}));
  figure->add_option("--path", f.paths, "Path CSV, optionally FILE=LABEL");
  figure->add_option("--drift", f.drift, "Drift for the streamline background");
  figure->add_option("--param", f.params, "Drift parameter NAME=VALUE");
  figure->add_option("--checkpoint", checkpoint, "Checkpoint for a heat map");
  auto* time_opt = figure->add_option("--time", time, "Time of the heat map");
  figure->add_option("--history", history, "History CSV");
  figure->add_option("--rates", rates, "Rate table CSV");
  figure->add_option("--title", f.title);
  figure->add_option("-o,--output", output, "SVG file (relative to --out when given)");

  app.add_subcommand("validate-config", "Check a config and print its summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigFailure;
  }

  g.config = config;
  if (!out.empty()) g.out = out;
  if (seed_opt->count() > 0) g.seed = seed;
  f.checkpoint = checkpoint;
  f.history = history;
  f.rates = rates;
  f.output = output;
  if (time_opt->count() > 0) f.time = time;

  return run_guarded(
      [&]() -> int {
        if (train->parsed()) {
          return cmd_train(g, std::cout, resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume));
        }
        if (app.got_subcommand("oracle")) return cmd_oracle(g, std::cout);
        if (compare->parsed()) return cmd_compare(g, path_a, path_b, std::cout);
        if (app.got_subcommand("simulate")) return cmd_simulate(g, std::cout);
        if (figure->parsed()) return cmd_export_figure(g, f, std::cout);
        return cmd_validate_config(g, std::cout);
      },
      std::cerr);
}
