#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "instanton/autodiff/checkpoint.hpp"
#include "instanton/experiment.hpp"
#include "instanton/rng.hpp"

namespace instanton::experiment {

namespace fs = std::filesystem;

namespace {

ExperimentConfig load(const GlobalOptions& g) {
  if (g.config.empty()) throw ConfigError("config", "--config is required for this command");
  if (g.threads < 1) throw ConfigError("threads", "need at least one thread");
  ExperimentConfig c = load_config(g.config, g.paper_scale);
  if (g.seed) {
    c.seed = *g.seed;
    c.solver.seed = *g.seed;
    c.snapshot["seed"] = *g.seed;
  }
  return c;
}

fs::path run_dir(const GlobalOptions& g, const ExperimentConfig& c) { return g.out ? *g.out : c.output; }

std::string horizon_tag(double t) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "T_%g", t);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(RunManifest& m, const fs::path& dir, const fs::path& rel, const std::string& content) {
  const fs::path file = dir / rel;
  fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << content;
  out.close();
  m.add_artifact(rel);
}

void write_json(RunManifest& m, const fs::path& dir, const fs::path& rel, const json& j) {
  write_file(m, dir, rel, j.dump(2) + "\n");
}

std::string path_csv(const Path& p) {
  std::ostringstream s;
  write_path_csv(s, p);
  return s.str();
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

template <class Body>
int within(RunManifest& m, Body&& body) {
  try {
    const int rc = body();
    m.finish(rc == kSuccess ? "succeeded" : "failed");
    return rc;
  } catch (const std::exception& e) {
    m.finish("failed", e.what());
    throw;
  }
}

std::string rate_table(const std::vector<std::pair<double, double>>& rows, const char* column) {
  std::ostringstream s;
  s << "T," << column << "\n";
  for (const auto& [t, r] : rows) s << fmt(t) << ',' << fmt(r) << "\n";
  return s.str();
}

}  // namespace

int cmd_train(const GlobalOptions& g, std::ostream& log, const std::optional<fs::path>& resume) {
  const ExperimentConfig c = load(g);
  if (resume && c.horizons.size() != 1) throw ConfigError("resume", "resuming needs a single horizon");
  std::optional<TrainResult> start;
  if (resume) start = from_checkpoint(ad::load_checkpoint(*resume));
  const fs::path dir = run_dir(g, c);
  RunManifest m(dir, "train", c.snapshot, c.seed);
  return within(m, [&] {
    std::vector<std::pair<double, double>> rates;
    for (double horizon : c.horizons) {
      const fs::path sub = c.horizons.size() > 1 ? fs::path(horizon_tag(horizon)) : fs::path();
      const ControlProblem p = c.problem_at(horizon);
      m.begin_stage("train " + horizon_tag(horizon));
      TrainHooks hooks;
      hooks.checkpoint = [&](const ad::Checkpoint& ck) {
        write_file(m, dir, sub / "checkpoint.json", ad::checkpoint_to_json(ck).dump() + "\n");
      };
      const std::int64_t every = std::max<std::int64_t>(c.solver.record_every, c.solver.iterations / 10);
      hooks.progress = [&](const TrainRecord& r) {
        if (r.iteration % every == 0) {
          log << horizon_tag(horizon) << " iteration " << r.iteration << " loss_phi " << r.loss_phi << " loss_g "
              << r.loss_g << " total " << r.total << " (" << r.seconds << " s)\n";
        }
      };
      const TrainResult r = train(p, c.solver, hooks, start);
      start.reset();

      write_file(m, dir, sub / "path.csv", path_csv(extract_path(r.phi, residual_times(horizon, p.residual_count), horizon)));
      std::ostringstream history;
      write_history_csv(history, r.history);
      write_file(m, dir, sub / "history.csv", history.str());
      write_file(m, dir, sub / "checkpoint.json", ad::checkpoint_to_json(to_checkpoint(r)).dump() + "\n");

      const RateReport rep = evaluate_rate(r.phi, r.g, p);
      json rate{{"T", horizon},
                {"noise", to_string(p.noise)},
                {"rate", rep.rate},
                {"mean_cost", rep.mean_cost},
                {"start_residual", rep.start_residual},
                {"end_residual", rep.end_residual},
                {"iterations", r.iteration},
                {"times", to_json(rep.times)},
                {"profile", to_json(rep.profile)}};
      if (!r.history.empty()) {
        rate["loss_phi"] = r.history.back().loss_phi;
        rate["loss_g"] = r.history.back().loss_g;
        rate["total"] = r.history.back().total;
      }
      if (p.noise == NoiseKind::levy && p.dimension() == 2) {
        Eigen::Index peak = 0;
        rep.profile.maxCoeff(&peak);
        const Matrix density = running_cost_density(r.g, p.grid(), rep.times(peak), horizon);
        rate["integrand_peak_time"] = rep.times(peak);
        rate["integrand_peak_value"] = density.maxCoeff();
      }
      write_json(m, dir, sub / "rate.json", rate);
      log << horizon_tag(horizon) << " rate " << rep.rate << "\n";
      rates.emplace_back(horizon, rep.rate);
      m.end_stage();
    }
    if (c.horizons.size() > 1) {
      write_file(m, dir, "rate_vs_T.csv", rate_table(rates, "rate"));
      write_file(m, dir, "rate_vs_T.svg", rate_table_svg(rates, c.name + ": rate against T"));
    }
    return int(kSuccess);
  });
}

int cmd_oracle(const GlobalOptions& g, std::ostream& log) {
  const ExperimentConfig c = load(g);
  const fs::path dir = run_dir(g, c);
  RunManifest m(dir, "oracle", c.snapshot, c.seed);
  return within(m, [&] {
    std::vector<std::pair<double, double>> actions;
    for (double horizon : c.horizons) {
      const fs::path sub = c.horizons.size() > 1 ? fs::path(horizon_tag(horizon)) : fs::path();
      const ControlProblem p = c.problem_at(horizon);
      m.begin_stage("oracle " + horizon_tag(horizon));
      json report{{"T", horizon}, {"noise", to_string(p.noise)}, {"N", c.oracle.nodes}};
      Path path;
      double action = 0;
      if (p.noise == NoiseKind::gaussian) {
        const OracleResult r = minimize_gaussian_action(p, c.oracle);
        path = r.path;
        action = r.action;
        report["iterations"] = r.iterations;
        report["converged"] = r.converged;
      } else {
        const LevyOracleResult r = minimize_levy_action(p, c.oracle);
        path = r.path;
        action = r.action;
        report["iterations"] = r.iterations;
        report["converged"] = r.converged;
        json theta = json::array();
        for (Eigen::Index j = 0; j < r.theta.cols(); ++j) theta.push_back(to_json(r.theta.col(j)));
        report["theta"] = theta;
      }
      report["action"] = action;
      write_file(m, dir, sub / "oracle_path.csv", path_csv(path));
      write_json(m, dir, sub / "action.json", report);
      log << horizon_tag(horizon) << " action " << action << (report["converged"].get<bool>() ? "" : " (not converged)")
          << "\n";
      actions.emplace_back(horizon, action);
      m.end_stage();
    }
    if (c.horizons.size() > 1) {
      write_file(m, dir, "oracle_rate_vs_T.csv", rate_table(actions, "action"));
      write_file(m, dir, "oracle_rate_vs_T.svg", rate_table_svg(actions, c.name + ": oracle action against T"));
    }
    return int(kSuccess);
  });
}

int cmd_compare(const GlobalOptions& g, const fs::path& a, const fs::path& b, std::ostream& log) {
  const Path pa = read_path_csv(a);
  const Path pb = read_path_csv(b);
  if (pa.dimension() != pb.dimension()) throw ConfigError("paths", "the two paths differ in dimension");
  const json report{{"a", a.string()},
                    {"b", b.string()},
                    {"hausdorff", hausdorff_distance(pa, pb)},
                    {"mean_distance", mean_resampled_distance(pa, pb, 200)},
                    {"resample_points", 200}};
  log << report.dump(2) << "\n";
  if (g.out) {
    RunManifest m(*g.out, "compare", json{{"a", a.string()}, {"b", b.string()}}, 0);
    return within(m, [&] {
      write_json(m, *g.out, "compare.json", report);
      return int(kSuccess);
    });
  }
  return kSuccess;
}

int cmd_simulate(const GlobalOptions& g, std::ostream& log) {
  const ExperimentConfig c = load(g);
  if (!c.simulate) throw ConfigError("simulate", "this config has no simulate block");
  const SimulateBlock& sb = *c.simulate;
  const fs::path dir = run_dir(g, c);
  RunManifest m(dir, "simulate", c.snapshot, c.seed);
  return within(m, [&] {
    const ControlProblem& p = c.problem;
    const int d = p.dimension();
    NoiseModel noise;
    noise.kind = p.noise;
    noise.epsilon = sb.epsilon;
    noise.levy = p.levy;
    if (p.noise == NoiseKind::gaussian) noise.diffusion = p.diffusion;
    SimulationSettings s;
    s.horizon = sb.horizon;
    s.dt = sb.dt;
    s.trials = sb.trials;
    s.seed = c.seed;
    s.threads = g.threads;
    s.record_stride = sb.record_stride;
    TransitionSettings t;
    t.source = p.x1;
    t.target = p.x2;
    t.radius = sb.radius;
    t.tube_width = sb.tube_width;
    t.references = {sb.reference.empty() ? straight_path(p.x1, p.x2, 1.0, 2) : read_path_csv(fs::path(sb.reference))};

    m.begin_stage("trajectories");
    const auto summaries = transition_summaries(p.drift, noise, s, t);
    std::ostringstream csv;
    csv << "trial,transition_flag,tube_flag";
    if (d == 2) {
      csv << ",terminal_x,terminal_y";
    } else {
      for (int k = 1; k <= d; ++k) csv << ",terminal_x" << k;
    }
    csv << "\n";
    int transitions = 0, tubes = 0, blown = 0;
    for (const auto& r : summaries) {
      csv << r.trial << ',' << int(r.transition) << ',' << int(r.tube);
      for (int k = 0; k < d; ++k) csv << ',' << fmt(r.terminal(k));
      csv << "\n";
      transitions += r.transition;
      tubes += r.tube;
      blown += r.blown_up;
    }
    write_file(m, dir, "batch.csv", csv.str());
    json summary{{"trials", sb.trials},
                 {"transitions", transitions},
                 {"inside_tube", tubes},
                 {"blown_up", blown},
                 {"tube_fraction_of_transitions", transitions ? double(tubes) / transitions : 0.0},
                 {"epsilon", sb.epsilon},
                 {"T", sb.horizon},
                 {"dt", sb.dt}};
    write_json(m, dir, "summary.json", summary);
    log << "transitions " << transitions << " of " << sb.trials << ", inside tube " << tubes << "\n";
    if (sb.dump_trajectories) {
      const TrajectoryBatch batch = sample_sde(p.drift, p.x1, noise, s);
      std::ostringstream traj;
      traj << "trial,t";
      for (int k = 1; k <= d; ++k) traj << ",x" << k;
      traj << "\n";
      for (int i = 0; i < batch.trials(); ++i) {
        const Matrix& st = batch.states[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < batch.times.size(); ++j) {
          traj << i << ',' << fmt(batch.times(j));
          for (int k = 0; k < d; ++k) traj << ',' << fmt(st(k, j));
          traj << "\n";
        }
      }
      write_file(m, dir, "trajectories.csv", traj.str());
    }
    m.end_stage();

    if (sb.msd_trials > 0) {
      m.begin_stage("msd");
      const MsdEstimate e = estimate_msd(p.levy, sb.epsilon, sb.horizon, sb.msd_trials, derive_seed(c.seed, 1));
      const json msd{{"K", levy::analytic_msd_constant(p.levy)},
                     {"gamma", p.levy.gamma},
                     {"epsilon", sb.epsilon},
                     {"T", sb.horizon},
                     {"trials", sb.msd_trials},
                     {"expected", e.expected},
                     {"estimate", e.value},
                     {"standard_error", e.standard_error},
                     {"z_score", e.z_score()}};
      write_json(m, dir, "msd.json", msd);
      log << "msd estimate " << e.value << " +- " << e.standard_error << ", expected " << e.expected << ", z "
          << e.z_score() << "\n";
      m.end_stage();
    }
    return int(kSuccess);
  });
}

int cmd_export_figure(const GlobalOptions& g, const FigureOptions& f, std::ostream& log) {
  std::string svg;
  if (f.kind == "paths") {
    if (f.paths.empty()) throw ConfigError("path", "need at least one --path");
    std::vector<LabeledPath> paths;
    for (const auto& spec : f.paths) {
      const auto eq = spec.find('=');
      const fs::path file = spec.substr(0, eq);
      paths.push_back({read_path_csv(file), eq == std::string::npos ? file.stem().string() : spec.substr(eq + 1)});
    }
    std::optional<DriftField> drift;
    if (!f.drift.empty()) {
      std::map<std::string, double> params;
      for (const auto& kv : f.params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("param", "expected name=value, got '" + kv + "'");
        try {
          params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
          throw ConfigError("param", "value of '" + kv.substr(0, eq) + "' is not a number");
        }
      }
      drift = make_drift(f.drift, params);
    }
    svg = paths_svg(paths, drift ? &*drift : nullptr, f.title);
  } else if (f.kind == "heatmap") {
    const ExperimentConfig c = load(g);
    if (c.problem.noise != NoiseKind::levy) throw ConfigError("problem.noise", "heat maps need a levy config");
    if (f.checkpoint.empty()) throw ConfigError("checkpoint", "--checkpoint is required for a heat map");
    const TrainResult state = from_checkpoint(ad::load_checkpoint(f.checkpoint));
    const ControlProblem p = c.problem_at(c.horizons.back());
    double t = 0;
    if (f.time) {
      t = *f.time;
    } else {
      const RateReport rep = evaluate_rate(state.phi, state.g, p);
      Eigen::Index peak = 0;
      rep.profile.maxCoeff(&peak);
      t = rep.times(peak);
    }
    const auto grid = p.grid();
    const Matrix density = running_cost_density(state.g, grid, t, p.horizon);
    char title[96];
    std::snprintf(title, sizeof title, "%srunning-cost integrand at t=%.4g", f.title.empty() ? "" : (f.title + ": ").c_str(),
                  t);
    svg = heatmap_svg(density, grid.half_width(), title);
    log << "integrand peak " << density.maxCoeff() << " at t=" << t << "\n";
  } else if (f.kind == "history") {
    std::ifstream in(f.history);
    if (!in) throw ConfigError("history", "cannot read " + f.history.string());
    svg = history_svg(read_history_csv(in), f.title);
  } else if (f.kind == "rates") {
    std::ifstream in(f.rates);
    if (!in) throw ConfigError("rates", "cannot read " + f.rates.string());
    std::string line;
    std::getline(in, line);
    std::vector<std::pair<double, double>> rows;
    int number = 1;
    while (std::getline(in, line)) {
      ++number;
      if (line.empty()) continue;
      double t = 0, r = 0;
      char tail = 0;
      if (std::sscanf(line.c_str(), "%lf,%lf%c", &t, &r, &tail) != 2) throw ParseError("expected T,value", number);
      rows.emplace_back(t, r);
    }
    svg = rate_table_svg(rows, f.title);
  } else {
    throw ConfigError("kind", "expected paths, heatmap, history or rates");
  }

  const fs::path dir = g.out ? *g.out : fs::path(".");
  const fs::path rel = f.output.empty() ? fs::path(f.kind + ".svg") : f.output;
  if (g.out) {
    RunManifest m(dir, "export-figure", json{{"kind", f.kind}, {"paths", f.paths}, {"drift", f.drift}}, 0);
    return within(m, [&] {
      write_file(m, dir, rel, svg);
      log << "wrote " << (dir / rel).string() << "\n";
      return int(kSuccess);
    });
  }
  std::ofstream out(rel);
  if (!out) throw Error("cannot write " + rel.string());
  out << svg;
  log << "wrote " << rel.string() << "\n";
  return kSuccess;
}

int cmd_validate_config(const GlobalOptions& g, std::ostream& log) {
  const ExperimentConfig c = load(g);
  log << "config " << c.name << " is valid\n"
      << "  runtime class: " << c.runtime_class << "\n"
      << "  noise: " << to_string(c.problem.noise) << "\n"
      << "  horizons:";
  for (double t : c.horizons) log << ' ' << t;
  log << "\n  content hash: " << content_hash(c.snapshot) << "\n";
  return kSuccess;
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const ShapeError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const AdmissibilityError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const RangeError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace instanton::experiment
