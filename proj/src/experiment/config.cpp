#include <openssl/sha.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "instanton/experiment.hpp"

namespace instanton::experiment {

namespace {

// Strict view of one JSON object: every key must be consumed.
class Block {
 public:
  Block(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "config" : prefix_, "expected a JSON object");
  }

  std::string field(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(field(key), "required field is missing");
    return convert<T>(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    return has(key) ? convert<T>(key) : fallback;
  }

  Vector vector(const std::string& key) {
    const auto v = require<std::vector<double>>(key);
    if (v.empty()) throw ConfigError(field(key), "expected a non-empty array of numbers");
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(field(key), "unknown field");
    }
  }

 private:
  template <class T>
  T convert(const std::string& key) {
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
      }
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "has the wrong type");
    }
  }

  const json& j_;
  std::string prefix_;
  std::set<std::string> used_;
};

void parse_problem(Block b, ExperimentConfig& c) {
  ControlProblem& p = c.problem;
  const auto drift = b.require<std::string>("drift");
  std::map<std::string, double> params;
  if (b.has("drift_params")) {
    const json& dp = b.raw("drift_params");
    if (!dp.is_object()) throw ConfigError(b.field("drift_params"), "expected an object of numbers");
    for (const auto& [k, v] : dp.items()) {
      if (!v.is_number()) throw ConfigError(b.field("drift_params." + k), "expected a number");
      params[k] = v.get<double>();
    }
  }
  p.drift = make_drift(drift, params);
  const int d = p.drift.dimension();

  p.noise = noise_kind_from_string(b.require<std::string>("noise"));
  if (p.noise == NoiseKind::levy) {
    p.levy.gamma = b.require<double>("gamma");
    p.levy.dimension = d;
    p.quadrature.half_width = b.get<double>("R", p.quadrature.half_width);
    p.quadrature.mesh = b.get<double>("delta", p.quadrature.mesh);
    for (const char* k : {"sigma"}) {
      if (b.has(k)) throw ConfigError(b.field(k), "only used with gaussian noise");
    }
  } else {
    for (const char* k : {"gamma", "R", "delta"}) {
      if (b.has(k)) throw ConfigError(b.field(k), "only used with levy noise");
    }
    if (b.has("sigma")) {
      const json& s = b.raw("sigma");
      std::vector<std::vector<double>> rows;
      try {
        rows = s.get<std::vector<std::vector<double>>>();
      } catch (const json::exception&) {
        throw ConfigError(b.field("sigma"), "expected a matrix as an array of rows");
      }
      if (rows.empty() || rows[0].empty()) throw ConfigError(b.field("sigma"), "matrix is empty");
      Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ConfigError(b.field("sigma"), "rows differ in length");
        for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
      }
      p.diffusion = DiffusionField::constant(m);
    } else {
      p.diffusion = DiffusionField::identity(d);
    }
  }

  p.x1 = b.vector("x1");
  p.x2 = b.vector("x2");
  if (b.has("T") == b.has("T_list")) throw ConfigError(b.field("T"), "give exactly one of T and T_list");
  if (b.has("T")) {
    c.horizons = {b.require<double>("T")};
  } else {
    c.horizons = b.require<std::vector<double>>("T_list");
    if (c.horizons.empty()) throw ConfigError(b.field("T_list"), "must not be empty");
    for (std::size_t i = 0; i < c.horizons.size(); ++i) {
      if (!(c.horizons[i] > 0)) throw ConfigError(b.field("T_list"), "entries must be > 0");
      if (i > 0 && !(c.horizons[i] > c.horizons[i - 1])) throw ConfigError(b.field("T_list"), "entries must increase");
    }
  }
  p.horizon = c.horizons.front();
  p.residual_count = b.require<int>("N_T");
  p.tau = b.require<double>("tau");
  p.tau1 = b.require<double>("tau1");
  p.tau2 = b.require<double>("tau2");
  p.endpoints_metastable = b.get<bool>("metastable", true);
  b.finish();
  for (double t : c.horizons) validate_problem(c.problem_at(t));
}

void parse_solver(Block b, ExperimentConfig& c) {
  SolverConfig& s = c.solver;
  s = SolverConfig::defaults(c.problem);
  s.phi_layers = b.get<std::vector<int>>("phi_layers", s.phi_layers);
  s.g_layers = b.get<std::vector<int>>("g_layers", s.g_layers);
  if (b.has("g_transform")) s.g_transform = ad::output_transform_from_string(b.require<std::string>("g_transform"));
  s.iterations = b.get<std::int64_t>("iterations", s.iterations);
  s.learning_rate = b.get<double>("learning_rate", s.learning_rate);
  s.residual_scheme = b.get<std::string>("residual_scheme", s.residual_scheme);
  s.alternate = b.get<bool>("alternate", s.alternate);
  s.record_every = b.get<int>("record_every", s.record_every);
  s.checkpoint_every = b.get<std::int64_t>("checkpoint_every", s.checkpoint_every);
  b.finish();
  s.seed = c.seed;
  s.validate(c.problem);
}

void parse_oracle(Block b, ExperimentConfig& c) {
  CollocationSettings& o = c.oracle;
  o.nodes = b.get<int>("N", o.nodes);
  o.iterations = b.get<int>("iterations", o.iterations);
  o.learning_rate = b.get<double>("learning_rate", o.learning_rate);
  o.tolerance = b.get<double>("tolerance", o.tolerance);
  o.check_every = b.get<int>("check_every", o.check_every);
  o.perturbation = b.get<double>("perturbation", o.perturbation);
  o.plateau_decay = b.get<double>("plateau_decay", o.plateau_decay);
  b.finish();
  o.validate();
}

void parse_simulate(Block b, ExperimentConfig& c) {
  SimulateBlock s;
  s.epsilon = b.require<double>("epsilon");
  s.dt = b.require<double>("dt");
  s.horizon = b.require<double>("T");
  s.trials = b.require<int>("trials");
  s.radius = b.get<double>("radius", s.radius);
  s.tube_width = b.get<double>("tube_width", s.tube_width);
  s.reference = b.get<std::string>("reference", s.reference);
  s.msd_trials = b.get<std::int64_t>("msd_trials", s.msd_trials);
  s.dump_trajectories = b.get<bool>("dump_trajectories", s.dump_trajectories);
  s.record_stride = b.get<int>("record_stride", s.record_stride);
  b.finish();
  if (!(s.epsilon >= 0) || !std::isfinite(s.epsilon)) throw ConfigError("simulate.epsilon", "must be finite and >= 0");
  if (s.trials < 1) throw ConfigError("simulate.trials", "need at least one trial");
  if (!(s.radius > 0)) throw ConfigError("simulate.radius", "must be > 0");
  if (!(s.tube_width >= 0)) throw ConfigError("simulate.tube_width", "must be >= 0");
  if (s.msd_trials != 0 && s.msd_trials < 100) throw ConfigError("simulate.msd_trials", "need 0 or at least 100");
  if (s.msd_trials != 0 && c.problem.noise != NoiseKind::levy) {
    throw ConfigError("simulate.msd_trials", "the MSD estimate needs levy noise");
  }
  SimulationSettings probe;
  probe.horizon = s.horizon;
  probe.dt = s.dt;
  probe.trials = s.trials;
  probe.record_stride = s.record_stride;
  try {
    probe.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("simulate." + e.field(), e.what());
  }
  c.simulate = s;
}

}  // namespace

ControlProblem ExperimentConfig::problem_at(double horizon) const {
  ControlProblem p = problem;
  p.horizon = horizon;
  return p;
}

json merge(json base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) return patch;
  for (const auto& [key, value] : patch.items()) {
    base[key] = base.contains(key) ? merge(base[key], value) : value;
  }
  return base;
}

ExperimentConfig parse_config(const json& document, bool paper_scale) {
  if (!document.is_object()) throw ConfigError("config", "expected a JSON object");
  json doc = document;
  if (doc.contains("paper_scale")) {
    const json overrides = doc["paper_scale"];
    doc.erase("paper_scale");
    if (!overrides.is_object()) throw ConfigError("paper_scale", "expected an object of overrides");
    if (paper_scale) doc = merge(doc, overrides);
  } else if (paper_scale) {
    throw ConfigError("paper_scale", "this config has no paper-scale settings");
  }

  ExperimentConfig c;
  c.snapshot = doc;
  Block top(doc, "");
  c.name = top.require<std::string>("name");
  c.description = top.get<std::string>("description", "");
  c.runtime_class = top.require<std::string>("runtime_class");
  if (c.runtime_class != "seconds" && c.runtime_class != "minutes" && c.runtime_class != "hours") {
    throw ConfigError("runtime_class", "expected 'seconds', 'minutes' or 'hours'");
  }
  c.seed = top.get<std::uint64_t>("seed", 0);
  c.output = top.get<std::string>("output", "runs/" + c.name);
  parse_problem(Block(top.raw("problem"), "problem"), c);
  parse_solver(Block(top.has("solver") ? top.raw("solver") : json::object(), "solver"), c);
  parse_oracle(Block(top.has("oracle") ? top.raw("oracle") : json::object(), "oracle"), c);
  if (top.has("simulate")) parse_simulate(Block(top.raw("simulate"), "simulate"), c);
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file, bool paper_scale) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config", "cannot read " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what(), 0);
  }
  return parse_config(doc, paper_scale);
}

std::string content_hash(const json& document) {
  const std::string body = document.dump();
  const std::string blob = "blob " + std::to_string(body.size()) + '\0' + body;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  std::string hex;
  char buf[3];
  for (unsigned char byte : digest) {
    std::snprintf(buf, sizeof buf, "%02x", byte);
    hex += buf;
  }
  return hex;
}

}  // namespace instanton::experiment
