#include "instanton/solver.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "instanton/rng.hpp"

namespace instanton {

using ad::FeedForwardNet;
using ad::OutputTransform;
using ad::Var;

namespace {

constexpr std::uint64_t kGStream = 1;

bool positive_transform(OutputTransform t) { return t == OutputTransform::exp || t == OutputTransform::clamped_exp; }

std::string shape_string(const std::vector<int>& s) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << ']';
  return out.str();
}

// g-net inputs: row 0 is t/T, rows 1..d the jump coordinates; node index
// varies fastest.
Matrix levy_inputs(const Vector& scaled_times, const levy::QuadratureGrid& grid) {
  const Eigen::Index k = grid.size();
  const Eigen::Index n = scaled_times.size();
  Matrix x(1 + grid.dimension(), n * k);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.block(0, i * k, 1, k).setConstant(scaled_times(i));
    x.block(1, i * k, grid.dimension(), k) = grid.nodes();
  }
  return x;
}

}  // namespace

SolverConfig SolverConfig::defaults(const ControlProblem& problem) {
  SolverConfig c;
  const int d = problem.dimension();
  c.phi_layers = {1, 20, 20, d};
  if (problem.noise == NoiseKind::gaussian) {
    c.g_layers = {1, 128, 128, 128, problem.diffusion.noise_dimension() > 0 ? problem.diffusion.noise_dimension() : d};
    c.g_transform = OutputTransform::identity;
  } else {
    c.g_layers = {1 + d, 20, 20, 1};
    c.g_transform = OutputTransform::clamped_exp;
  }
  return c;
}

void SolverConfig::validate(const ControlProblem& problem) const {
  const int d = problem.dimension();
  if (phi_layers.size() < 2 || phi_layers.front() != 1 || phi_layers.back() != d) {
    throw ConfigError("phi_layers", "expected [1, ..., " + std::to_string(d) + "], got " + shape_string(phi_layers));
  }
  for (int n : phi_layers) {
    if (n < 1) throw ConfigError("phi_layers", "layer sizes must be positive");
  }
  for (int n : g_layers) {
    if (n < 1) throw ConfigError("g_layers", "layer sizes must be positive");
  }
  if (g_layers.size() < 2) throw ConfigError("g_layers", "need at least an input and an output layer");
  if (problem.noise == NoiseKind::gaussian) {
    const int m = problem.diffusion.noise_dimension();
    if (g_layers.front() != 1 || g_layers.back() != m) {
      throw ConfigError("g_layers", "Gaussian control net must map 1 -> " + std::to_string(m) + ", got " +
                                        shape_string(g_layers));
    }
    if (g_transform != OutputTransform::identity) {
      throw ConfigError("g_transform", "Gaussian control must use the identity output");
    }
  } else {
    if (g_layers.front() != 1 + d || g_layers.back() != 1) {
      throw ConfigError("g_layers", "Levy control net must map " + std::to_string(1 + d) + " -> 1, got " +
                                        shape_string(g_layers));
    }
    if (!positive_transform(g_transform)) throw ConfigError("g_transform", "Levy control needs a positive output");
  }
  if (iterations < 0) throw ConfigError("iterations", "must be >= 0");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate", "must be > 0");
  if (residual_scheme != "uniform_deterministic") {
    throw ConfigError("residual_scheme", "only 'uniform_deterministic' is supported");
  }
  if (record_every < 1) throw ConfigError("record_every", "must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every", "must be >= 1");
}

Vector residual_times(double horizon, int count) {
  if (count < 2) throw ConfigError("N_T", "need at least two residual points");
  if (!(horizon > 0) || !std::isfinite(horizon)) throw ConfigError("T", "horizon must be finite and > 0");
  Vector t(count);
  for (int i = 0; i < count; ++i) t(i) = horizon * static_cast<double>(i) / static_cast<double>(count - 1);
  t(count - 1) = horizon;
  return t;
}

// ---- loss graph ---------------------------------------------------------------

struct LossGraph::Impl {
  ControlProblem problem;
  std::optional<levy::QuadratureGrid> grid;
  ad::Tape tape;
  ad::NetBinding phi;
  ad::NetBinding g;
  Var control;
  Var loss_phi;
  Var loss_g;
  Var total;

  Impl(const ControlProblem& p, const FeedForwardNet& phi_net, const FeedForwardNet& g_net) : problem(p) {
    validate_problem(problem, false);
    const int d = problem.dimension();
    const int n = problem.residual_count;
    const double horizon = problem.horizon;
    if (phi_net.input_dim() != 1 || phi_net.output_dim() != d) throw ConfigError("phi_layers", "state net must map 1 -> d");

    const Vector s = residual_times(horizon, n) / horizon;
    phi = ad::bind(tape, phi_net);
    g = ad::bind(tape, g_net);

    Var times = tape.constant(s.transpose());
    Var ones = tape.constant(Matrix::Ones(1, n));
    const ad::Tangent state = ad::forward_with_tangent(phi, times, ones);
    Var velocity = (1.0 / horizon) * state.derivative;
    Var drift = apply_drift(problem.drift, state.value);

    Var forcing;
    Var running;
    if (problem.noise == NoiseKind::gaussian) {
      const int m = problem.diffusion.noise_dimension();
      if (g_net.input_dim() != 1 || g_net.output_dim() != m) throw ConfigError("g_layers", "control net must map 1 -> m");
      if (g_net.output_transform() != OutputTransform::identity) {
        throw ConfigError("g_transform", "Gaussian control must use the identity output");
      }
      control = ad::forward(g, times);
      forcing = problem.diffusion.is_identity() ? control : ad::matmul(tape.constant(problem.diffusion.matrix()), control);
      running = (1.0 / n) * ad::sum(ad::square(control));
    } else {
      grid = problem.grid();
      if (g_net.input_dim() != 1 + d || g_net.output_dim() != 1) {
        throw ConfigError("g_layers", "control net must map 1 + d -> 1");
      }
      if (!positive_transform(g_net.output_transform())) {
        throw ConfigError("g_transform", "Levy control needs a positive output");
      }
      const Eigen::Index k = grid->size();
      Var pre = ad::logits(g, tape.constant(levy_inputs(s, *grid)));
      if (g_net.output_transform() == OutputTransform::clamped_exp) pre = ad::clamp(pre, -ad::kLogitClamp, ad::kLogitClamp);
      // With g = e^p, g ln g - g + 1 = g (p - 1) + 1.
      control = ad::exp(pre);
      Var integrand = control * (pre + (-1.0)) + 1.0;
      Var weights = tape.constant(grid->weights().transpose());
      Var cost = ad::matmul(weights, ad::reshape(integrand, k, n));
      running = (1.0 / n) * ad::sum(cost);
      const Matrix zw = grid->nodes() * grid->weights().asDiagonal();
      forcing = ad::matmul(tape.constant(zw), ad::reshape(control, k, n) + (-1.0));
    }

    Var residual = velocity - drift - forcing;
    Var start = ad::column(state.value, 0) - tape.constant(problem.x1);
    Var end = ad::column(state.value, n - 1) - tape.constant(problem.x2);
    loss_phi = (1.0 / n) * ad::sum(ad::square(residual)) + problem.tau1 * ad::sum(ad::square(start));
    loss_g = running + problem.tau2 * ad::sum(ad::square(end));
    total = problem.tau * loss_phi + loss_g;
  }

  LossValue values() const {
    if (problem.noise == NoiseKind::levy && !(control.value().array() > 0.0).all()) {
      throw AdmissibilityError("control network produced a non-positive value");
    }
    return {loss_phi.scalar(), loss_g.scalar(), total.scalar()};
  }

  void refresh_all() {
    ad::refresh(tape, phi);
    ad::refresh(tape, g);
    tape.replay();
  }
};

LossGraph::LossGraph(const ControlProblem& problem, const FeedForwardNet& phi, const FeedForwardNet& g)
    : impl_(std::make_unique<Impl>(problem, phi, g)) {}

LossGraph::~LossGraph() = default;

LossValue LossGraph::evaluate() {
  impl_->refresh_all();
  return impl_->values();
}

LossValue LossGraph::evaluate(Vector& gradient) {
  impl_->refresh_all();
  const LossValue v = impl_->values();
  impl_->tape.backward(impl_->total);
  const Vector gp = ad::gather_gradient(impl_->tape, impl_->phi);
  const Vector gg = ad::gather_gradient(impl_->tape, impl_->g);
  gradient.resize(gp.size() + gg.size());
  gradient << gp, gg;
  return v;
}

const levy::QuadratureGrid* LossGraph::grid() const { return impl_->grid ? &*impl_->grid : nullptr; }

LossValue gaussian_loss(const FeedForwardNet& phi, const FeedForwardNet& g, const ControlProblem& problem) {
  if (problem.noise != NoiseKind::gaussian) throw ConfigError("noise", "expected a Gaussian problem");
  LossGraph graph(problem, phi, g);
  return graph.evaluate();
}

LossValue levy_loss(const FeedForwardNet& phi, const FeedForwardNet& g, const levy::QuadratureGrid& grid,
                    const ControlProblem& problem) {
  if (problem.noise != NoiseKind::levy) throw ConfigError("noise", "expected a Levy problem");
  if (grid.dimension() != problem.dimension()) throw ConfigError("dimension", "grid and problem differ in dimension");
  ControlProblem p = problem;
  p.levy = grid.spec();
  p.quadrature = {grid.half_width(), grid.mesh()};
  LossGraph graph(p, phi, g);
  return graph.evaluate();
}

// ---- training ---------------------------------------------------------------------

TrainResult initial_state(const ControlProblem& problem, const SolverConfig& config) {
  config.validate(problem);
  TrainResult r;
  r.phi = FeedForwardNet::init_truncated_normal(config.phi_layers, config.seed);
  r.g = FeedForwardNet::init_truncated_normal(config.g_layers, derive_seed(config.seed, kGStream), config.g_transform);
  ad::AdamSettings as;
  as.learning_rate = config.learning_rate;
  const auto np = static_cast<Eigen::Index>(r.phi.parameter_count());
  const auto ng = static_cast<Eigen::Index>(r.g.parameter_count());
  if (config.alternate) {
    r.optimizer = ad::AdamState(np, as);
    r.g_optimizer = ad::AdamState(ng, as);
  } else {
    r.optimizer = ad::AdamState(np + ng, as);
  }
  return r;
}

namespace {

nlohmann::json adam_to_json(const ad::AdamState& o) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"learning_rate", o.learning_rate}, {"beta1", o.beta1},
          {"beta2", o.beta2},                 {"epsilon", o.epsilon},
          {"step_count", o.step_count},       {"first_moment", vec(o.first_moment)},
          {"second_moment", vec(o.second_moment)}};
}

ad::AdamState adam_from_json(const nlohmann::json& j) {
  ad::AdamState o;
  o.learning_rate = j.at("learning_rate").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.epsilon = j.at("epsilon").get<double>();
  o.step_count = j.at("step_count").get<std::int64_t>();
  const auto m = j.at("first_moment").get<std::vector<double>>();
  const auto v = j.at("second_moment").get<std::vector<double>>();
  o.first_moment = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  o.second_moment = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  return o;
}

}  // namespace

ad::Checkpoint to_checkpoint(const TrainResult& state) {
  ad::Checkpoint c;
  c.networks.emplace("phi", state.phi);
  c.networks.emplace("g", state.g);
  c.optimizer = state.optimizer;
  c.iteration = state.iteration;
  if (state.g_optimizer) c.metadata["g_optimizer"] = adam_to_json(*state.g_optimizer);
  return c;
}

TrainResult from_checkpoint(const ad::Checkpoint& c) {
  const auto phi = c.networks.find("phi");
  const auto g = c.networks.find("g");
  if (phi == c.networks.end() || g == c.networks.end()) throw ConfigError("networks", "checkpoint needs 'phi' and 'g'");
  TrainResult r;
  r.phi = phi->second;
  r.g = g->second;
  r.optimizer = c.optimizer;
  r.iteration = c.iteration;
  if (c.metadata.contains("g_optimizer")) r.g_optimizer = adam_from_json(c.metadata.at("g_optimizer"));
  return r;
}

TrainResult train(const ControlProblem& problem, const SolverConfig& config, const TrainHooks& hooks,
                  std::optional<TrainResult> start) {
  validate_problem(problem);
  config.validate(problem);
  TrainResult st = start ? std::move(*start) : initial_state(problem, config);
  if (st.phi.layer_sizes() != config.phi_layers || st.g.layer_sizes() != config.g_layers) {
    throw ConfigError("checkpoint", "network shapes differ from the solver configuration");
  }
  const auto np = static_cast<Eigen::Index>(st.phi.parameter_count());
  const auto ng = static_cast<Eigen::Index>(st.g.parameter_count());
  if (config.alternate != st.g_optimizer.has_value()) {
    throw ConfigError("alternate", "optimizer state does not match the alternate setting");
  }
  if (st.optimizer.first_moment.size() != (config.alternate ? np : np + ng)) {
    throw ShapeError("optimizer state does not match the network parameter count");
  }

  LossGraph graph(problem, st.phi, st.g);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  auto record = [&](const LossValue& v) {
    st.history.push_back({st.iteration, v.loss_phi, v.loss_g, v.total, elapsed()});
    if (hooks.progress) hooks.progress(st.history.back());
  };
  auto check = [&](const LossValue& v) {
    if (!std::isfinite(v.loss_phi) || !std::isfinite(v.loss_g) || !std::isfinite(v.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << st.iteration << ": loss_phi=" << v.loss_phi << " loss_g=" << v.loss_g
          << " total=" << v.total;
      throw NumericalError(msg.str());
    }
  };

  Vector grad;
  bool stepped = false;
  while (st.iteration < config.iterations) {
    const LossValue v = graph.evaluate(grad);
    check(v);
    if (!grad.allFinite()) {
      throw NumericalError("non-finite gradient at iteration " + std::to_string(st.iteration));
    }
    if (st.iteration % config.record_every == 0) record(v);

    Vector pp = st.phi.parameters();
    Vector pg = st.g.parameters();
    if (config.alternate) {
      if (st.iteration % 2 == 0) {
        ad::adam_step(pp, grad.head(np), st.optimizer);
      } else {
        ad::adam_step(pg, grad.tail(ng), *st.g_optimizer);
      }
    } else {
      Vector all(np + ng);
      all << pp, pg;
      ad::adam_step(all, grad, st.optimizer);
      pp = all.head(np);
      pg = all.tail(ng);
    }
    st.phi.set_parameters(pp);
    st.g.set_parameters(pg);
    ++st.iteration;
    stepped = true;
    if (hooks.checkpoint && st.iteration % config.checkpoint_every == 0) hooks.checkpoint(to_checkpoint(st));
  }
  if (stepped) {
    const LossValue v = graph.evaluate();
    check(v);
    record(v);
  }
  return st;
}

// ---- reporting ----------------------------------------------------------------

Path extract_path(const FeedForwardNet& phi, const Vector& times, double horizon) {
  if (!(horizon > 0)) throw ConfigError("T", "horizon must be > 0");
  if (phi.input_dim() != 1) throw ShapeError("state net must take a scalar time");
  Path p;
  p.times = times;
  p.states = phi.forward((times / horizon).transpose());
  return p;
}

Vector running_cost_integrand_at(const FeedForwardNet& g, const levy::QuadratureGrid& grid, double t, double horizon) {
  Vector s(1);
  s << t / horizon;
  const Vector values = g.forward(levy_inputs(s, grid)).transpose();
  return levy::running_cost_integrand(grid, values);
}

RateReport evaluate_rate(const FeedForwardNet& phi, const FeedForwardNet& g, const ControlProblem& problem) {
  validate_problem(problem, false);
  const int n = problem.residual_count;
  const double horizon = problem.horizon;
  RateReport r;
  r.times = residual_times(horizon, n);
  r.profile.resize(n);
  if (problem.noise == NoiseKind::gaussian) {
    const Matrix gv = g.forward((r.times / horizon).transpose());
    r.profile = 0.5 * gv.colwise().squaredNorm().transpose();
  } else {
    const auto grid = problem.grid();
    const Matrix gv = g.forward(levy_inputs(r.times / horizon, grid));
    const Eigen::Index k = grid.size();
    for (int i = 0; i < n; ++i) r.profile(i) = levy::running_cost(grid, gv.block(0, i * k, 1, k).transpose());
  }
  r.mean_cost = r.profile.mean();
  r.rate = horizon / n * r.profile.sum();
  const Path ends = extract_path(phi, Eigen::Vector2d(0.0, horizon), horizon);
  r.start_residual = (ends.state(0) - problem.x1).norm();
  r.end_residual = (ends.state(1) - problem.x2).norm();
  return r;
}

TiltFit fit_exponential_tilt(const FeedForwardNet& g, const levy::QuadratureGrid& grid, double t, double horizon,
                             double radius) {
  if (!positive_transform(g.output_transform())) throw ConfigError("g_transform", "tilt fit needs a positive output");
  Vector s(1);
  s << t / horizon;
  Vector y = g.logits(levy_inputs(s, grid)).transpose();
  if (g.output_transform() == OutputTransform::clamped_exp) y = y.cwiseMax(-ad::kLogitClamp).cwiseMin(ad::kLogitClamp);

  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    if (grid.nodes().col(k).norm() <= radius) keep.push_back(k);
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  const int d = grid.dimension();
  if (m < d + 2) throw ConfigError("radius", "too few grid nodes inside the fit radius");
  Matrix a(m, d + 1);
  Vector b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    a(i, 0) = 1.0;
    a.block(i, 1, 1, d) = grid.nodes().col(keep[i]).transpose();
    b(i) = y(keep[i]);
  }
  const Vector coef = a.colPivHouseholderQr().solve(b);
  const double ss_res = (a * coef - b).squaredNorm();
  const double ss_tot = (b.array() - b.mean()).matrix().squaredNorm();
  TiltFit fit;
  fit.intercept = coef(0);
  fit.theta = coef.tail(d);
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  return fit;
}

}  // namespace instanton
