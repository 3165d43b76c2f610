#include "instanton/simulator.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "instanton/rng.hpp"

namespace instanton {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::Index step_count(double horizon, double dt) {
  return static_cast<Eigen::Index>(std::ceil(horizon / dt - 1e-9));
}

double grid_time(Eigen::Index i, double horizon, double dt) {
  return std::min(static_cast<double>(i) * dt, horizon);
}

// Runs one trajectory on the grid t_i = min(i dt, T), calling visit(i, x)
// at every grid point. Returns false on a blow-up.
template <class Visit>
bool simulate(const DriftField& drift, const Vector& x0, const NoiseModel& noise, double horizon, double dt,
              std::uint64_t seed, const Matrix& sigma, Visit&& visit) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const Eigen::Index n = step_count(horizon, dt);
  const bool noisy = noise.epsilon > 0;
  const bool levy_noise = noise.kind == NoiseKind::levy;

  double rate = 0;
  std::exponential_distribution<double> wait(1.0);
  double next_jump = std::numeric_limits<double>::infinity();
  if (noisy && levy_noise) {
    rate = levy::analytic_total_mass(noise.levy) / noise.epsilon;
    next_jump = wait(rng) / rate;
  }

  Vector x = x0;
  Vector xi(sigma.cols());
  visit(0, x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t0 = grid_time(i, horizon, dt);
    const double t1 = grid_time(i + 1, horizon, dt);
    if (levy_noise) {
      double s = t0;
      while (next_jump <= t1) {
        x += drift(x) * (next_jump - s);
        x += noise.epsilon * levy::sample_jump(noise.levy, rng);
        s = next_jump;
        next_jump += wait(rng) / rate;
      }
      x += drift(x) * (t1 - s);
    } else {
      Vector step = drift(x) * (t1 - t0);
      if (noisy) {
        for (Eigen::Index k = 0; k < xi.size(); ++k) xi(k) = normal(rng);
        step += std::sqrt(noise.epsilon * (t1 - t0)) * (sigma * xi);
      }
      x += step;
    }
    if (!x.allFinite() || x.norm() > kBlowUpNorm) return false;
    visit(i + 1, x);
  }
  return true;
}

Matrix noise_matrix(const NoiseModel& noise, int d) {
  if (noise.diffusion.matrix().size() == 0) return Matrix::Identity(d, d);
  return noise.diffusion.matrix();
}

template <class Body>
void parallel_trials(int trials, int threads, Body&& body) {
  const int workers = std::max(1, std::min(threads, trials));
  if (workers == 1) {
    for (int i = 0; i < trials; ++i) body(i, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < trials; i += workers) body(i, w);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Whether p is within `width` of the polyline with vertices `pts`. `hint`
// remembers the last matching segment.
bool near_polyline(const Matrix& pts, const Vector& p, double width, Eigen::Index& hint) {
  const Eigen::Index segments = std::max<Eigen::Index>(pts.cols() - 1, 1);
  const double w2 = width * width;
  auto close = [&](Eigen::Index k) {
    if (pts.cols() == 1) return (p - pts.col(0)).squaredNorm() <= w2;
    const Vector a = pts.col(k);
    const Vector ab = pts.col(k + 1) - a;
    const double len2 = ab.squaredNorm();
    const double s = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - a - s * ab).squaredNorm() <= w2;
  };
  if (close(hint)) return true;
  for (Eigen::Index k = 0; k < segments; ++k) {
    if (close(k)) {
      hint = k;
      return true;
    }
  }
  return false;
}

bool geometric_inside(const Matrix& states, Eigen::Index first, Eigen::Index last, const Path& reference,
                      double width) {
  Eigen::Index hint = 0;
  for (Eigen::Index j = first; j <= last; ++j) {
    if (!near_polyline(reference.states, states.col(j), width, hint)) return false;
  }
  return true;
}

}  // namespace

void NoiseModel::validate(int dimension) const {
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ConfigError("epsilon", "noise intensity must be finite and >= 0");
  if (kind == NoiseKind::levy) {
    levy.validate();
    if (levy.dimension != dimension) throw ConfigError("dimension", "jump measure dimension differs from the state");
  } else if (diffusion.matrix().size() != 0 && diffusion.dimension() != dimension) {
    throw ConfigError("sigma", "diffusion matrix has the wrong number of rows");
  }
}

Vector JumpRecord::sum() const { return sizes.rowwise().sum(); }

JumpRecord sample_levy_increments(const levy::LevyMeasureSpec& spec, double epsilon, double horizon,
                                  std::mt19937_64& rng) {
  spec.validate();
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ConfigError("epsilon", "noise intensity must be finite and >= 0");
  if (!(horizon >= 0) || !std::isfinite(horizon)) throw ConfigError("T", "horizon must be finite and >= 0");
  JumpRecord r;
  r.sizes.resize(spec.dimension, 0);
  r.times.resize(0);
  if (epsilon == 0 || horizon == 0) return r;

  const double rate = levy::analytic_total_mass(spec) / epsilon;
  std::exponential_distribution<double> wait(rate);
  std::vector<double> times;
  std::vector<Vector> sizes;
  for (double t = wait(rng); t <= horizon; t += wait(rng)) {
    times.push_back(t);
    sizes.push_back(epsilon * levy::sample_jump(spec, rng));
  }
  r.times = Eigen::Map<const Vector>(times.data(), static_cast<Eigen::Index>(times.size()));
  r.sizes.resize(spec.dimension, static_cast<Eigen::Index>(sizes.size()));
  for (std::size_t k = 0; k < sizes.size(); ++k) r.sizes.col(static_cast<Eigen::Index>(k)) = sizes[k];
  return r;
}

double MsdEstimate::z_score() const {
  if (standard_error > 0) return (value - expected) / standard_error;
  return value == expected ? 0.0 : std::numeric_limits<double>::infinity();
}

MsdEstimate estimate_msd(const levy::LevyMeasureSpec& spec, double epsilon, double horizon, std::int64_t trials,
                         std::uint64_t seed) {
  if (trials < 100) throw ConfigError("trials", "need at least 100 trials");
  MsdEstimate e;
  e.expected = levy::analytic_msd_constant(spec) * epsilon * horizon;
  double mean = 0, m2 = 0;
  for (std::int64_t i = 0; i < trials; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const double x = sample_levy_increments(spec, epsilon, horizon, rng).sum().squaredNorm();
    const double delta = x - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (x - mean);
  }
  e.value = mean;
  e.standard_error = std::sqrt(m2 / static_cast<double>(trials - 1) / static_cast<double>(trials));
  return e;
}

void SimulationSettings::validate() const {
  if (!(horizon >= 0) || !std::isfinite(horizon)) throw ConfigError("T", "horizon must be finite and >= 0");
  if (!(dt > 0) || !std::isfinite(dt)) throw ConfigError("dt", "time step must be finite and > 0");
  if (trials < 1) throw ConfigError("trials", "need at least one trial");
  if (threads < 1) throw ConfigError("threads", "need at least one thread");
  if (record_stride < 1) throw ConfigError("record_stride", "must be >= 1");
}

Path TrajectoryBatch::trajectory(int trial) const {
  return Path{times, states.at(static_cast<std::size_t>(trial))};
}

TrajectoryBatch sample_sde(const DriftField& drift, const Vector& x0, const NoiseModel& noise,
                           const SimulationSettings& settings) {
  settings.validate();
  const int d = drift.dimension();
  if (x0.size() != d) throw ShapeError("initial state dimension differs from the drift");
  noise.validate(d);
  const Matrix sigma = noise_matrix(noise, d);

  const Eigen::Index n = step_count(settings.horizon, settings.dt);
  const Eigen::Index stride = settings.record_stride;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i <= n; i += stride) kept.push_back(i);
  if (kept.back() != n) kept.push_back(n);
  const auto m = static_cast<Eigen::Index>(kept.size());

  TrajectoryBatch batch;
  batch.times.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) batch.times(j) = grid_time(kept[static_cast<std::size_t>(j)], settings.horizon, settings.dt);
  const auto trials = static_cast<std::size_t>(settings.trials);
  batch.states.assign(trials, Matrix::Constant(d, m, kNaN));
  batch.seeds.resize(trials);
  batch.blown_up.assign(trials, false);
  std::vector<char> blown(trials, 0);
  batch.terminal = Matrix::Constant(d, settings.trials, kNaN);

  parallel_trials(settings.trials, settings.threads, [&](int trial, int) {
    const auto t = static_cast<std::size_t>(trial);
    batch.seeds[t] = derive_seed(settings.seed, t);
    Matrix& out = batch.states[t];
    const bool ok = simulate(drift, x0, noise, settings.horizon, settings.dt, batch.seeds[t], sigma,
                             [&](Eigen::Index i, const Vector& x) {
                               if (i % stride == 0) out.col(i / stride) = x;
                               else if (i == n) out.col(m - 1) = x;
                             });
    blown[t] = ok ? 0 : 1;
    if (ok) batch.terminal.col(trial) = out.col(m - 1);
  });
  for (std::size_t t = 0; t < trials; ++t) batch.blown_up[t] = blown[t] != 0;
  return batch;
}

bool inside_tube(const Path& trajectory, const Path& reference, double width, TubeMetric metric) {
  if (!(width >= 0)) throw ConfigError("delta_tube", "tube width must be >= 0");
  if (trajectory.dimension() != reference.dimension()) throw ShapeError("trajectory and reference differ in dimension");
  if (!trajectory.states.allFinite()) return false;
  if (metric == TubeMetric::geometric) {
    return geometric_inside(trajectory.states, 0, trajectory.size() - 1, reference, width);
  }
  const double start = reference.times(0);
  const double end = reference.times(reference.size() - 1);
  if (trajectory.times(trajectory.size() - 1) < end - 1e-9 * std::max(1.0, std::abs(end))) {
    throw ConfigError("T", "trajectory grid does not cover the reference horizon");
  }
  for (Eigen::Index j = 0; j < trajectory.size(); ++j) {
    const double t = trajectory.times(j);
    if (t < start || t > end) continue;
    if (!((trajectory.states.col(j) - reference.at(t)).norm() < width)) return false;
  }
  return true;
}

double tube_fraction(const TrajectoryBatch& batch, const Path& reference, double width, TubeMetric metric) {
  if (batch.trials() == 0) return 0.0;
  int inside = 0;
  for (int i = 0; i < batch.trials(); ++i) {
    if (!batch.blown_up[static_cast<std::size_t>(i)] && inside_tube(batch.trajectory(i), reference, width, metric)) {
      ++inside;
    }
  }
  return static_cast<double>(inside) / batch.trials();
}

std::vector<TrialSummary> transition_summaries(const DriftField& drift, const NoiseModel& noise,
                                               const SimulationSettings& settings,
                                               const TransitionSettings& transition) {
  settings.validate();
  const int d = drift.dimension();
  noise.validate(d);
  if (transition.source.size() != d || transition.target.size() != d) {
    throw ShapeError("source/target dimension differs from the drift");
  }
  if (!(transition.radius > 0)) throw ConfigError("radius", "must be > 0");
  if (!(transition.tube_width >= 0)) throw ConfigError("delta_tube", "tube width must be >= 0");
  for (const auto& r : transition.references) {
    if (r.dimension() != d) throw ShapeError("reference path dimension differs from the drift");
  }
  const Matrix sigma = noise_matrix(noise, d);
  const Eigen::Index n = step_count(settings.horizon, settings.dt);
  const double r2 = transition.radius * transition.radius;

  std::vector<TrialSummary> out(static_cast<std::size_t>(settings.trials));
  const int workers = std::max(1, std::min(settings.threads, settings.trials));
  std::vector<Matrix> buffers(static_cast<std::size_t>(workers), Matrix(d, n + 1));
  parallel_trials(settings.trials, settings.threads, [&](int trial, int worker) {
    Matrix& buf = buffers[static_cast<std::size_t>(worker)];
    Eigen::Index hit = -1, last_source = 0;
    const bool ok = simulate(drift, transition.source, noise, settings.horizon, settings.dt,
                             derive_seed(settings.seed, static_cast<std::uint64_t>(trial)), sigma,
                             [&](Eigen::Index i, const Vector& x) {
                               buf.col(i) = x;
                               if (hit >= 0) return;
                               if ((x - transition.source).squaredNorm() <= r2) last_source = i;
                               if ((x - transition.target).squaredNorm() <= r2) hit = i;
                             });
    TrialSummary& s = out[static_cast<std::size_t>(trial)];
    s.trial = trial;
    s.blown_up = !ok;
    s.terminal = ok ? Vector(buf.col(n)) : Vector::Constant(d, kNaN);
    s.transition = hit >= 0;
    if (s.transition) {
      for (const auto& r : transition.references) {
        if (geometric_inside(buf, last_source, hit, r, transition.tube_width)) {
          s.tube = true;
          break;
        }
      }
    }
  });
  return out;
}

}  // namespace instanton
