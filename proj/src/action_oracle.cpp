#include "instanton/action_oracle.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "instanton/autodiff/adam.hpp"

namespace instanton {

void CollocationSettings::validate() const {
  if (nodes < 8) throw ConfigError("N", "collocation needs at least 8 nodes");
  if (iterations < 0) throw ConfigError("iterations", "must be >= 0");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate", "must be > 0");
  if (!(tolerance >= 0)) throw ConfigError("tolerance", "must be >= 0");
  if (check_every < 1) throw ConfigError("check_every", "must be >= 1");
  if (!(plateau_decay > 0 && plateau_decay <= 1)) throw ConfigError("plateau_decay", "must lie in (0, 1]");
  if (!std::isfinite(perturbation)) throw ConfigError("perturbation", "must be finite");
}

namespace {

Matrix inverse_diffusion_metric(const DiffusionField& diffusion) {
  const Matrix& s = diffusion.matrix();
  if (diffusion.is_identity()) return Matrix::Identity(s.rows(), s.rows());
  const Matrix a = s * s.transpose();
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible() || lu.rcond() < 1e-12) throw NumericalError("diffusion matrix sigma sigma^T is singular");
  return lu.inverse();
}

double gaussian_action_impl(const Path& path, const DriftField& drift, const DiffusionField& diffusion,
                            Matrix* gradient) {
  path.validate();
  if (path.dimension() != drift.dimension()) throw ShapeError("path and drift differ in dimension");
  if (diffusion.dimension() != drift.dimension()) throw ShapeError("diffusion and drift differ in dimension");
  const Matrix ainv = inverse_diffusion_metric(diffusion);
  const Vector& t = path.times;
  const Matrix& x = path.states;
  if (gradient) gradient->setZero(x.rows(), x.cols());

  // Midpoint rule per interval: the velocity is the forward difference and b
  // is sampled at the interval midpoint.
  double action = 0;
  for (Eigen::Index j = 0; j + 1 < t.size(); ++j) {
    const double h = t(j + 1) - t(j);
    const Vector mid = 0.5 * (x.col(j) + x.col(j + 1));
    const Vector r = (x.col(j + 1) - x.col(j)) / h - drift(mid);
    const Vector ar = ainv * r;
    action += 0.5 * h * r.dot(ar);
    if (gradient) {
      const Vector jt = 0.5 * h * (drift.jacobian(mid).transpose() * ar);
      gradient->col(j + 1) += ar - jt;
      gradient->col(j) -= ar + jt;
    }
  }
  return action;
}

Path initial_path(const ControlProblem& problem, const CollocationSettings& settings) {
  Path p = straight_path(problem.x1, problem.x2, problem.horizon, settings.nodes);
  if (p.dimension() >= 2) {
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double s = static_cast<double>(j) / static_cast<double>(p.size() - 1);
      p.states(1, j) += settings.perturbation * std::sin(std::numbers::pi * s);
    }
  }
  return p;
}

void check_initial(const Path& init, const ControlProblem& problem, const CollocationSettings& settings) {
  init.validate();
  if (init.size() != settings.nodes) throw ConfigError("N", "initial path length differs from the node count");
  if (init.dimension() != problem.dimension()) throw ShapeError("initial path dimension differs from the problem");
}

// Adam on the interior columns of `path`, pinning the ends. `evaluate` fills
// the full gradient and returns the action.
template <typename Evaluate, typename Result>
void descend(Path& path, const ControlProblem& problem, const CollocationSettings& settings, Evaluate evaluate,
             Result& result) {
  const Eigen::Index d = path.dimension();
  const Eigen::Index interior = path.size() - 2;
  path.states.col(0) = problem.x1;
  path.states.col(path.size() - 1) = problem.x2;

  ad::AdamSettings as;
  as.learning_rate = settings.learning_rate;
  ad::AdamState adam(d * interior, as);
  Matrix grad;
  double action = evaluate(path, grad);
  double last_check = action;
  result.history.emplace_back(0, action);

  int it = 0;
  for (; it < settings.iterations; ++it) {
    if (!std::isfinite(action) || !grad.allFinite()) {
      std::ostringstream msg;
      msg << "collocation diverged at iteration " << it << " (action " << action << ")";
      throw NumericalError(msg.str());
    }
    Eigen::Map<Vector> params(path.states.col(1).data(), d * interior);
    const Eigen::Map<const Vector> g(grad.col(1).data(), d * interior);
    ad::adam_step(params, g, adam);
    action = evaluate(path, grad);
    if ((it + 1) % settings.check_every == 0) {
      result.history.emplace_back(it + 1, action);
      const double change = std::abs(action - last_check);
      if (action >= last_check) adam.learning_rate *= settings.plateau_decay;
      last_check = action;
      if (change <= settings.tolerance * std::max(std::abs(action), 1e-12)) {
        result.converged = true;
        ++it;
        break;
      }
    }
  }
  if (!std::isfinite(action)) throw NumericalError("collocation produced a non-finite action");
  result.iterations = it;
  result.action = action;
}

}  // namespace

double gaussian_action(const Path& path, const DriftField& drift, const DiffusionField& diffusion) {
  return gaussian_action_impl(path, drift, diffusion, nullptr);
}

double gaussian_action(const Path& path, const DriftField& drift, const DiffusionField& diffusion, Matrix& gradient) {
  return gaussian_action_impl(path, drift, diffusion, &gradient);
}

OracleResult minimize_gaussian_action(const ControlProblem& problem, const CollocationSettings& settings,
                                      const Path* initial) {
  settings.validate();
  validate_problem(problem, false);
  if (problem.noise != NoiseKind::gaussian) throw ConfigError("noise", "Gaussian oracle needs a Gaussian problem");
  OracleResult result;
  Path path = initial ? *initial : initial_path(problem, settings);
  if (initial) check_initial(path, problem, settings);
  descend(
      path, problem, settings,
      [&](const Path& p, Matrix& g) { return gaussian_action(p, problem.drift, problem.diffusion, g); }, result);
  result.path = std::move(path);
  return result;
}

double levy_local_cost(const levy::QuadratureGrid& grid, const Vector& v) { return levy::legendre(grid, v).local_cost; }

double levy_action(const Path& path, const DriftField& drift, const levy::QuadratureGrid& grid, Matrix* theta,
                   Matrix* gradient, const Matrix* warm) {
  path.validate();
  if (path.dimension() != drift.dimension() || grid.dimension() != drift.dimension()) {
    throw ShapeError("path, drift and grid must share one dimension");
  }
  const Vector& t = path.times;
  const Matrix& x = path.states;
  const Eigen::Index n = t.size();
  if (warm && (warm->rows() != x.rows() || warm->cols() != n - 1)) throw ShapeError("warm start has the wrong shape");
  if (theta) theta->resize(x.rows(), n - 1);
  if (gradient) gradient->setZero(x.rows(), n);

  double action = 0;
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    const double dt = t(j + 1) - t(j);
    const Vector mid = 0.5 * (x.col(j) + x.col(j + 1));
    const Vector v = (x.col(j + 1) - x.col(j)) / dt - drift(mid);
    levy::LegendreResult r;
    try {
      Vector start;
      if (warm) start = warm->col(j);
      r = levy::legendre(grid, v, {}, warm ? &start : nullptr);
    } catch (const RangeError& e) {
      throw RangeError("interval " + std::to_string(j) + ": " + e.what() + "; try a larger T or more nodes N");
    } catch (const NumericalError& e) {
      throw NumericalError("interval " + std::to_string(j) + ": " + e.what());
    }
    action += dt * r.local_cost;
    if (theta) theta->col(j) = r.theta;
    if (gradient) {
      const Vector jt = 0.5 * dt * (drift.jacobian(mid).transpose() * r.theta);
      gradient->col(j + 1) += r.theta - jt;
      gradient->col(j) -= r.theta + jt;
    }
  }
  return action;
}

LevyOracleResult minimize_levy_action(const ControlProblem& problem, const CollocationSettings& settings,
                                      const Path* initial) {
  settings.validate();
  validate_problem(problem, false);
  if (problem.noise != NoiseKind::levy) throw ConfigError("noise", "Levy oracle needs a Levy problem");
  const auto grid = problem.grid();
  LevyOracleResult result;
  Path path = initial ? *initial : initial_path(problem, settings);
  if (initial) check_initial(path, problem, settings);
  Matrix theta = Matrix::Zero(path.dimension(), path.size() - 1);
  descend(
      path, problem, settings,
      [&](const Path& p, Matrix& g) {
        Matrix next;
        const double a = levy_action(p, problem.drift, grid, &next, &g, &theta);
        theta = std::move(next);
        return a;
      },
      result);
  result.theta = theta;
  result.path = std::move(path);
  return result;
}

}  // namespace instanton
