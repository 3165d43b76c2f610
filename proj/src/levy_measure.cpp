#include "instanton/levy_measure.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace instanton::levy {

namespace {

double sphere_area(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return 2.0 * std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi;
  }
  throw ConfigError("dimension", "supported dimensions are 1, 2 and 3");
}

void check_admissible(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& g) {
  if (g.size() != grid.size()) {
    throw ShapeError("control field has " + std::to_string(g.size()) + " values, grid has " +
                     std::to_string(grid.size()) + " nodes");
  }
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    if (!(g(k) > 0.0) || !std::isfinite(g(k))) {
      throw AdmissibilityError("control field must be finite and strictly positive; node " + std::to_string(k) +
                               " has " + std::to_string(g(k)));
    }
  }
}

void check_theta(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta) {
  if (theta.size() != grid.dimension()) throw ShapeError("tilt vector dimension differs from the grid");
  if (!theta.allFinite()) throw NumericalError("tilt vector is not finite");
}

// theta . z_k per node, clamped above.
Vector clamped_exponents(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta) {
  Vector e = grid.coordinates() * theta;
  return e.cwiseMin(kMaxExponent);
}

// sum_k s_k z_k z_k^T entry by entry from the K x d coordinate matrix.
Matrix weighted_second_moment(const Matrix& zt, const Vector& s) {
  const Eigen::Index d = zt.cols();
  Matrix h(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      h(a, b) = (zt.col(a).array() * zt.col(b).array() * s.array()).sum();
      h(b, a) = h(a, b);
    }
  }
  return h;
}

[[noreturn]] void divergence(const char* what) {
  throw NumericalError(std::string(what) +
                       " overflowed; use a smaller |theta| or a larger integration box/horizon");
}

}  // namespace

void LevyMeasureSpec::validate() const {
  if (!(gamma > 1.0) || !std::isfinite(gamma)) throw ConfigError("gamma", "tail exponent must be finite and > 1");
  if (dimension < 1 || dimension > 3) throw ConfigError("dimension", "supported dimensions are 1, 2 and 3");
}

double LevyMeasureSpec::density(const Eigen::Ref<const Vector>& z) const { return std::exp(-std::pow(z.norm(), gamma)); }

double analytic_total_mass(const LevyMeasureSpec& spec) {
  spec.validate();
  const double d = spec.dimension;
  return sphere_area(spec.dimension) * std::tgamma(d / spec.gamma) / spec.gamma;
}

double analytic_msd_constant(const LevyMeasureSpec& spec) {
  spec.validate();
  const double d = spec.dimension;
  return sphere_area(spec.dimension) * std::tgamma((d + 2.0) / spec.gamma) / spec.gamma;
}

QuadratureGrid build_grid(const LevyMeasureSpec& spec, double half_width, double mesh) {
  spec.validate();
  if (!std::isfinite(half_width) || !(half_width > 0)) throw ConfigError("R", "box half-width must be finite and > 0");
  if (!std::isfinite(mesh) || !(mesh > 0)) throw ConfigError("delta", "mesh size must be finite and > 0");
  if (mesh > half_width) throw ConfigError("delta", "mesh size must not exceed the box half-width");

  QuadratureGrid grid;
  grid.spec_ = spec;
  grid.half_width_ = half_width;
  grid.mesh_ = mesh;
  const auto n = static_cast<Eigen::Index>(std::floor(2.0 * half_width / mesh + 1e-9)) + 1;
  grid.per_axis_ = n;

  const double centre = 0.5 * static_cast<double>(n - 1);
  Vector axis(n), axis_w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    axis(i) = (static_cast<double>(i) - centre) * mesh;
    axis_w(i) = (i == 0 || i == n - 1) ? 0.5 * mesh : mesh;
  }

  const int d = spec.dimension;
  Eigen::Index count = 1;
  for (int j = 0; j < d; ++j) count *= n;
  grid.nodes_.resize(d, count);
  grid.weights_.resize(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    Eigen::Index rest = k;
    double w = 1.0;
    for (int j = 0; j < d; ++j) {
      const Eigen::Index i = rest % n;
      rest /= n;
      grid.nodes_(j, k) = axis(i);
      w *= axis_w(i);
    }
    grid.weights_(k) = w * spec.density(grid.nodes_.col(k));
  }
  grid.coordinates_ = grid.nodes_.transpose();
  return grid;
}

double total_mass(const QuadratureGrid& grid) { return grid.weights().sum(); }

Vector running_cost_integrand(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& g) {
  check_admissible(grid, g);
  Vector f(g.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    // Rounding can push the value a hair below its true minimum of 0 at g = 1.
    f(k) = grid.weights()(k) * std::max(0.0, g(k) * std::log(g(k)) - g(k) + 1.0);
  }
  return f;
}

double running_cost(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& g) {
  return running_cost_integrand(grid, g).sum();
}

Vector drift_correction(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& g) {
  check_admissible(grid, g);
  return grid.nodes() * (grid.weights().array() * (g.array() - 1.0)).matrix();
}

Vector exponential_tilt(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta) {
  check_theta(grid, theta);
  return clamped_exponents(grid, theta).array().exp().matrix();
}

double cumulant(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta) {
  check_theta(grid, theta);
  const Vector e = clamped_exponents(grid, theta);
  const double h = grid.weights().dot((e.array().exp() - 1.0 - e.array()).matrix());
  if (!std::isfinite(h)) divergence("cumulant");
  return h;
}

Vector cumulant_gradient(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta) {
  check_theta(grid, theta);
  const Vector e = clamped_exponents(grid, theta);
  Vector g = grid.coordinates().transpose() * (grid.weights().array() * (e.array().exp() - 1.0)).matrix();
  if (!g.allFinite()) divergence("cumulant gradient");
  return g;
}

Matrix cumulant_hessian(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& theta) {
  check_theta(grid, theta);
  const Vector e = clamped_exponents(grid, theta);
  const Vector s = (grid.weights().array() * e.array().exp()).matrix();
  Matrix h = weighted_second_moment(grid.coordinates(), s);
  if (!h.allFinite()) divergence("cumulant Hessian");
  return h;
}

LegendreResult legendre(const QuadratureGrid& grid, const Eigen::Ref<const Vector>& v, const LegendreOptions& options,
                        const Vector* start) {
  if (v.size() != grid.dimension()) throw ShapeError("velocity dimension differs from the grid");
  if (!v.allFinite()) throw NumericalError("velocity is not finite");

  const auto& zt = grid.coordinates();
  const auto& w = grid.weights();
  const Eigen::Index d = grid.dimension();

  Vector theta = start ? *start : Vector::Zero(d);
  if (theta.size() != d) throw ShapeError("warm start dimension differs from the grid");

  // Exponentials at the current iterate are kept so that an accepted trial
  // point never pays for them twice.
  Vector e, ex;
  auto dual_at = [&](const Vector& th, Vector& e_out, Vector& ex_out) {
    e_out = clamped_exponents(grid, th);
    ex_out = e_out.array().exp().matrix();
    return w.dot((ex_out.array() - 1.0 - e_out.array()).matrix()) - th.dot(v);
  };
  Vector grad(d);
  Matrix hess(d, d);
  auto derivatives = [&]() {
    grad = zt.transpose() * (w.array() * (ex.array() - 1.0)).matrix() - v;
    hess = weighted_second_moment(zt, (w.array() * ex.array()).matrix());
  };

  double dual = dual_at(theta, e, ex);
  derivatives();
  Vector te, tex;
  for (int it = 0; it <= options.max_iterations; ++it) {
    if (!std::isfinite(dual) || !grad.allFinite()) divergence("Legendre transform");
    if (grad.norm() < options.tolerance) {
      LegendreResult r;
      r.theta = theta;
      r.local_cost = std::max(0.0, -dual);
      r.iterations = it;
      return r;
    }
    if (it == options.max_iterations) break;
    const Vector step = -hess.ldlt().solve(grad);
    double t = 1.0;
    Vector trial = theta + step;
    double trial_dual = dual_at(trial, te, tex);
    int halvings = 0;
    // Below this the predicted decrease is lost in the rounding of the dual.
    const bool damp = -grad.dot(step) > 1e-13 * (1.0 + std::abs(dual));
    while (damp && !(trial_dual <= dual) && halvings < 60) {
      t *= 0.5;
      trial = theta + t * step;
      trial_dual = dual_at(trial, te, tex);
      ++halvings;
    }
    if (halvings == 60) {
      // Objective flat to rounding; accept the full step and let the
      // gradient test decide.
      trial = theta + step;
      trial_dual = dual_at(trial, te, tex);
    }
    theta = trial;
    dual = trial_dual;
    e.swap(te);
    ex.swap(tex);
    derivatives();
  }
  throw RangeError("Legendre transform did not converge in " + std::to_string(options.max_iterations) +
                   " Newton iterations (|grad H - v| = " + std::to_string(grad.norm()) +
                   "); the velocity is too large for the integration box");
}

double msd_constant(const QuadratureGrid& grid) {
  return grid.weights().dot(grid.nodes().colwise().squaredNorm().transpose());
}

double truncation_mass_deficit(const QuadratureGrid& grid) {
  return analytic_total_mass(grid.spec()) - total_mass(grid);
}

Vector sample_jump(const LevyMeasureSpec& spec, std::mt19937_64& rng) {
  const int d = spec.dimension;
  std::gamma_distribution<double> shape(static_cast<double>(d) / spec.gamma, 1.0);
  const double r = std::pow(shape(rng), 1.0 / spec.gamma);
  Vector z(d);
  if (d == 1) {
    std::bernoulli_distribution sign(0.5);
    z(0) = sign(rng) ? r : -r;
  } else if (d == 2) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double a = angle(rng);
    z << r * std::cos(a), r * std::sin(a);
  } else {
    std::normal_distribution<double> normal;
    Vector u(d);
    do {
      for (int j = 0; j < d; ++j) u(j) = normal(rng);
    } while (u.norm() == 0.0);
    z = r * u / u.norm();
  }
  return z;
}

MonteCarloEstimate monte_carlo_integral(const LevyMeasureSpec& spec, const std::function<double(const Vector&)>& f,
                                        std::int64_t samples, std::uint64_t seed) {
  spec.validate();
  if (samples < 2) throw ConfigError("samples", "need at least two samples");
  std::mt19937_64 rng(seed);
  double mean = 0, m2 = 0;
  for (std::int64_t i = 0; i < samples; ++i) {
    const double x = f(sample_jump(spec, rng));
    const double delta = x - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (x - mean);
  }
  const double mass = analytic_total_mass(spec);
  const double var = m2 / static_cast<double>(samples - 1);
  return {mass * mean, mass * std::sqrt(var / static_cast<double>(samples))};
}

}  // namespace instanton::levy
