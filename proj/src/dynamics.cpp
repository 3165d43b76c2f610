#include "instanton/dynamics.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

namespace instanton {

DriftField::DriftField(std::string name, int dimension, std::map<std::string, double> params, ValueFn value,
                       JacobianFn jacobian, std::vector<Vector> equilibria)
    : name_(std::move(name)),
      dimension_(dimension),
      params_(std::move(params)),
      value_(std::move(value)),
      jacobian_(std::move(jacobian)),
      equilibria_(std::move(equilibria)) {
  if (dimension_ < 1) throw ConfigError("dimension", "drift dimension must be positive");
  if (!value_ || !jacobian_) throw ConfigError("drift", "value and Jacobian are both required");
}

Vector DriftField::operator()(const Vector& x) const {
  if (x.size() != dimension_) throw ShapeError("drift '" + name_ + "' expects dimension " + std::to_string(dimension_));
  return value_(x);
}

Matrix DriftField::jacobian(const Vector& x) const {
  if (x.size() != dimension_) throw ShapeError("drift '" + name_ + "' expects dimension " + std::to_string(dimension_));
  return jacobian_(x);
}

Matrix DriftField::evaluate(const Matrix& xs) const {
  if (xs.rows() != dimension_) throw ShapeError("drift '" + name_ + "' expects dimension " + std::to_string(dimension_));
  Matrix out(xs.rows(), xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) out.col(j) = value_(xs.col(j));
  return out;
}

Eigen::Vector2d maier_stein_drift(double x, double y, double beta) {
  return {x - x * x * x - beta * x * y * y, -(1.0 + x * x) * y};
}

double maier_stein_potential(double x, double y) {
  return -0.5 * x * x + 0.25 * x * x * x * x + 0.5 * y * y + 0.5 * x * x * y * y;
}

DriftField maier_stein(double beta) {
  if (!std::isfinite(beta)) throw ConfigError("beta", "must be finite");
  auto value = [beta](const Vector& p) -> Vector { return maier_stein_drift(p(0), p(1), beta); };
  auto jac = [beta](const Vector& p) -> Matrix {
    const double x = p(0), y = p(1);
    Matrix j(2, 2);
    j << 1.0 - 3.0 * x * x - beta * y * y, -2.0 * beta * x * y, -2.0 * x * y, -(1.0 + x * x);
    return j;
  };
  std::vector<Vector> eq{Eigen::Vector2d(-1, 0), Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)};
  return DriftField("maier_stein", 2, {{"beta", beta}}, value, jac, std::move(eq));
}

DriftField zero_drift(int dimension) {
  if (dimension < 1) throw ConfigError("dimension", "must be positive");
  return DriftField(
      "zero", dimension, {{"dimension", dimension}}, [dimension](const Vector&) -> Vector { return Vector::Zero(dimension); },
      [dimension](const Vector&) -> Matrix { return Matrix::Zero(dimension, dimension); });
}

DriftField linear_drift(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) throw ConfigError("matrix", "linear drift needs a square matrix");
  const int d = static_cast<int>(a.rows());
  return DriftField(
      "linear", d, {}, [a](const Vector& x) -> Vector { return a * x; }, [a](const Vector&) -> Matrix { return a; },
      {Vector::Zero(d)});
}

namespace {

struct Registry {
  std::mutex mutex;
  std::map<std::string, DriftFactory> factories;
  Registry();
};

double param_or(const std::map<std::string, double>& params, const std::string& key, double fallback) {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void reject_unknown(const std::string& drift, const std::map<std::string, double>& params,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : params) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(key, "unknown parameter for drift '" + drift + "'");
  }
}

Registry::Registry() {
  factories["maier_stein"] = [](const std::map<std::string, double>& p) {
    reject_unknown("maier_stein", p, {"beta"});
    return maier_stein(param_or(p, "beta", 1.0));
  };
  factories["zero"] = [](const std::map<std::string, double>& p) {
    reject_unknown("zero", p, {"dimension"});
    const double d = param_or(p, "dimension", 2.0);
    if (d != std::floor(d)) throw ConfigError("dimension", "must be an integer");
    return zero_drift(static_cast<int>(d));
  };
}

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_drift(const std::string& name, DriftFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.factories[name] = std::move(factory);
}

std::vector<std::string> registered_drifts() {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  std::vector<std::string> names;
  for (const auto& [name, f] : r.factories) names.push_back(name);
  return names;
}

DriftField make_drift(const std::string& name, const std::map<std::string, double>& params) {
  DriftFactory factory;
  {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    const auto it = r.factories.find(name);
    if (it != r.factories.end()) factory = it->second;
  }
  if (!factory) {
    std::ostringstream msg;
    msg << "unknown drift '" << name << "'; registered drifts:";
    for (const auto& n : registered_drifts()) msg << ' ' << n;
    throw ConfigError("drift", msg.str());
  }
  return factory(params);
}

DiffusionField DiffusionField::identity(int dimension) {
  if (dimension < 1) throw ConfigError("dimension", "must be positive");
  DiffusionField f;
  f.sigma_ = Matrix::Identity(dimension, dimension);
  f.identity_ = true;
  return f;
}

DiffusionField DiffusionField::constant(Matrix sigma) {
  if (sigma.size() == 0 || !sigma.allFinite()) throw ConfigError("sigma", "diffusion matrix must be non-empty and finite");
  DiffusionField f;
  f.identity_ = sigma.rows() == sigma.cols() && sigma.isIdentity(0.0);
  f.sigma_ = std::move(sigma);
  return f;
}

std::string to_string(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "levy"; }

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "levy") return NoiseKind::levy;
  throw ConfigError("noise", "expected 'gaussian' or 'levy', got '" + s + "'");
}

levy::QuadratureGrid ControlProblem::grid() const {
  return levy::build_grid(levy, quadrature.half_width, quadrature.mesh);
}

void validate_problem(const ControlProblem& p, bool transition) {
  const int d = p.drift.dimension();
  if (d < 1) throw ConfigError("drift", "no drift field set");
  if (p.x1.size() != d) throw ConfigError("x1", "expected " + std::to_string(d) + " coordinates");
  if (p.x2.size() != d) throw ConfigError("x2", "expected " + std::to_string(d) + " coordinates");
  if (!p.x1.allFinite()) throw ConfigError("x1", "must be finite");
  if (!p.x2.allFinite()) throw ConfigError("x2", "must be finite");
  if (transition && p.x1 == p.x2) throw ConfigError("x2", "end point equals start point");
  if (!std::isfinite(p.horizon) || !(p.horizon > 0)) throw ConfigError("T", "horizon must be finite and > 0");
  if (p.residual_count < 2) throw ConfigError("N_T", "need at least two residual points");
  for (auto [name, value] : {std::pair{"tau", p.tau}, std::pair{"tau1", p.tau1}, std::pair{"tau2", p.tau2}}) {
    if (!std::isfinite(value) || !(value > 0)) throw ConfigError(name, "penalty weight must be finite and > 0");
  }
  if (transition && p.endpoints_metastable) {
    if (p.drift(p.x1).norm() >= 1e-8) throw ConfigError("x1", "not an equilibrium of the drift (|b| >= 1e-8)");
    if (p.drift(p.x2).norm() >= 1e-8) throw ConfigError("x2", "not an equilibrium of the drift (|b| >= 1e-8)");
  }
  if (p.noise == NoiseKind::gaussian) {
    if (p.diffusion.dimension() != d) throw ConfigError("sigma", "diffusion rows must equal the state dimension");
  } else {
    p.levy.validate();
    if (p.levy.dimension != d) throw ConfigError("dimension", "jump measure dimension differs from the drift");
    const auto& q = p.quadrature;
    if (!std::isfinite(q.half_width) || !(q.half_width > 0)) throw ConfigError("R", "must be finite and > 0");
    if (!std::isfinite(q.mesh) || !(q.mesh > 0) || q.mesh > q.half_width) {
      throw ConfigError("delta", "must be finite, > 0 and at most R");
    }
  }
}

ad::Var apply_drift(const DriftField& drift, ad::Var xs) {
  if (xs.rows() != drift.dimension()) throw ShapeError("drift input has the wrong number of rows");
  const int xi = xs.index();
  return xs.tape().record(
      {xs}, [drift, xi](ad::Tape& t, Matrix& out) { out = drift.evaluate(t.value_at(xi)); },
      [drift, xi](ad::Tape& t, const Matrix&, const Matrix& adj) {
        if (!t.needs_adjoint(xi)) return;
        const Matrix& x = t.value_at(xi);
        Matrix g(x.rows(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) g.col(j) = drift.jacobian(x.col(j)).transpose() * adj.col(j);
        t.accumulate(xi, g);
      });
}

}  // namespace instanton
