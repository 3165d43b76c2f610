#pragma once

// Drift and diffusion fields and the transition problem built from them.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "instanton/autodiff/tape.hpp"
#include "instanton/errors.hpp"
#include "instanton/levy_measure.hpp"

namespace instanton {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// b : R^d -> R^d with its Jacobian. Immutable once built.
class DriftField {
 public:
  using ValueFn = std::function<Vector(const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&)>;

  DriftField() = default;
  DriftField(std::string name, int dimension, std::map<std::string, double> params, ValueFn value,
             JacobianFn jacobian, std::vector<Vector> equilibria = {});

  const std::string& name() const noexcept { return name_; }
  int dimension() const noexcept { return dimension_; }
  const std::map<std::string, double>& params() const noexcept { return params_; }
  /// Known equilibria, |b| < 1e-12 at each.
  const std::vector<Vector>& equilibria() const noexcept { return equilibria_; }

  Vector operator()(const Vector& x) const;
  Matrix jacobian(const Vector& x) const;
  /// Column-wise evaluation of a d x N batch.
  Matrix evaluate(const Matrix& xs) const;

 private:
  std::string name_;
  int dimension_ = 0;
  std::map<std::string, double> params_;
  ValueFn value_;
  JacobianFn jacobian_;
  std::vector<Vector> equilibria_;
};

Eigen::Vector2d maier_stein_drift(double x, double y, double beta);
/// Potential of the beta = 1 field: b = -grad V.
double maier_stein_potential(double x, double y);

DriftField maier_stein(double beta);
/// b = 0 in dimension d.
DriftField zero_drift(int dimension);
/// b(x) = A x.
DriftField linear_drift(const Matrix& a);

// ---- registry ---------------------------------------------------------------

using DriftFactory = std::function<DriftField(const std::map<std::string, double>&)>;

/// Built in: "maier_stein" (beta, default 1), "zero" (dimension, default 2).
void register_drift(const std::string& name, DriftFactory factory);
std::vector<std::string> registered_drifts();
/// Throws ConfigError listing the registered names if `name` is unknown.
DriftField make_drift(const std::string& name, const std::map<std::string, double>& params = {});

/// Constant diffusion matrix sigma (d x m).
class DiffusionField {
 public:
  /// Identity in dimension d.
  static DiffusionField identity(int dimension);
  static DiffusionField constant(Matrix sigma);

  DiffusionField() = default;

  bool is_identity() const noexcept { return identity_; }
  int dimension() const { return static_cast<int>(sigma_.rows()); }
  int noise_dimension() const { return static_cast<int>(sigma_.cols()); }
  const Matrix& matrix() const noexcept { return sigma_; }
  Matrix operator()(const Vector&) const { return sigma_; }

 private:
  Matrix sigma_;
  bool identity_ = false;
};

enum class NoiseKind { gaussian, levy };

std::string to_string(NoiseKind k);
NoiseKind noise_kind_from_string(const std::string& s);

struct QuadratureParams {
  double half_width = 5.0;
  double mesh = 0.25;
};

struct ControlProblem {
  DriftField drift;
  NoiseKind noise = NoiseKind::gaussian;
  DiffusionField diffusion;
  levy::LevyMeasureSpec levy;
  QuadratureParams quadrature;

  Vector x1;
  Vector x2;
  double horizon = 100.0;
  int residual_count = 200;
  /// tau, tau1, tau2 for the Levy loss; tau^BM, tau1^BM, tau2^BM for Gaussian.
  double tau = 0.1;
  double tau1 = 100.0;
  double tau2 = 10.0;
  /// Require |b(x1)|, |b(x2)| < 1e-8.
  bool endpoints_metastable = true;

  int dimension() const { return drift.dimension(); }
  levy::QuadratureGrid grid() const;
};

/// Throws ConfigError naming the offending field. With `transition` false the
/// end-point checks (x1 != x2, metastability) are skipped, which is all the
/// loss functions themselves need.
void validate_problem(const ControlProblem& p, bool transition = true);

/// b applied to every column of a d x N node, differentiable through the
/// drift Jacobian.
ad::Var apply_drift(const DriftField& drift, ad::Var xs);

}  // namespace instanton
