#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "fd.hpp"
#include "instanton/action_oracle.hpp"

using namespace instanton;

namespace {

ControlProblem gaussian_problem(double beta, double horizon = 100.0) {
  ControlProblem p;
  p.drift = maier_stein(beta);
  p.diffusion = DiffusionField::identity(2);
  p.x1 = Eigen::Vector2d(-1, 0);
  p.x2 = Eigen::Vector2d(1, 0);
  p.horizon = horizon;
  return p;
}

ControlProblem levy_problem(double beta, double gamma, double horizon) {
  ControlProblem p = gaussian_problem(beta, horizon);
  p.noise = NoiseKind::levy;
  p.levy = {gamma, 2};
  p.quadrature = {5.0, 0.25};
  return p;
}

Path random_path(int n, double horizon, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  Path p = straight_path(Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 0), horizon, n);
  for (int j = 1; j < n - 1; ++j) p.states.col(j) += Eigen::Vector2d(u(rng), u(rng));
  return p;
}

Eigen::Vector2d rk4_step(const DriftField& b, const Eigen::Vector2d& x, double h) {
  const Vector k1 = b(x);
  const Vector k2 = b(x + 0.5 * h * k1);
  const Vector k3 = b(x + 0.5 * h * k2);
  const Vector k4 = b(x + h * k3);
  return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

}  // namespace

TEST_CASE("gaussian_action closed forms") {
  const auto ms = maier_stein(1.0);
  const auto id = DiffusionField::identity(2);
  Path rest = straight_path(Eigen::Vector2d(-1, 0), Eigen::Vector2d(-1, 0), 10.0, 50);
  CHECK(gaussian_action(rest, ms, id) == 0.0);

  const Path line = straight_path(Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 0), 100.0, 100);
  CHECK(std::abs(gaussian_action(line, zero_drift(2), id) - 0.02) < 1e-6);

  // Scaling the noise by 2 divides the action by 4.
  CHECK(std::abs(gaussian_action(line, zero_drift(2), DiffusionField::constant(2 * Matrix::Identity(2, 2))) - 0.005) <
        1e-12);

  Matrix singular(2, 2);
  singular << 1, 2, 2, 4;
  CHECK_THROWS_AS(gaussian_action(line, zero_drift(2), DiffusionField::constant(singular)), NumericalError);
}

TEST_CASE("gaussian_action: downhill flow is free") {
  const auto b = maier_stein(10.0);
  const int n = 401;
  const double horizon = 10.0;
  Path p;
  p.times = Vector::LinSpaced(n, 0, horizon);
  p.states.resize(2, n);
  Eigen::Vector2d x(0.3, 0.8);
  const int sub = 100;
  const double h = horizon / (n - 1) / sub;
  for (int j = 0; j < n; ++j) {
    p.states.col(j) = x;
    for (int k = 0; k < sub; ++k) x = rk4_step(b, x, h);
  }
  CHECK(gaussian_action(p, b, DiffusionField::identity(2)) < 1e-4);
}

TEST_CASE("action gradients match finite differences") {
  const auto b = maier_stein(10.0);
  Matrix sigma(2, 2);
  sigma << 1.0, 0.2, -0.1, 0.7;
  const auto diff = DiffusionField::constant(sigma);
  const auto grid = build_grid(levy::LevyMeasureSpec{1.5, 2}, 5.0, 0.5);
  const Path base = random_path(12, 5.0, 8);

  Matrix gg, gl;
  gaussian_action(base, b, diff, gg);
  levy_action(base, b, grid, nullptr, &gl);
  for (Eigen::Index j = 0; j < base.size(); ++j) {
    for (int i = 0; i < 2; ++i) {
      auto perturbed = [&](const Vector& v, bool levy_mode) {
        Path p = base;
        p.states(i, j) = v(0);
        return levy_mode ? levy_action(p, b, grid) : gaussian_action(p, b, diff);
      };
      Vector x0(1);
      x0 << base.states(i, j);
      const double fg = testing::central_difference([&](const Vector& v) { return perturbed(v, false); }, x0, 0);
      const double fl = testing::central_difference([&](const Vector& v) { return perturbed(v, true); }, x0, 0);
      CHECK(testing::rel_err(gg(i, j), fg) < 1e-6);
      CHECK(testing::rel_err(gl(i, j), fl) < 1e-6);
    }
  }
}

TEST_CASE("minimize_gaussian_action: free particle gives the straight segment") {
  ControlProblem p = gaussian_problem(1.0);
  p.drift = zero_drift(2);
  CollocationSettings s;
  s.nodes = 50;
  s.tolerance = 0;
  s.iterations = 20000;
  const auto r = minimize_gaussian_action(p, s);
  const Path line = straight_path(p.x1, p.x2, p.horizon, s.nodes);
  CHECK((r.path.states - line.states).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(std::abs(r.action - 0.02) < 1e-6);
}

TEST_CASE("minimize_gaussian_action: Maier-Stein") {
  CollocationSettings s;
  s.nodes = 100;
  const auto r1 = minimize_gaussian_action(gaussian_problem(1.0), s);
  CHECK(r1.converged);
  CHECK(std::abs(r1.action - 0.5) < 0.15 * 0.5);
  CHECK(r1.path.states.row(1).cwiseAbs().maxCoeff() < 0.05);
  CHECK(r1.path.states.col(0) == Eigen::Vector2d(-1, 0));
  CHECK(r1.path.states.col(s.nodes - 1) == Eigen::Vector2d(1, 0));

  const auto r10 = minimize_gaussian_action(gaussian_problem(10.0), s);
  CHECK(distance_to_curve(r10.path, Eigen::Vector2d(0, 0)) < 0.1);
  // Beyond beta = 4 the instanton leaves the x axis.
  CHECK(r10.path.states.row(1).maxCoeff() > 0.2);
  CHECK(r10.action < r1.action);

  // Refinement: N = 200 -> 400.
  s.nodes = 200;
  const double a200 = minimize_gaussian_action(gaussian_problem(10.0), s).action;
  s.nodes = 400;
  const double a400 = minimize_gaussian_action(gaussian_problem(10.0), s).action;
  CHECK(std::abs(a200 - a400) < 0.02 * a400);
}

TEST_CASE("minimize_gaussian_action: mirrored perturbation picks the mirrored branch") {
  CollocationSettings s;
  s.nodes = 100;
  const auto up = minimize_gaussian_action(gaussian_problem(10.0), s);
  s.perturbation = -1e-3;
  const auto down = minimize_gaussian_action(gaussian_problem(10.0), s);
  CHECK(std::abs(up.action - down.action) < 1e-6);
  CHECK((up.path.states.row(1) + down.path.states.row(1)).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("time reversal: uphill costs, downhill is free") {
  ControlProblem p = gaussian_problem(1.0);
  p.x2 = Eigen::Vector2d(0, 0);
  CollocationSettings s;
  s.nodes = 200;
  const auto r = minimize_gaussian_action(p, s);
  CHECK(std::abs(r.action - 0.5) < 0.15 * 0.5);
  CHECK(gaussian_action(r.path.reversed(), p.drift, p.diffusion) < 1e-3);
}

TEST_CASE("collocation settings validation") {
  CollocationSettings s;
  s.nodes = 7;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.learning_rate = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(minimize_levy_action(gaussian_problem(1.0), CollocationSettings{}), ConfigError);
  CHECK_THROWS_AS(minimize_gaussian_action(levy_problem(1.0, 2.0, 1.0), CollocationSettings{}), ConfigError);
}

TEST_CASE("levy_local_cost") {
  const auto fine = build_grid(levy::LevyMeasureSpec{2.0, 2}, 5.0, 0.05);
  CHECK(levy_local_cost(fine, Vector::Zero(2)) == 0.0);
  const Vector th0 = Eigen::Vector2d(0.5, 0);
  const Vector v = levy::cumulant_gradient(fine, th0);
  const double expect = th0.dot(v) - std::numbers::pi * (std::exp(0.0625) - 1);
  CHECK(std::abs(levy_local_cost(fine, v) - expect) < 1e-6);
  CHECK(std::abs(levy_local_cost(fine, v) - levy_local_cost(fine, -v)) < 1e-12);
}

TEST_CASE("levy_local_cost: envelope identity") {
  const auto grid = build_grid(levy::LevyMeasureSpec{1.01, 2}, 5.0, 0.25);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;
  for (int i = 0; i < 20; ++i) {
    const Vector v = Eigen::Vector2d(n(rng), n(rng));
    Vector u = Eigen::Vector2d(n(rng), n(rng));
    u.normalize();
    const double h = 1e-5;
    const double fd = (levy_local_cost(grid, v + h * u) - levy_local_cost(grid, v - h * u)) / (2 * h);
    const Vector theta = levy::legendre(grid, v).theta;
    CHECK(testing::rel_err(fd, theta.dot(u)) < 1e-4);
  }
}

TEST_CASE("levy_action") {
  const auto grid = build_grid(levy::LevyMeasureSpec{1.01, 2}, 5.0, 0.25);
  const Path rest = straight_path(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0), 20.0, 30);
  Matrix theta;
  CHECK(levy_action(rest, maier_stein(10.0), grid, &theta) == 0.0);
  CHECK(theta.cols() == 29);
  CHECK(theta.isZero(0.0));

  // Constant velocity under zero drift: T * L(v).
  const Path line = straight_path(Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 0), 4.0, 9);
  CHECK(std::abs(levy_action(line, zero_drift(2), grid) - 4.0 * levy_local_cost(grid, Eigen::Vector2d(0.5, 0))) <
        1e-12);

  Path wild = line;
  wild.states(0, 4) = 1e60;
  try {
    levy_action(wild, zero_drift(2), grid);
    FAIL("expected RangeError");
  } catch (const RangeError& e) {
    CHECK(std::string(e.what()).find("interval 3") != std::string::npos);
  }
}

TEST_CASE("minimize_levy_action: Maier-Stein beta = 10") {
  const ControlProblem p = levy_problem(10.0, 1.01, 20.0);
  CollocationSettings s;
  s.nodes = 60;
  const auto r = minimize_levy_action(p, s);
  CHECK(r.theta.cols() == s.nodes - 1);
  CHECK(r.theta.rows() == 2);
  CHECK(r.action > 0);
  CHECK(distance_to_curve(r.path, Eigen::Vector2d(0, 0)) < 0.1);
  Matrix theta;
  CHECK(std::abs(levy_action(r.path, p.drift, p.grid(), &theta) - r.action) < 1e-12);
  CHECK((theta - r.theta).norm() < 1e-8);

  // The Gaussian oracle on the same horizon traces nearly the same curve.
  ControlProblem g = gaussian_problem(10.0, 20.0);
  const auto rg = minimize_gaussian_action(g, s);
  CHECK(hausdorff_distance(r.path, rg.path) < 0.15);
}

TEST_CASE("oracles: staying at an equilibrium costs nothing") {
  ControlProblem p = levy_problem(10.0, 1.01, 10.0);
  p.x2 = p.x1;
  CollocationSettings s;
  s.nodes = 20;
  s.perturbation = 0;
  const auto r = minimize_levy_action(p, s);
  CHECK(r.action == 0.0);
  CHECK((r.path.states.colwise() - p.x1).cwiseAbs().maxCoeff() == 0.0);

  ControlProblem g = gaussian_problem(1.0, 10.0);
  g.x2 = g.x1;
  CHECK(minimize_gaussian_action(g, s).action == 0.0);
}
