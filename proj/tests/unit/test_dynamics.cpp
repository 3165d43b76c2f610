#include "doctest.h"

#include <random>

#include "fd.hpp"
#include "instanton/dynamics.hpp"

using namespace instanton;

namespace {

ControlProblem maier_stein_problem(double beta = 1.0) {
  ControlProblem p;
  p.drift = maier_stein(beta);
  p.diffusion = DiffusionField::identity(2);
  p.x1 = Eigen::Vector2d(-1, 0);
  p.x2 = Eigen::Vector2d(1, 0);
  return p;
}

}  // namespace

TEST_CASE("maier_stein_drift") {
  for (double beta : {0.0, 1.0, 10.0}) {
    CHECK(maier_stein_drift(1, 0, beta).isZero(0.0));
    CHECK(maier_stein_drift(-1, 0, beta).isZero(0.0));
    CHECK(maier_stein_drift(0, 0, beta).isZero(0.0));
    for (const auto& e : maier_stein(beta).equilibria()) CHECK(maier_stein(beta)(e).norm() < 1e-12);
  }
  const auto b = maier_stein_drift(0.5, 0.5, 1.0);
  CHECK(b(0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(b(1) == doctest::Approx(-0.625).epsilon(1e-15));
}

TEST_CASE("maier_stein_potential") {
  CHECK(maier_stein_potential(-1, 0) == -0.25);
  CHECK(maier_stein_potential(0, 0) == 0.0);

  // grad V by reverse mode must equal -b(beta = 1).
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 50; ++i) {
    const double x0 = u(rng), y0 = u(rng);
    ad::Tape tape;
    auto x = tape.variable_scalar(x0);
    auto y = tape.variable_scalar(y0);
    auto x2 = ad::square(x);
    auto y2 = ad::square(y);
    auto v = -0.5 * x2 + 0.25 * ad::square(x2) + 0.5 * y2 + 0.5 * (x2 * y2);
    CHECK(v.scalar() == doctest::Approx(maier_stein_potential(x0, y0)).epsilon(1e-14));
    tape.backward(v);
    const auto b = maier_stein_drift(x0, y0, 1.0);
    CHECK(std::abs(tape.adjoint(x)(0, 0) + b(0)) < 1e-12);
    CHECK(std::abs(tape.adjoint(y)(0, 0) + b(1)) < 1e-12);
  }
}

TEST_CASE("drift Jacobians match finite differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  Eigen::Matrix2d a;
  a << -1, 0.3, 0.2, -2;
  for (const auto& field : {maier_stein(1.0), maier_stein(10.0), linear_drift(a), zero_drift(2)}) {
    for (int i = 0; i < 10; ++i) {
      const Vector x = Eigen::Vector2d(u(rng), u(rng));
      const Matrix j = field.jacobian(x);
      for (int c = 0; c < 2; ++c) {
        for (int r = 0; r < 2; ++r) {
          const double fd = testing::central_difference([&](const Vector& p) { return field(p)(r); }, x, c);
          CHECK(std::abs(j(r, c) - fd) < 1e-7);
        }
      }
    }
  }
}

TEST_CASE("drift is pure") {
  const auto b = maier_stein(10.0);
  const Vector x = Eigen::Vector2d(0.3, -0.7);
  CHECK(b(x) == b(x));
  Matrix xs(2, 3);
  xs << 0.1, 0.2, 0.3, -0.4, 0.5, 0.6;
  const Matrix out = b.evaluate(xs);
  for (int j = 0; j < 3; ++j) CHECK(out.col(j) == b(xs.col(j)));
  CHECK_THROWS_AS(b(Vector::Zero(3)), ShapeError);
}

TEST_CASE("drift registry") {
  const auto names = registered_drifts();
  CHECK(std::find(names.begin(), names.end(), "maier_stein") != names.end());
  CHECK(make_drift("maier_stein", {{"beta", 10.0}}).params().at("beta") == 10.0);
  CHECK(make_drift("maier_stein").params().at("beta") == 1.0);
  CHECK(make_drift("zero", {{"dimension", 3}}).dimension() == 3);
  try {
    make_drift("duffing");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("maier_stein") != std::string::npos);
  }
  CHECK_THROWS_AS(make_drift("maier_stein", {{"alpha", 1.0}}), ConfigError);

  register_drift("shifted", [](const std::map<std::string, double>&) {
    return DriftField("shifted", 1, {}, [](const Vector& x) -> Vector { return -(x.array() - 1.0).matrix(); },
                      [](const Vector&) -> Matrix { return -Matrix::Identity(1, 1); });
  });
  CHECK(make_drift("shifted")(Vector::Zero(1))(0) == 1.0);
}

TEST_CASE("apply_drift on the tape") {
  const auto b = maier_stein(10.0);
  Matrix xs(2, 4);
  xs << 0.1, -0.8, 0.4, 1.2, 0.3, -0.2, 0.9, 0.05;
  ad::Tape tape;
  auto x = tape.variable(xs);
  Matrix w = Matrix::Random(2, 4);
  auto out = ad::weighted_sum(apply_drift(b, x), tape.constant(w));
  tape.backward(out);
  const Matrix grad = tape.adjoint(x);
  for (int j = 0; j < 4; ++j) {
    for (int r = 0; r < 2; ++r) {
      auto f = [&](const Vector& flat) {
        Matrix m = xs;
        m(r, j) = flat(0);
        return b.evaluate(m).cwiseProduct(w).sum();
      };
      Vector p(1);
      p << xs(r, j);
      CHECK(testing::rel_err(grad(r, j), testing::central_difference(f, p, 0)) < 1e-7);
    }
  }
  // Replay after moving the leaf.
  tape.set_value(x, 2 * xs);
  tape.replay();
  CHECK(std::abs(out.scalar() - b.evaluate(2 * xs).cwiseProduct(w).sum()) < 1e-12);
}

TEST_CASE("validate_problem") {
  CHECK_NOTHROW(validate_problem(maier_stein_problem()));
  CHECK_NOTHROW(validate_problem(maier_stein_problem(10.0)));

  auto expect_field = [](const ControlProblem& p, const std::string& field) {
    try {
      validate_problem(p);
      FAIL("expected ConfigError for " << field);
    } catch (const ConfigError& e) {
      CHECK(e.field() == field);
    }
  };

  auto p = maier_stein_problem();
  p.x2 = p.x1;
  expect_field(p, "x2");

  p = maier_stein_problem();
  p.tau2 = 0;
  expect_field(p, "tau2");
  p = maier_stein_problem();
  p.tau1 = -1;
  expect_field(p, "tau1");
  p = maier_stein_problem();
  p.tau = NAN;
  expect_field(p, "tau");

  p = maier_stein_problem();
  p.x1 = Eigen::Vector2d(-0.9, 0);
  expect_field(p, "x1");
  p.endpoints_metastable = false;
  CHECK_NOTHROW(validate_problem(p));

  p = maier_stein_problem();
  p.residual_count = 1;
  expect_field(p, "N_T");
  p = maier_stein_problem();
  p.horizon = 0;
  expect_field(p, "T");
  p = maier_stein_problem();
  p.x2 = Vector::Zero(3);
  expect_field(p, "x2");

  p = maier_stein_problem();
  p.noise = NoiseKind::levy;
  p.levy = {1.01, 2};
  CHECK_NOTHROW(validate_problem(p));
  p.quadrature.mesh = 0;
  expect_field(p, "delta");
  p.quadrature.mesh = 0.25;
  p.levy.gamma = 0.5;
  expect_field(p, "gamma");
}

TEST_CASE("diffusion fields") {
  const auto id = DiffusionField::identity(2);
  CHECK(id.is_identity());
  CHECK(id(Vector::Zero(2)).isIdentity(0.0));
  Matrix s(2, 1);
  s << 1.0, 0.5;
  const auto c = DiffusionField::constant(s);
  CHECK(!c.is_identity());
  CHECK(c.noise_dimension() == 1);
  CHECK_THROWS_AS(DiffusionField::constant(Matrix::Constant(2, 2, NAN)), ConfigError);
  CHECK(noise_kind_from_string(to_string(NoiseKind::levy)) == NoiseKind::levy);
  CHECK_THROWS_AS(noise_kind_from_string("cauchy"), ConfigError);
}
