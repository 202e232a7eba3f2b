#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ptdelta/numerics.hpp"

using namespace ptdelta;

namespace {

// y = (cos x, -sin x) solves y0' = y1, y1' = -y0.
const OdeRhs kOscillator = [](double, const StateVector& y, StateVector& d) {
  d[0] = y[1];
  d[1] = -y[0];
};

StateVector initial(cplx a, cplx b) {
  StateVector y(2);
  y << a, b;
  return y;
}

}  // namespace

TEST_CASE("integrator reproduces the harmonic oscillator") {
  IntegratorConfig cfg;
  const Trajectory t = integrate_piecewise(kOscillator, {}, 0.0, 10.0, initial(1.0, 0.0), cfg);
  CHECK(t.final_x() == doctest::Approx(10.0));
  CHECK(std::abs(t.final_state()[0] - std::cos(10.0)) < 1e-9);
  CHECK(std::abs(t.final_state()[1] + std::sin(10.0)) < 1e-9);

  const Trajectory back = integrate_piecewise(kOscillator, {}, 0.0, -3.0, initial(1.0, 0.0), cfg);
  CHECK(std::abs(back.final_state()[0] - std::cos(3.0)) < 1e-9);
}

TEST_CASE("jumps are applied forward and inverted backward") {
  JumpCondition jump{1.0, Eigen::MatrixXcd::Identity(2, 2)};
  jump.transform(1, 0) = cplx(-2.0, 0.5);
  IntegratorConfig cfg;
  const OdeRhs free = [](double, const StateVector& y, StateVector& d) {
    d[0] = y[1];
    d[1] = 0.0;
  };
  const Trajectory fwd = integrate_piecewise(free, {jump}, 0.0, 2.0, initial(1.0, 0.0), cfg);
  CHECK(fwd.segments.size() == 2);
  // psi = 1 up to the jump, slope c afterwards.
  CHECK(std::abs(fwd.final_state()[0] - (1.0 + cplx(-2.0, 0.5))) < 1e-10);

  const Trajectory rev = integrate_piecewise(free, {jump}, 2.0, 0.0, fwd.final_state(), cfg);
  CHECK(std::abs(rev.final_state()[0] - 1.0) < 1e-10);
  CHECK(std::abs(rev.final_state()[1]) < 1e-10);
}

TEST_CASE("quadrature integrates along the trajectory") {
  IntegratorConfig cfg;
  const Trajectory t = integrate_piecewise(kOscillator, {}, 0.0, M_PI, initial(1.0, 0.0), cfg);
  const cplx v = quadrature(t, [](double, const StateVector& y) { return std::norm(y[0]); });
  CHECK(std::abs(v - M_PI / 2.0) < 1e-9);
  const Trajectory r = integrate_piecewise(kOscillator, {}, M_PI, 0.0, t.final_state(), cfg);
  const cplx w = quadrature(r, [](double, const StateVector& y) { return std::norm(y[0]); });
  CHECK(std::abs(w + M_PI / 2.0) < 1e-9);
}

TEST_CASE("integrator config validation") {
  IntegratorConfig cfg;
  cfg.abs_tol = -1.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.max_step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("newton solves a small nonlinear system") {
  const RealResidual f = [](const RealVector& x) {
    RealVector r(2);
    r << x[0] * x[0] + x[1] * x[1] - 4.0, x[0] - x[1];
    return r;
  };
  RealVector guess(2);
  guess << 1.0, 2.0;
  const NewtonResult res = newton_solve(f, guess, {});
  CHECK(res.root[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
  CHECK(res.root[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
  CHECK(res.residual_norm < 1e-10);
}

TEST_CASE("newton reports failure") {
  const RealResidual f = [](const RealVector& x) {
    RealVector r(1);
    r << x[0] * x[0] + 1.0;
    return r;
  };
  RealVector guess(1);
  guess << 0.5;
  NewtonConfig cfg;
  cfg.max_iterations = 10;
  CHECK_THROWS(newton_solve(f, guess, cfg));
}

TEST_CASE("bisection") {
  const double r = bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0, 1e-14);
  CHECK(r == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
  CHECK_THROWS_AS(bisect([](double x) { return x * x + 1.0; }, -1.0, 1.0, 1e-10), BracketError);
  CHECK_THROWS_AS(bisect([](double x) { return x; }, -1.0, 1.0, 0.0), UsageError);
}

TEST_CASE("hermite cubic is exact for cubics") {
  const auto p = [](double x) { return cplx(x * x * x - x, 2.0 * x * x); };
  const auto dp = [](double x) { return cplx(3.0 * x * x - 1.0, 4.0 * x); };
  for (double x : {0.1, 0.5, 0.9}) {
    const cplx v = hermite_cubic(0.0, 1.0, p(0.0), p(1.0), dp(0.0), dp(1.0), x);
    CHECK(std::abs(v - p(x)) < 1e-14);
  }
}
