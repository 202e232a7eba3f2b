#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ptdelta/oracle.hpp"
#include "reference.hpp"

using namespace ptdelta;

namespace {

StationaryState ground_state(double g, double gamma) {
  TrapParams p;
  p.g = g;
  p.gamma = gamma;
  for (const auto& s : solve_all_states(p))
    if (s.branch == Branch::Ground) return s;
  throw NotFound("ground state");
}

}  // namespace

TEST_CASE("linear determinant vanishes on the transfer-matrix roots") {
  for (double gamma : {0.0, 0.2, 0.39}) {
    const auto roots = linear_spectrum(gamma, 1.1);
    REQUIRE(roots.size() == 2);
    CHECK(roots[0].real() >= roots[1].real());
    for (const cplx k : roots) {
      CHECK(std::abs(linear_determinant(k, gamma, 1.1)) < 1e-12);
      CHECK(std::abs(reference::growing_coefficient(k, gamma, 1.1)) < 1e-10);
    }
  }
}

TEST_CASE("linear spectrum turns complex above the exceptional point") {
  const auto roots = linear_spectrum(0.45, 1.1);
  REQUIRE(roots.size() == 2);
  CHECK(std::abs(roots[0] - std::conj(roots[1])) < 1e-12);
  CHECK(std::abs(roots[0].imag()) > 1e-3);
}

TEST_CASE("hermitian roots") {
  const double even = reference::hermitian_kappa(1.1, 1.0);
  const double odd = reference::hermitian_kappa(1.1, -1.0);
  CHECK(*hermitian_linear_kappa(1.1, 1.0) == doctest::Approx(even).epsilon(1e-13));
  CHECK(*hermitian_linear_kappa(1.1, -1.0) == doctest::Approx(odd).epsilon(1e-12));
  CHECK_FALSE(hermitian_linear_kappa(0.8, -1.0).has_value());
}

TEST_CASE("linear exceptional point is a double root") {
  const LinearExceptionalPoint ep = linear_exceptional_point(1.1);
  const double h = 1e-5;
  const auto f = [&](double k) { return reference::growing_coefficient(k, ep.gamma, 1.1); };
  CHECK(std::abs(f(ep.kappa)) < 1e-10);
  CHECK(std::abs((f(ep.kappa + h) - f(ep.kappa - h)) / (2 * h)) < 1e-5);
  CHECK(ep.gamma > 0.39);
  CHECK(ep.gamma < 0.41);
}

TEST_CASE("grid problem validation") {
  GridProblem gp;
  gp.h = 0.0;
  CHECK_THROWS_AS(gp.validate(), UsageError);
  gp = {};
  gp.L = 0.02;
  CHECK_THROWS_AS(gp.validate(), UsageError);
  gp = {};
  gp.L = 1.0;
  CHECK_THROWS_AS(regularized_potential(gp, TrapParams{}), UsageError);
  gp = {};
  CHECK(gp.grid().size() == 2 * gp.half_points() + 1);
}

TEST_CASE("regularized wells carry the delta weights") {
  GridProblem gp;
  gp.h = 0.01;
  TrapParams p;
  p.gamma = 0.3;
  const StateVector v = regularized_potential(gp, p);
  const RealVector x = gp.grid();
  cplx left = 0, right = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) (x[i] < 0 ? left : right) += v[i] * gp.h;
  CHECK(std::abs(left - cplx(-1.0, -0.3)) < 1e-6);
  CHECK(std::abs(right - cplx(-1.0, 0.3)) < 1e-6);
}

TEST_CASE("point-well grid is second order") {
  const double exact = reference::hermitian_kappa(1.1, 1.0);
  const StationaryState s = ground_state(0.0, 0.0);
  double err[2];
  int i = 0;
  for (double h : {0.02, 0.01}) {
    GridProblem gp;
    gp.h = h;
    gp.point_wells = true;
    const GridSolution g = grid_solve_single(gp, s.params, grid_guess(s, gp), s.kappa);
    err[i++] = std::abs(g.kappa - exact);
  }
  CHECK(err[1] < 1e-5);
  CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("extrapolated grid solve matches the shooting state") {
  const StationaryState s = ground_state(-1.0, 0.2);
  GridProblem gp;
  const GridResult r = grid_solve(gp, s.params, grid_guess(s, gp), s.kappa);
  CHECK(std::abs(r.kappa - s.kappa) < 1e-4);
  CHECK(r.sigma[1] == doctest::Approx(2 * r.sigma[0]));
  CHECK(std::abs(r.fine.psi.squaredNorm() * gp.h - 1.0) < 1e-6);
}

TEST_CASE("stationary state stays stationary under propagation") {
  const StationaryState s = ground_state(-1.0, 0.2);
  PropagationRun run;
  run.T = 2.0;
  run.epsilon = 0.0;
  const PropagationSeries series = propagate(run, s.params, s, nullptr);
  REQUIRE(series.t.size() == 21);
  for (std::size_t i = 0; i < series.t.size(); ++i) {
    CHECK(series.amplitude[i] < 1e-8);
    CHECK(std::abs(series.norm[i] - 1.0) < 1e-8);
  }
  CHECK_FALSE(series.truncated);
}

TEST_CASE("propagation run validation") {
  PropagationRun run;
  run.epsilon = 1e-2;
  CHECK_THROWS_AS(run.validate(), UsageError);
  run = {};
  run.dt = -1.0;
  CHECK_THROWS_AS(run.validate(), UsageError);
}

TEST_CASE("growth fit on synthetic series") {
  const double eps = 1e-4;
  std::vector<double> t, grow, osc, decay;
  for (int i = 0; i <= 1500; ++i) {
    t.push_back(0.1 * i);
    grow.push_back(eps * std::exp(0.07 * t.back()));
    osc.push_back(eps * (3.0 + 2.0 * std::sin(t.back())));
    decay.push_back(0.05 * std::exp(-0.01 * t.back()));
  }
  const GrowthFit g = fit_growth_rate(t, grow, eps);
  CHECK_FALSE(g.stable);
  CHECK(g.rate == doctest::Approx(0.07).epsilon(1e-9));
  CHECK(grow[g.window_begin] > 10 * eps);
  CHECK(grow[g.window_end] >= 0.1);

  CHECK(fit_growth_rate(t, osc, eps).stable);
  CHECK(fit_growth_rate(t, osc, eps).rate == 0.0);
  CHECK(fit_growth_rate(t, decay, eps).stable);
  CHECK_THROWS_AS(fit_growth_rate(t, std::vector<double>(3, 0.0), eps), UsageError);
}
