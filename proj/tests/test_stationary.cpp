#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>

#include "ptdelta/stationary.hpp"
#include "reference.hpp"

using namespace ptdelta;

namespace {

TrapParams trap(double g, double gamma) {
  TrapParams p;
  p.g = g;
  p.gamma = gamma;
  return p;
}

std::optional<StationaryState> find(const std::vector<StationaryState>& states, Branch b) {
  for (const auto& s : states)
    if (s.branch == b) return s;
  return std::nullopt;
}

}  // namespace

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(trap(0.0, -0.1).validate(), UsageError);
  TrapParams p = trap(0.0, 0.0);
  p.b = 0.0;
  CHECK_THROWS_AS(p.validate(), UsageError);
  p = trap(0.0, 0.0);
  p.x_max = p.b + 1.0;
  CHECK_THROWS_AS(p.validate(), UsageError);
  p = trap(std::nan(""), 0.0);
  CHECK_THROWS_AS(p.validate(), UsageError);
}

TEST_CASE("delta coefficients") {
  CHECK(delta_coefficient(Side::Left, 0.3) == cplx(-1.0, -0.3));
  CHECK(delta_coefficient(Side::Right, 0.3) == cplx(-1.0, 0.3));
}

TEST_CASE("hermitian linear states match the fixed-point roots") {
  const auto states = solve_all_states(trap(0.0, 0.0));
  const auto ground = find(states, Branch::Ground);
  const auto excited = find(states, Branch::Excited);
  REQUIRE(ground);
  REQUIRE(excited);
  CHECK(std::abs(ground->kappa - reference::hermitian_kappa(1.1, +1.0)) < 1e-10);
  CHECK(std::abs(excited->kappa - reference::hermitian_kappa(1.1, -1.0)) < 1e-10);
  CHECK(std::abs(ground->mu + ground->kappa * ground->kappa) < 1e-14);
}

TEST_CASE("linear PT states match the transfer-matrix roots") {
  for (double gamma : {0.1, 0.25, 0.38}) {
    const auto states = solve_all_states(trap(0.0, gamma));
    REQUIRE(states.size() == 2);
    for (const auto& s : states) {
      const cplx root = reference::linear_root(s.kappa, gamma, 1.1);
      CHECK(std::abs(reference::growing_coefficient(root, gamma, 1.1)) < 1e-12);
      CHECK(std::abs(s.kappa - root) < 1e-8);
    }
  }
}

TEST_CASE("nonlinear states above the pitchfork") {
  const TrapParams p = trap(-1.0, 0.32);
  const auto states = solve_all_states(p);
  REQUIRE(states.size() == 4);
  for (const auto& s : states) {
    CHECK(std::abs(s.norm - 1.0) < 1e-9);
    CHECK(s.residual_norm < 1e-9);
    if (s.branch == Branch::Ground || s.branch == Branch::Excited) {
      CHECK(s.pt_symmetric);
      CHECK(s.pt_deviation < 1e-7);
    } else {
      CHECK_FALSE(s.pt_symmetric);
    }
    TrapParams q = p;
    q.mode = NonlinearityMode::NormIndependent;
    const StationaryState t = solve_stationary(q, s.unknowns, s.branch);
    CHECK(std::abs(t.kappa - s.kappa) < 1e-9);
  }
  const auto plus = find(states, Branch::BrokenPlus);
  const auto minus = find(states, Branch::BrokenMinus);
  REQUIRE(plus);
  REQUIRE(minus);
  CHECK(plus->kappa.imag() > 0);
  CHECK(std::abs(plus->kappa - std::conj(minus->kappa)) < 1e-8);
}

TEST_CASE("no broken states below the pitchfork") {
  const auto states = solve_all_states(trap(-1.0, 0.2));
  CHECK(states.size() == 2);
  for (const auto& s : states) CHECK(s.pt_symmetric);
}

TEST_CASE("matching point does not change kappa") {
  TrapParams a = trap(-1.0, 0.2), b = a;
  a.x_max = a.b + 10.0;
  b.x_max = b.b + 20.0;
  const auto sa = find(solve_all_states(a), Branch::Ground);
  REQUIRE(sa);
  const StationaryState sb = solve_stationary(b, sa->unknowns, Branch::Ground);
  CHECK(std::abs(sa->kappa - sb.kappa) < 1e-8);
}

TEST_CASE("mirror is an involution") {
  const auto s = find(solve_all_states(trap(-0.5, 0.1)), Branch::Ground);
  REQUIRE(s);
  const StationaryState m = mirror(*s);
  CHECK(m.params.gamma == doctest::Approx(-0.1));
  const StationaryState back = mirror(m);
  CHECK(back.psi.psi == s->psi.psi);
  CHECK(back.unknowns.dpsi0 == s->unknowns.dpsi0);
}

TEST_CASE("repulsive nonlinearity runs") {
  const auto states = solve_all_states(trap(0.5, 0.2));
  CHECK_FALSE(states.empty());
  for (const auto& s : states) CHECK(std::abs(s.norm - 1.0) < 1e-9);
}

TEST_CASE("no PT-symmetric states above the linear exceptional point") {
  const auto states = solve_all_states(trap(0.0, 0.45));
  for (const auto& s : states) CHECK_FALSE(s.pt_symmetric);
}

TEST_CASE("pitchfork lies below the tangent bifurcation") {
  const TrapParams p = trap(-1.0, 0.0);
  const PitchforkResult r = locate_pitchfork_detailed(p);
  CHECK(r.gamma_kappa > 0.3);
  CHECK(r.gamma_kappa < 0.32);
  CHECK(std::abs(r.gamma_kappa - r.gamma_bisection) < 1e-3);
  CHECK(r.fit_points.size() >= 3);
  CHECK(locate_tangent(p) > r.gamma_kappa);
  CHECK_THROWS_AS(locate_pitchfork(trap(0.0, 0.0)), NotFound);
}

TEST_CASE("continuation along gamma terminates at the branch end") {
  const auto h = find(solve_all_states(trap(0.0, 0.0)), Branch::Ground);
  REQUIRE(h);
  const BranchCurve c = continue_branch(h->params, *h, Parameter::Gamma, 1.0, 0.02);
  CHECK(c.terminated);
  CHECK(c.termination_value > 0.39);
  CHECK(c.termination_value < 0.401);
  CHECK_THROWS_AS(continue_branch(h->params, *h, Parameter::Gamma, 1.0, 0.0), UsageError);
}
