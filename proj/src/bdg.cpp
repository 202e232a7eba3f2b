#include "ptdelta/bdg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace ptdelta {

using namespace std::complex_literals;

std::string to_string(BdgVariant v) { return v == BdgVariant::Standard ? "standard" : "modified"; }

std::string to_string(Stability s) { return s == Stability::Oscillatory ? "oscillatory" : "unstable"; }

// ---------------------------------------------------------------------------
// Unknowns
// ---------------------------------------------------------------------------

namespace {

const cplx& anchor_value(const BdgUnknowns& x, GaugeAnchor a) {
  switch (a) {
    case GaugeAnchor::V0: return x.v0;
    case GaugeAnchor::DV0: return x.dv0;
    case GaugeAnchor::U0: return x.u0;
    case GaugeAnchor::DU0: return x.du0;
  }
  return x.v0;
}

}  // namespace

RealVector BdgUnknowns::to_vector(BdgVariant variant) const {
  const cplx* parts[] = {&u0, &v0, &du0, &dv0, &omega, &s};
  const cplx* fixed = &anchor_value(*this, gauge);
  const int count = variant == BdgVariant::Standard ? 5 : 6;
  RealVector x(2 * count - 1);
  int k = 0;
  for (int i = 0; i < count; ++i) {
    x[k++] = parts[i]->real();
    if (parts[i] != fixed) x[k++] = parts[i]->imag();
  }
  return x;
}

BdgUnknowns BdgUnknowns::from_vector(const RealVector& x, BdgVariant variant, GaugeAnchor gauge) {
  const int count = variant == BdgVariant::Standard ? 5 : 6;
  if (x.size() != 2 * count - 1) throw UsageError("BdG unknown vector has the wrong length");
  BdgUnknowns out;
  out.gauge = gauge;
  cplx* parts[] = {&out.u0, &out.v0, &out.du0, &out.dv0, &out.omega, &out.s};
  const cplx* fixed = &anchor_value(out, gauge);
  int k = 0;
  for (int i = 0; i < count; ++i) {
    const double re = x[k++];
    const double im = parts[i] != fixed ? x[k++] : 0.0;
    *parts[i] = {re, im};
  }
  return out;
}

BdgUnknowns BdgUnknowns::gauged(GaugeAnchor anchor) const {
  BdgUnknowns out = *this;
  out.gauge = anchor;
  const cplx a = anchor_value(*this, anchor);
  if (std::abs(a) == 0.0) return out;
  const cplx phase = std::conj(a) / std::abs(a);
  out.u0 *= phase;
  out.du0 *= phase;
  out.v0 *= phase;
  out.dv0 *= phase;
  out.s *= phase;
  return out;
}

GaugeAnchor BdgUnknowns::best_anchor() const {
  const double mags[] = {std::abs(v0), std::abs(dv0), std::abs(u0), std::abs(du0)};
  const double largest = *std::max_element(std::begin(mags), std::end(mags));
  if (mags[0] >= 0.1 * largest) return GaugeAnchor::V0;
  const auto i = std::max_element(std::begin(mags), std::end(mags)) - std::begin(mags);
  return static_cast<GaugeAnchor>(i);
}

BdgUnknowns BdgUnknowns::conjugate_partner() const {
  BdgUnknowns out = *this;
  out.u0 = std::conj(v0);
  out.du0 = std::conj(dv0);
  out.v0 = std::conj(u0);
  out.dv0 = std::conj(du0);
  out.omega = -std::conj(omega);
  out.s = std::conj(s);
  return out;
}

BdgUnknowns BdgUnknowns::pt_partner() const {
  BdgUnknowns out = *this;
  out.u0 = std::conj(u0);
  out.du0 = -std::conj(du0);
  out.v0 = std::conj(v0);
  out.dv0 = -std::conj(dv0);
  out.omega = std::conj(omega);
  out.s = std::conj(s);
  return out;
}

std::array<cplx, 4> BdgSolution::quadruplet() const {
  return {omega, -std::conj(omega), std::conj(omega), -omega};
}

// ---------------------------------------------------------------------------
// Equations
// ---------------------------------------------------------------------------

std::pair<cplx, cplx> bdg_rhs(cplx psi0, cplx u, cplx v, cplx kappa, double g, cplx omega,
                              cplx s_source) {
  const double rho = std::norm(psi0);
  const cplx k2 = kappa * kappa;
  cplx upp = (k2 - omega + 2.0 * g * rho) * u + g * psi0 * psi0 * v;
  cplx vpp = (std::conj(k2) + omega + 2.0 * g * rho) * v + g * std::conj(psi0 * psi0) * u;
  if (s_source != 0.0) {
    upp -= g * rho * psi0 * s_source;
    vpp -= g * rho * std::conj(psi0) * s_source;
  }
  return {upp, vpp};
}

std::pair<cplx, cplx> bdg_rhs(double x, cplx u, cplx v, const StationaryState& state, cplx omega) {
  return bdg_rhs(state.psi.eval(x), u, v, state.kappa, state.params.g, omega);
}

JumpCondition bdg_jump(Side side, double gamma, double b, Component which) {
  JumpCondition j = delta_jump(side, gamma, b);
  if (which == Component::V) j.transform(1, 0) = std::conj(j.transform(1, 0));
  return j;
}

std::pair<cplx, cplx> bdg_decay_rates(cplx kappa, cplx omega) {
  const auto positive = [](cplx q) { return q.real() < 0 ? -q : q; };
  const cplx k2 = kappa * kappa;
  return {positive(std::sqrt(k2 - omega)), positive(std::sqrt(std::conj(k2) + omega))};
}

namespace {

JumpCondition combined_jump(Side side, double gamma, double b) {
  JumpCondition j;
  j.position = side == Side::Left ? -b : b;
  j.transform = Eigen::MatrixXcd::Identity(6, 6);
  const cplx c = delta_coefficient(side, gamma);
  j.transform(1, 0) = c;
  j.transform(3, 2) = c;
  j.transform(5, 4) = std::conj(c);
  return j;
}

// Integrals of |u + v*|^2 and of v psi0 + u psi0* beyond a matching point,
// from the exponential tails.
struct TailIntegrals {
  double normalization;
  double mass;
  cplx s;
};

TailIntegrals tail_integrals(const StateVector& y, cplx kappa, cplx qu, cplx qv) {
  const cplx psi = y[0], u = y[2], v = y[4];
  TailIntegrals t;
  t.mass = std::norm(u) / (2.0 * qu.real()) + std::norm(v) / (2.0 * qv.real());
  t.normalization = t.mass + 2.0 * (u * v / (qu + qv)).real();
  t.s = v * psi / (qv + kappa) + u * std::conj(psi) / (qu + std::conj(kappa));
  return t;
}

}  // namespace

BdgRun integrate_bdg(const BdgUnknowns& x, const StationaryState& state, BdgVariant variant,
                     double max_step_override) {
  const TrapParams& params = state.params;
  IntegratorConfig cfg = params.integrator;
  if (max_step_override > 0) cfg.max_step = std::min(cfg.max_step, max_step_override);
  const cplx kappa = state.kappa;
  const double g = params.g;
  const cplx omega = x.omega;
  const cplx source = variant == BdgVariant::Modified ? x.s : 0.0;
  OdeRhs rhs = [&](double, const StateVector& y, StateVector& dy) {
    dy[0] = y[1];
    dy[1] = (kappa * kappa + g * std::norm(y[0])) * y[0];
    const auto [upp, vpp] = bdg_rhs(y[0], y[2], y[4], kappa, g, omega, source);
    dy[2] = y[3];
    dy[3] = upp;
    dy[4] = y[5];
    dy[5] = vpp;
  };
  StateVector y0(6);
  y0 << state.unknowns.psi0, state.unknowns.dpsi0, x.u0, x.du0, x.v0, x.dv0;
  const double X = state.x_match;
  BdgRun run;
  run.right = integrate_piecewise(rhs, {combined_jump(Side::Right, params.gamma, params.b)}, 0.0,
                                  X, y0, cfg);
  run.left = integrate_piecewise(rhs, {combined_jump(Side::Left, params.gamma, params.b)}, 0.0,
                                 -X, y0, cfg);
  const auto density = [](double, const StateVector& y) -> cplx {
    return std::norm(y[2] + std::conj(y[4]));
  };
  const auto mass = [](double, const StateVector& y) -> cplx {
    return std::norm(y[2]) + std::norm(y[4]);
  };
  const auto overlap = [](double, const StateVector& y) -> cplx {
    return y[4] * y[0] + y[2] * std::conj(y[0]);
  };
  const auto [qu, qv] = bdg_decay_rates(kappa, omega);
  const TailIntegrals tr = tail_integrals(run.right.final_state(), kappa, qu, qv);
  const TailIntegrals tl = tail_integrals(run.left.final_state(), kappa, qu, qv);
  run.normalization = (quadrature(run.right, density) - quadrature(run.left, density)).real() +
                      tr.normalization + tl.normalization;
  run.mass = (quadrature(run.right, mass) - quadrature(run.left, mass)).real() + tr.mass + tl.mass;
  run.s_integral = quadrature(run.right, overlap) - quadrature(run.left, overlap) + tr.s + tl.s;
  return run;
}

namespace {

enum class Normalization { UPlusVStar, Mass };

RealVector residual(const BdgUnknowns& x, const StationaryState& state, BdgVariant variant,
                    Normalization normalization) {
  const BdgRun run = integrate_bdg(x, state, variant);
  const auto [qu, qv] = bdg_decay_rates(state.kappa, x.omega);
  const StateVector& r = run.right.final_state();
  const StateVector& l = run.left.final_state();
  const cplx res[] = {r[3] + qu * r[2], r[5] + qv * r[4], l[3] - qu * l[2], l[5] - qv * l[4]};
  RealVector out(variant == BdgVariant::Standard ? 9 : 11);
  for (int i = 0; i < 4; ++i) {
    out[2 * i] = res[i].real();
    out[2 * i + 1] = res[i].imag();
  }
  out[8] = (normalization == Normalization::Mass ? run.mass : run.normalization) - 1.0;
  if (variant == BdgVariant::Modified) {
    const cplx ds = x.s - run.s_integral;
    out[9] = ds.real();
    out[10] = ds.imag();
  }
  return out;
}

}  // namespace

RealVector bdg_residual(const BdgUnknowns& x, const StationaryState& state, BdgVariant variant) {
  return residual(x, state, variant, Normalization::UPlusVStar);
}

RealVector bdg_residual(const BdgUnknowns& x, const StationaryState& state) {
  return bdg_residual(x, state, BdgVariant::Standard);
}

RealVector modified_bdg_residual(const BdgUnknowns& x, const StationaryState& state) {
  return bdg_residual(x, state, BdgVariant::Modified);
}

// ---------------------------------------------------------------------------
// Solving
// ---------------------------------------------------------------------------

namespace {

constexpr double kSampleStep = 0.01;
// Near the zero modes (Goldstone (psi0, -psi0*), and (psi0, psi0*) in the
// Modified variant) the residual vanishes like |omega|^2 along a whole family
// of vectors, which Newton mistakes for roots. Multiplying the residual by
// 1 + eps^2 / |omega|^2 removes those spurious roots and keeps the others.
constexpr double kZeroModeDeflation = 1e-3;

BdgUnknowns newton_bdg(const StationaryState& state, const BdgUnknowns& guess, BdgVariant variant,
                       NewtonResult& nr) {
  const GaugeAnchor anchor = guess.best_anchor();
  const BdgUnknowns start = guess.gauged(anchor);
  const RealResidual f = [&](const RealVector& v) {
    const BdgUnknowns x = BdgUnknowns::from_vector(v, variant, anchor);
    const double w2 = std::max(std::norm(x.omega), 1e-300);
    return RealVector(residual(x, state, variant, Normalization::Mass) *
                      (1.0 + kZeroModeDeflation * kZeroModeDeflation / w2));
  };
  nr = newton_solve(f, start.to_vector(variant), state.params.newton);
  return BdgUnknowns::from_vector(nr.root, variant, anchor);
}

void sample(const Trajectory& right, const Trajectory& left, int index, WaveSamples& out) {
  std::vector<double> xr, xl;
  std::vector<StateVector> yr, yl;
  right.endpoints(xr, yr);
  left.endpoints(xl, yl);
  out = {};
  for (std::size_t i = xl.size(); i-- > 1;) {
    out.x.push_back(xl[i]);
    out.psi.push_back(yl[i][index]);
    out.dpsi.push_back(yl[i][index + 1]);
  }
  for (std::size_t i = 0; i < xr.size(); ++i) {
    out.x.push_back(xr[i]);
    out.psi.push_back(yr[i][index]);
    out.dpsi.push_back(yr[i][index + 1]);
  }
}

}  // namespace

BdgSolution solve_bdg(const StationaryState& state, const BdgUnknowns& guess,
                      BdgVariant variant) {
  state.params.validate();
  NewtonResult nr;
  BdgUnknowns x = newton_bdg(state, guess, variant, nr);
  int iterations = nr.iterations;
  // Back into the closed first quadrant.
  bool mapped = false;
  if (x.omega.real() < 0) {
    x = x.conjugate_partner();
    mapped = true;
  }
  if (x.omega.imag() < 0 && state.pt_symmetric) {
    x = x.pt_partner();
    mapped = true;
  }
  if (mapped) {
    x = newton_bdg(state, x, variant, nr);
    iterations += nr.iterations;
  }

  const double scale = 1.0 / std::sqrt(integrate_bdg(x, state, variant).normalization);
  if (!std::isfinite(scale)) throw NonConvergence("mode has no |u + v*| weight", {}, 0.0);
  x.u0 *= scale;
  x.du0 *= scale;
  x.v0 *= scale;
  x.dv0 *= scale;
  x.s *= scale;

  BdgSolution s;
  s.base = state;
  s.variant = variant;
  s.unknowns = x;
  s.omega = x.omega;
  s.residual_norm = bdg_residual(x, state, variant).lpNorm<Eigen::Infinity>();
  s.iterations = iterations;
  const BdgRun run = integrate_bdg(x, state, variant, kSampleStep);
  s.normalization = run.normalization;
  if (variant == BdgVariant::Modified) s.s_integral = run.s_integral;
  sample(run.right, run.left, 2, s.u);
  sample(run.right, run.left, 4, s.v);
  return s;
}

std::optional<BdgSolution> try_solve_bdg(const StationaryState& state, const BdgUnknowns& guess,
                                         BdgVariant variant) {
  try {
    return solve_bdg(state, guess, variant);
  } catch (const NonConvergence&) {
  } catch (const SingularSystem&) {
  } catch (const IntegrationFailure&) {
  } catch (const InvalidState&) {
  }
  return std::nullopt;
}

Stability classify(cplx omega) {
  return std::abs(omega.imag()) > kStabilityThreshold ? Stability::Unstable
                                                      : Stability::Oscillatory;
}

// ---------------------------------------------------------------------------
// Mode tracking
// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxRefinement = 8;
constexpr double kOmegaFloor = 0.01;
constexpr double kMinSpacing = 2.5e-4;
constexpr int kFitHalfWidth = 3;

double parameter_of(const StationaryState& s, Parameter p) { return s.params.get(p); }

// Candidate omegas at parameter `at` from omega^2 extrapolated through the
// last two solutions: real and imaginary seeds, the likelier one first.
std::vector<cplx> omega_candidates(const BdgSolution& last, const BdgSolution* before,
                                   Parameter p, double at) {
  cplx w = last.omega * last.omega;
  if (before) {
    const double p1 = parameter_of(last.base, p), p0 = parameter_of(before->base, p);
    const cplx w0 = before->omega * before->omega;
    if (p1 != p0) w += (w - w0) * ((at - p1) / (p1 - p0));
  }
  const cplx root = std::sqrt(w);
  const cplx first{std::abs(root.real()), std::abs(root.imag())};
  const double mag = std::sqrt(std::abs(w));
  std::vector<cplx> out{first};
  // Near omega = 0 the eigenvalue turns a corner: try both axes.
  if (std::abs(w) < 0.25 * std::norm(last.omega) + 1e-6 || std::abs(w.imag()) < 1e-6) {
    const cplx real_seed{mag, 0.0}, imag_seed{0.0, mag};
    if (w.real() >= 0) {
      out = {real_seed, imag_seed};
    } else {
      out = {imag_seed, real_seed};
    }
  }
  return out;
}

bool continuous(const BdgSolution& next, const BdgSolution& last, const cplx predicted) {
  const double scale = std::max(0.05, 0.5 * std::abs(last.omega));
  if (std::abs(next.omega * next.omega - predicted * predicted) > scale * scale) return false;
  if (next.s_integral && last.s_integral &&
      std::abs(std::abs(*next.s_integral) - std::abs(*last.s_integral)) > 0.25)
    return false;
  return true;
}

std::optional<BdgSolution> direct_step(const BdgSolution& last, const BdgSolution* before,
                                       const StationaryState& to, Parameter p) {
  std::optional<BdgSolution> best;
  double best_dist = 0.0;
  for (const cplx omega : omega_candidates(last, before, p, parameter_of(to, p))) {
    BdgUnknowns guess = last.unknowns;
    guess.omega = omega;
    auto s = try_solve_bdg(to, guess, last.variant);
    if (!s || !continuous(*s, last, omega)) continue;
    const double dist = std::abs(s->omega - omega);
    if (!best || dist < best_dist) {
      best = std::move(s);
      best_dist = dist;
    }
  }
  return best;
}

std::optional<StationaryState> stationary_between(const StationaryState& a,
                                                  const StationaryState& b, Parameter p) {
  const double mid = 0.5 * (parameter_of(a, p) + parameter_of(b, p));
  const ShootingUnknowns ua = a.unknowns;
  const ShootingUnknowns ub = b.unknowns.gauged(ua.anchor);
  const RealVector guess = 0.5 * (ua.to_vector() + ub.to_vector());
  return try_solve_stationary(a.params.with(p, mid),
                              ShootingUnknowns::from_vector(guess, ua.anchor), a.branch);
}

// Mode on `to`, continued from `last`; halves the parameter step when the
// direct step fails.
std::optional<BdgSolution> step_mode(const BdgSolution& last, const BdgSolution* before,
                                     const StationaryState& to, Parameter p, int depth = 0) {
  if (auto s = direct_step(last, before, to, p)) return s;
  if (depth >= kMaxRefinement) return std::nullopt;
  const auto mid = stationary_between(last.base, to, p);
  if (!mid) return std::nullopt;
  auto half = step_mode(last, before, *mid, p, depth + 1);
  if (!half) return std::nullopt;
  return step_mode(*half, &last, to, p, depth + 1);
}

struct Tracked {
  std::vector<std::optional<BdgSolution>> modes;
};

// Follows the mode across consecutive states; failed states are left empty
// and the next one is tried from the last success.
Tracked follow(const BdgSolution& start, const std::vector<StationaryState>& path, Parameter p,
               const std::function<bool(const BdgSolution&)>& stop = {}) {
  Tracked t;
  std::optional<BdgSolution> last = start, before;
  for (const StationaryState& state : path) {
    auto s = step_mode(*last, before ? &*before : nullptr, state, p);
    t.modes.push_back(s);
    if (s) {
      before = std::move(last);
      last = std::move(s);
      if (stop && stop(*last)) break;
    }
  }
  return t;
}

StationaryState hermitian_state(const TrapParams& params, Branch branch) {
  const TrapParams at0 = params.with(Parameter::Gamma, 0.0);
  for (const Seed& seed : seed_states(at0)) {
    if (seed.branch != branch) continue;
    return solve_stationary(at0, seed.unknowns, branch);
  }
  throw NotFound("no Hermitian " + to_string(branch) + " state at this g");
}

}  // namespace

BdgSolution hermitian_mode(const StationaryState& state, BdgVariant variant) {
  if (state.params.gamma != 0.0) throw UsageError("hermitian_mode needs a gamma = 0 state");
  if (state.branch != Branch::Ground && state.branch != Branch::Excited)
    throw UsageError("hermitian_mode needs a Ground or Excited state");
  TrapParams linear = state.params;
  linear.g = 0.0;
  std::optional<StationaryState> ground, excited;
  for (const Seed& seed : linear_hermitian_seeds(linear.b)) {
    auto s = solve_stationary(linear, seed.unknowns, seed.branch);
    (seed.branch == Branch::Ground ? ground : excited) = std::move(s);
  }
  if (!ground || !excited) throw NotFound("the linear trap has no excited state for this b");

  const bool on_ground = state.branch == Branch::Ground;
  const StationaryState& base = on_ground ? *ground : *excited;
  const StationaryState& partner = on_ground ? *excited : *ground;
  BdgUnknowns guess;
  guess.omega = ground->kappa * ground->kappa - excited->kappa * excited->kappa;
  if (on_ground) {
    guess.u0 = partner.unknowns.psi0;
    guess.du0 = partner.unknowns.dpsi0;
  } else {
    guess.v0 = std::conj(partner.unknowns.psi0);
    guess.dv0 = std::conj(partner.unknowns.dpsi0);
  }
  BdgSolution mode = solve_bdg(base, guess, variant);
  if (state.params.g == 0.0) return solve_bdg(state, mode.unknowns, variant);

  const BranchCurve curve = continue_branch(linear, base, Parameter::G, state.params.g, 0.1);
  if (curve.terminated) throw NotFound("stationary state lost while continuing in g");
  std::vector<StationaryState> path(curve.states.begin() + 1, curve.states.end());
  path.push_back(state);
  const Tracked t = follow(mode, path, Parameter::G);
  if (!t.modes.back()) throw NotFound("BdG mode lost while continuing in g");
  return *t.modes.back();
}

namespace {

StabilityCurve track(const BranchCurve& branch, BdgVariant variant,
                     const std::function<bool(const BdgSolution&)>& stop) {
  if (branch.parameter != Parameter::Gamma) throw UsageError("stability tracking runs along gamma");
  if (branch.states.empty()) throw UsageError("empty branch");
  const StationaryState& first = branch.states.front();
  StabilityCurve curve;
  curve.variant = variant;
  curve.branch = first.branch;

  const StationaryState h = first.params.gamma == 0.0 ? first
                                                      : hermitian_state(first.params, first.branch);
  BdgSolution start = hermitian_mode(h, variant);
  std::vector<StationaryState> path;
  if (first.params.gamma != 0.0) {
    const BranchCurve prefix =
        continue_branch(h.params, h, Parameter::Gamma, first.params.gamma, 0.01);
    path.assign(prefix.states.begin() + 1, prefix.states.end() - 1);
  }
  const std::size_t skip = path.size();
  path.insert(path.end(), branch.states.begin(), branch.states.end());
  const Tracked t = follow(start, path, Parameter::Gamma, stop);
  for (std::size_t i = skip; i < path.size(); ++i) {
    if (i >= t.modes.size()) break;
    StabilityPoint pt;
    pt.gamma = path[i].params.gamma;
    if (t.modes[i]) {
      pt.converged = true;
      pt.omega = t.modes[i]->omega;
      pt.stability = classify(pt.omega);
      curve.solutions.push_back(*t.modes[i]);
    }
    curve.points.push_back(pt);
  }
  return curve;
}

}  // namespace

StabilityCurve track_stability(const BranchCurve& branch, BdgVariant variant) {
  return track(branch, variant, {});
}

BdgSolution tracked_mode(const TrapParams& params, Branch branch, BdgVariant variant) {
  params.validate();
  const StationaryState h = hermitian_state(params, branch);
  if (params.gamma == 0.0) return hermitian_mode(h, variant);
  const BranchCurve curve = continue_branch(h.params, h, Parameter::Gamma, params.gamma, 0.01);
  if (curve.terminated) throw NotFound(to_string(branch) + " branch ends before this gamma");
  const StabilityCurve st = track(curve, variant, {});
  if (st.points.size() != curve.states.size() || !st.points.back().converged)
    throw NotFound("BdG mode lost along the " + to_string(branch) + " branch");
  return st.solutions.back();
}

double locate_stability_change(const TrapParams& params, BdgVariant variant) {
  params.validate();
  const StationaryState h = hermitian_state(params, Branch::Ground);
  const BranchCurve ground = continue_branch(h.params, h, Parameter::Gamma, 2.0, 0.01);
  const auto unstable = [](const BdgSolution& s) {
    return classify(s.omega) == Stability::Unstable;
  };
  const StabilityCurve curve = track(ground, variant, unstable);

  const BdgSolution* below = nullptr;
  const BdgSolution* above = nullptr;
  for (std::size_t i = 0; i + 1 < curve.solutions.size(); ++i) {
    if (classify(curve.solutions[i].omega) == Stability::Oscillatory &&
        classify(curve.solutions[i + 1].omega) == Stability::Unstable) {
      below = &curve.solutions[i];
      above = &curve.solutions[i + 1];
      break;
    }
  }
  if (!below) throw NotFound("no stability change on the ground branch");

  // omega^2 is real and smooth through the change while the four eigenvalues
  // near zero make direct solves there ill-posed, so the root of omega^2 is
  // interpolated from modes with |omega| >= kOmegaFloor on both sides.
  std::vector<BdgSolution> known = curve.solutions;
  const auto w2 = [](const BdgSolution& s) { return (s.omega * s.omega).real(); };

  const auto step_to = [&](double gamma, const BdgSolution& last,
                           const BdgSolution* before) -> std::optional<BdgSolution> {
    auto state = try_solve_stationary(last.base.params.with(Parameter::Gamma, gamma),
                                      last.base.unknowns, Branch::Ground);
    if (!state) return std::nullopt;
    auto s = step_mode(last, before, *state, Parameter::Gamma);
    if (!s || std::abs(s->omega) < 0.5 * kOmegaFloor) return std::nullopt;
    known.push_back(*s);
    return s;
  };
  const auto mode_at = [&](double gamma) {
    std::vector<const BdgSolution*> order;
    for (const auto& k : known) order.push_back(&k);
    std::sort(order.begin(), order.end(), [&](const BdgSolution* a, const BdgSolution* b) {
      return std::abs(a->base.params.gamma - gamma) < std::abs(b->base.params.gamma - gamma);
    });
    const BdgSolution last = *order[0];
    const std::optional<BdgSolution> before =
        order.size() > 1 ? std::optional<BdgSolution>(*order[1]) : std::nullopt;
    return step_to(gamma, last, before ? &*before : nullptr);
  };

  // Shrink the bracket while the mode stays clear of zero; omega^2 bends
  // sharply when the change lies close to the end of the branch.
  double ga = below->base.params.gamma, gb = above->base.params.gamma;
  double wa = w2(*below), wb = w2(*above);
  BdgSolution from = *below;
  std::optional<BdgSolution> prior;
  while (gb - ga > 4.0 * kMinSpacing) {
    const double mid = 0.5 * (ga + gb);
    const auto s = step_to(mid, from, prior ? &*prior : nullptr);
    if (!s) break;
    if (w2(*s) > 0) {
      ga = mid;
      wa = w2(*s);
      prior = from;
      from = *s;
    } else {
      gb = mid;
      wb = w2(*s);
    }
  }
  const double slope = (wa - wb) / (gb - ga);
  double root = ga + wa / slope;
  double spacing = std::clamp(kOmegaFloor * kOmegaFloor / slope, kMinSpacing, (gb - ga) / 4.0);
  const double room = ground.states.back().params.gamma - root;
  if (room > 0) spacing = std::min(spacing, room / (kFitHalfWidth + 0.5));

  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> xs, ys;
    for (int k = -kFitHalfWidth; k <= kFitHalfWidth; ++k) {
      if (k == 0) continue;
      const double gamma = root + k * spacing;
      if (auto s = mode_at(gamma)) {
        xs.push_back(gamma - root);
        ys.push_back(w2(*s));
      }
    }
    if (xs.size() < 4) throw NotFound("BdG mode lost near the stability change");
    Eigen::MatrixXd A(xs.size(), 4);
    Eigen::VectorXd y(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (int j = 0; j < 4; ++j) A(i, j) = std::pow(xs[i], j);
      y[i] = ys[i];
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    const auto poly = [&](double t) { return c[0] + t * (c[1] + t * (c[2] + t * c[3])); };
    const double lo = -kFitHalfWidth * spacing, hi = kFitHalfWidth * spacing;
    root += bisect(poly, lo, hi, 1e-12);
  }
  return root;
}

DeltaGamma delta_gamma(const TrapParams& params, BdgVariant variant) {
  DeltaGamma d;
  d.gamma_kappa = locate_pitchfork(params);
  d.gamma_omega = locate_stability_change(params, variant);
  d.delta = d.gamma_kappa - d.gamma_omega;
  return d;
}

double effective_nonlinearity(double norm, double g) {
  if (!(norm > 0)) throw UsageError("norm must be positive");
  return norm * g;
}

}  // namespace ptdelta
