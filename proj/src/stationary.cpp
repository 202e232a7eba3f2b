#include "ptdelta/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ptdelta {

using namespace std::complex_literals;

std::string to_string(Branch b) {
  switch (b) {
    case Branch::Ground: return "ground";
    case Branch::Excited: return "excited";
    case Branch::BrokenPlus: return "broken_plus";
    case Branch::BrokenMinus: return "broken_minus";
  }
  return "unknown";
}

std::string to_string(NonlinearityMode m) {
  return m == NonlinearityMode::NormDependent ? "norm_dependent" : "norm_independent";
}

void TrapParams::validate() const {
  if (!(b > 0)) throw UsageError("well position b must be positive");
  if (x_max > 0 && !(x_max > b + 5)) throw UsageError("x_max must exceed b + 5");
  if (!std::isfinite(gamma) || !std::isfinite(g)) throw UsageError("non-finite trap parameter");
  if (gamma < 0) throw UsageError("gamma must be >= 0; mirror the state for negative gamma");
  integrator.validate();
  newton.validate();
}

double matching_point(const TrapParams& params, cplx kappa) {
  if (params.x_max > 0) return params.x_max;
  const double re = std::max(kappa.real(), 1e-3);
  const double tail = std::clamp(std::ceil(2.0 * kDecayLengths / re) / 2.0, 5.5, 60.0);
  return params.b + tail;
}

cplx tail_decay_rate(cplx kappa, double g, double abs2) {
  if (g == 0.0 || abs2 == 0.0) return kappa;
  cplx q = std::sqrt(kappa * kappa + g * abs2 * kappa / (kappa + kappa.real()));
  if (q.real() < 0) q = -q;
  return q;
}

double tail_norm(cplx kappa, double g, double abs2) {
  const double denom = (tail_decay_rate(kappa, g, abs2) + kappa).real();
  return denom > 0 ? abs2 / denom : 0.0;
}

TrapParams TrapParams::with(Parameter p, double value) const {
  TrapParams out = *this;
  (p == Parameter::Gamma ? out.gamma : out.g) = value;
  return out;
}

// ---------------------------------------------------------------------------

RealVector ShootingUnknowns::to_vector() const {
  RealVector v(5);
  if (anchor == PhaseAnchor::Value) {
    v << psi0.real(), dpsi0.real(), dpsi0.imag(), kappa.real(), kappa.imag();
  } else {
    v << dpsi0.imag(), psi0.real(), psi0.imag(), kappa.real(), kappa.imag();
  }
  return v;
}

ShootingUnknowns ShootingUnknowns::from_vector(const RealVector& v, PhaseAnchor anchor) {
  if (v.size() != 5) throw UsageError("shooting vector must have five entries");
  ShootingUnknowns u;
  u.anchor = anchor;
  if (anchor == PhaseAnchor::Value) {
    u.psi0 = v[0];
    u.dpsi0 = {v[1], v[2]};
  } else {
    u.dpsi0 = {0.0, v[0]};
    u.psi0 = {v[1], v[2]};
  }
  u.kappa = {v[3], v[4]};
  return u;
}

ShootingUnknowns ShootingUnknowns::gauged(PhaseAnchor target) const {
  ShootingUnknowns u = *this;
  u.anchor = target;
  cplx phase = 1.0;
  if (target == PhaseAnchor::Value) {
    if (std::abs(psi0) > 0) phase = std::conj(psi0) / std::abs(psi0);
  } else {
    if (std::abs(dpsi0) > 0) phase = 1.0i * std::conj(dpsi0) / std::abs(dpsi0);
  }
  u.psi0 = phase * psi0;
  u.dpsi0 = phase * dpsi0;
  if (target == PhaseAnchor::Value) u.psi0 = u.psi0.real();
  else u.dpsi0 = {0.0, u.dpsi0.imag()};
  return u;
}

cplx WaveSamples::eval(double at) const {
  if (x.empty()) throw UsageError("empty wavefunction samples");
  if (at <= x.front()) return psi.front();
  if (at >= x.back()) return psi.back();
  auto it = std::upper_bound(x.begin(), x.end(), at);
  const auto i1 = static_cast<std::size_t>(it - x.begin());
  const auto i0 = i1 - 1;
  return hermite_cubic(x[i0], x[i1], psi[i0], psi[i1], dpsi[i0], dpsi[i1], at);
}

// ---------------------------------------------------------------------------

cplx gpe_rhs(double, cplx psi, cplx, cplx kappa, const TrapParams& params,
             double norm_estimate) {
  const double g_eff =
      params.mode == NonlinearityMode::NormIndependent ? params.g / norm_estimate : params.g;
  return (kappa * kappa + g_eff * std::norm(psi)) * psi;
}

cplx delta_coefficient(Side side, double gamma) {
  // V = -(1 + i gamma) delta(x + b) - (1 - i gamma) delta(x - b)
  return side == Side::Left ? cplx{-1.0, -gamma} : cplx{-1.0, gamma};
}

JumpCondition delta_jump(Side side, double gamma, double b) {
  JumpCondition j;
  j.position = side == Side::Left ? -b : b;
  j.transform = Eigen::MatrixXcd::Identity(2, 2);
  j.transform(1, 0) = delta_coefficient(side, gamma);
  return j;
}

namespace {
constexpr double kBlowUp = 1e4;
}  // namespace

ShootingRun integrate_stationary(const ShootingUnknowns& u, const TrapParams& params,
                                 double x_match, double max_step_override) {
  IntegratorConfig cfg = params.integrator;
  if (max_step_override > 0) cfg.max_step = std::min(cfg.max_step, max_step_override);
  const cplx kappa = u.kappa;
  const bool nonlinear = params.g != 0.0;
  OdeRhs rhs = [&](double x, const StateVector& y, StateVector& dy) {
    // Far from any normalised state; with g != 0 the step count would explode.
    if (nonlinear && std::norm(y[0]) > kBlowUp) throw IntegrationFailure("wavefunction blow-up", x);
    dy[0] = y[1];
    dy[1] = gpe_rhs(x, y[0], y[1], kappa, params);
  };
  StateVector y0(2);
  y0 << u.psi0, u.dpsi0;
  const double X = x_match;
  ShootingRun run;
  run.right = integrate_piecewise(rhs, {delta_jump(Side::Right, params.gamma, params.b)}, 0.0, X,
                                  y0, cfg);
  run.left = integrate_piecewise(rhs, {delta_jump(Side::Left, params.gamma, params.b)}, 0.0, -X,
                                 y0, cfg);
  const auto density = [](double, const StateVector& y) -> cplx { return std::norm(y[0]); };
  double norm = (quadrature(run.right, density) - quadrature(run.left, density)).real();
  if (kappa.real() > 0) {
    norm += tail_norm(kappa, params.g, std::norm(run.right.final_state()[0])) +
            tail_norm(kappa, params.g, std::norm(run.left.final_state()[0]));
  }
  run.norm = norm;
  return run;
}

RealVector shooting_residual(const ShootingUnknowns& u, const TrapParams& params) {
  return shooting_residual(u, params, matching_point(params, u.kappa));
}

RealVector shooting_residual(const ShootingUnknowns& u, const TrapParams& params, double x_match) {
  const ShootingRun run = integrate_stationary(u, params, x_match);
  const StateVector& r = run.right.final_state();
  const StateVector& l = run.left.final_state();
  const cplx d_plus = r[1] + tail_decay_rate(u.kappa, params.g, std::norm(r[0])) * r[0];
  const cplx d_minus = l[1] - tail_decay_rate(u.kappa, params.g, std::norm(l[0])) * l[0];
  RealVector res(5);
  res << d_plus.real(), d_plus.imag(), d_minus.real(), d_minus.imag(), run.norm - 1.0;
  return res;
}

namespace {

WaveSamples sample_run(const ShootingRun& run) {
  WaveSamples s;
  std::vector<double> xr, xl;
  std::vector<StateVector> yr, yl;
  run.right.endpoints(xr, yr);
  run.left.endpoints(xl, yl);
  for (std::size_t i = xl.size(); i-- > 1;) {  // skip x = 0, taken from the right run
    s.x.push_back(xl[i]);
    s.psi.push_back(yl[i][0]);
    s.dpsi.push_back(yl[i][1]);
  }
  for (std::size_t i = 0; i < xr.size(); ++i) {
    s.x.push_back(xr[i]);
    s.psi.push_back(yr[i][0]);
    s.dpsi.push_back(yr[i][1]);
  }
  return s;
}

double pt_deviation(const WaveSamples& s) {
  double dev = 0.0;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    if (s.x[i] < 0) continue;
    dev = std::max(dev, std::abs(s.eval(-s.x[i]) - std::conj(s.psi[i])));
  }
  return dev;
}

constexpr double kPtTolerance = 1e-7;
constexpr double kSampleStep = 0.01;

}  // namespace

StationaryState solve_stationary(const TrapParams& params, const ShootingUnknowns& guess,
                                 std::optional<Branch> label) {
  params.validate();
  const PhaseAnchor anchor = guess.anchor;
  const double x_match = matching_point(params, guess.kappa);
  const RealResidual residual = [&](const RealVector& v) {
    return shooting_residual(ShootingUnknowns::from_vector(v, anchor), params, x_match);
  };
  const NewtonResult nr = newton_solve(residual, guess.to_vector(), params.newton);

  StationaryState s;
  s.params = params;
  s.x_match = x_match;
  s.unknowns = ShootingUnknowns::from_vector(nr.root, anchor);
  s.kappa = s.unknowns.kappa;
  s.mu = -s.kappa * s.kappa;
  s.residual_norm = nr.residual_norm;
  s.iterations = nr.iterations;
  const ShootingRun run = integrate_stationary(s.unknowns, params, x_match, kSampleStep);
  s.norm = run.norm;
  s.psi = sample_run(run);
  s.pt_deviation = pt_deviation(s.psi);
  s.pt_symmetric = s.pt_deviation < kPtTolerance;
  if (label) {
    s.branch = *label;
  } else if (s.pt_symmetric) {
    s.branch = Branch::Ground;
  } else {
    s.branch = s.kappa.imag() > 0 ? Branch::BrokenPlus : Branch::BrokenMinus;
  }
  return s;
}

std::optional<StationaryState> try_solve_stationary(const TrapParams& params,
                                                    const ShootingUnknowns& guess,
                                                    std::optional<Branch> label) {
  try {
    StationaryState s = solve_stationary(params, guess, label);
    if (!(s.kappa.real() > 0)) return std::nullopt;
    return s;
  } catch (const NonConvergence&) {
  } catch (const SingularSystem&) {
  } catch (const IntegrationFailure&) {
  } catch (const InvalidState&) {
  }
  return std::nullopt;
}

StationaryState mirror(const StationaryState& s) {
  StationaryState m = s;
  m.params.gamma = -s.params.gamma;
  m.unknowns.dpsi0 = -s.unknowns.dpsi0;
  const std::size_t n = s.psi.x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = n - 1 - i;
    m.psi.x[i] = -s.psi.x[j];
    m.psi.psi[i] = s.psi.psi[j];
    m.psi.dpsi[i] = -s.psi.dpsi[j];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Seeding and continuation
// ---------------------------------------------------------------------------

namespace {

// Root of kappa = (1 + sign e^{-2 kappa b}) / 2 on (0, 1], by bisection.
std::optional<double> hermitian_kappa(double b, double sign) {
  const auto f = [&](double k) { return k - 0.5 * (1.0 + sign * std::exp(-2.0 * k * b)); };
  const double lo = 1e-9, hi = 1.0;
  if (!(f(lo) * f(hi) < 0)) return std::nullopt;
  return bisect(f, lo, hi, 1e-15);
}

}  // namespace

std::vector<Seed> linear_hermitian_seeds(double b) {
  std::vector<Seed> seeds;
  if (auto k = hermitian_kappa(b, +1.0)) {
    const double kb = *k * b;
    // cosh(kx)/cosh(kb) inside, exp(-k(|x|-b)) outside.
    const double norm = 2.0 * ((0.5 * b + std::sinh(2 * kb) / (4 * *k)) / std::pow(std::cosh(kb), 2) +
                               0.5 / *k);
    ShootingUnknowns u;
    u.anchor = PhaseAnchor::Value;
    u.psi0 = 1.0 / std::cosh(kb) / std::sqrt(norm);
    u.dpsi0 = 0.0;
    u.kappa = *k;
    seeds.push_back({Branch::Ground, u});
  }
  if (auto k = hermitian_kappa(b, -1.0); k && *k > 1e-6) {
    const double kb = *k * b;
    const double norm = 2.0 * ((std::sinh(2 * kb) / (4 * *k) - 0.5 * b) / std::pow(std::sinh(kb), 2) +
                               0.5 / *k);
    ShootingUnknowns u;
    u.anchor = PhaseAnchor::Slope;
    u.psi0 = 0.0;
    u.dpsi0 = 1.0i * (*k / std::sinh(kb) / std::sqrt(norm));
    u.kappa = *k;
    seeds.push_back({Branch::Excited, u});
  }
  return seeds;
}

namespace {

// March unknowns from params.with(p, from) to params.with(p, to) without
// keeping intermediate states.
std::optional<ShootingUnknowns> march(const TrapParams& params, ShootingUnknowns u, Parameter p,
                                      double from, double to, double max_step, Branch label) {
  if (from == to) {
    auto s = try_solve_stationary(params.with(p, to), u, label);
    if (!s) return std::nullopt;
    return s->unknowns;
  }
  auto s0 = try_solve_stationary(params.with(p, from), u, label);
  if (!s0) return std::nullopt;
  BranchCurve c = continue_branch(params.with(p, from), *s0, p, to, max_step);
  if (c.terminated || c.values.empty() || c.values.back() != to) return std::nullopt;
  return c.states.back().unknowns;
}

}  // namespace

namespace {

constexpr double kGammaScanMax = 2.0;
constexpr double kGammaStep = 0.01;
constexpr double kBrokenOffsets[] = {3e-4, 1e-3, 1e-4, 3e-3};

// Hermitian (gamma = 0) states at params.g, continued from the analytic g = 0
// states.
std::vector<StationaryState> hermitian_states(const TrapParams& params) {
  std::vector<StationaryState> out;
  TrapParams base = params;
  base.gamma = 0.0;
  base.g = 0.0;
  for (const Seed& lin : linear_hermitian_seeds(params.b)) {
    std::optional<ShootingUnknowns> u = lin.unknowns;
    if (params.g != 0.0) {
      try {
        u = march(base, *u, Parameter::G, 0.0, params.g, 0.1, lin.branch);
      } catch (const UsageError&) {
        u.reset();
      }
    }
    if (!u) continue;
    if (auto s = try_solve_stationary(base.with(Parameter::G, params.g), *u, lin.branch)) {
      out.push_back(std::move(*s));
    }
  }
  return out;
}

std::optional<StationaryState> find_branch(const std::vector<StationaryState>& states, Branch b) {
  for (const auto& s : states)
    if (s.branch == b) return s;
  return std::nullopt;
}

double jacobian_determinant(const StationaryState& s, double x_match) {
  StationaryState at = s;
  at.x_match = x_match;
  return shooting_jacobian(at).determinant();
}

// Point on the ground branch where the shooting Jacobian turns singular
// while the state stays PT-symmetric, with the symmetry-breaking null vector.
struct SingularPoint {
  double gamma = 0.0;
  StationaryState ground;
  RealVector direction;
};

std::optional<SingularPoint> ground_singular_point(const BranchCurve& ground) {
  if (ground.states.size() < 2) return std::nullopt;
  const double X = ground.states.front().x_match;
  double prev = jacobian_determinant(ground.states.front(), X);
  for (std::size_t i = 1; i < ground.states.size(); ++i) {
    const double det = jacobian_determinant(ground.states[i], X);
    if (prev * det < 0) {
      const StationaryState& a = ground.states[i - 1];
      const StationaryState& b = ground.states[i];
      const double ga = ground.values[i - 1], gb = ground.values[i];
      std::optional<StationaryState> last;
      const auto at = [&](double gamma) -> std::optional<StationaryState> {
        const double t = (gamma - ga) / (gb - ga);
        const RealVector guess =
            a.unknowns.to_vector() + t * (b.unknowns.to_vector() - a.unknowns.to_vector());
        return try_solve_stationary(a.params.with(Parameter::Gamma, gamma),
                                    ShootingUnknowns::from_vector(guess, a.unknowns.anchor),
                                    Branch::Ground);
      };
      const auto f = [&](double gamma) {
        auto s = at(gamma);
        if (!s) throw NotFound("ground state lost while locating the singular point");
        return jacobian_determinant(*s, X);
      };
      double gamma = 0.0;
      try {
        gamma = bisect(f, ga, gb, 1e-9);
      } catch (const NotFound&) {
        return std::nullopt;
      }
      auto s = at(gamma);
      if (!s) return std::nullopt;
      StationaryState fixed = *s;
      fixed.x_match = X;
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(shooting_jacobian(fixed), Eigen::ComputeFullV);
      return SingularPoint{gamma, *s, svd.matrixV().col(4)};
    }
    prev = det;
  }
  return std::nullopt;
}

ShootingUnknowns pt_image(const ShootingUnknowns& u) {
  ShootingUnknowns m = u;
  m.psi0 = std::conj(u.psi0);
  m.dpsi0 = -std::conj(u.dpsi0);
  m.kappa = std::conj(u.kappa);
  return m;
}

// Broken state with Im kappa > 0 just above the singular point.
std::optional<StationaryState> broken_from_singular(const SingularPoint& sp) {
  RealVector dir = sp.direction / sp.direction.norm();
  if (std::abs(dir[4]) > 1e-3) dir /= std::abs(dir[4]);
  for (double offset : kBrokenOffsets) {
    const double gamma = sp.gamma + offset;
    const TrapParams params = sp.ground.params.with(Parameter::Gamma, gamma);
    auto ground = try_solve_stationary(params, sp.ground.unknowns, Branch::Ground);
    if (!ground) continue;
    const RealVector base = ground->unknowns.gauged(PhaseAnchor::Value).to_vector();
    for (double amp : {1e-2, 3e-2, 1e-1, 3e-3}) {
      for (double sign : {+1.0, -1.0}) {
        const auto guess =
            ShootingUnknowns::from_vector(base + sign * amp * dir, PhaseAnchor::Value);
        auto s = try_solve_stationary(params, guess, Branch::BrokenPlus);
        if (s && !s->pt_symmetric) {
          if (s->kappa.imag() < 0) {
            s = try_solve_stationary(params, pt_image(s->unknowns), Branch::BrokenPlus);
            if (!s || s->pt_symmetric) continue;
          }
          return s;
        }
      }
    }
  }
  return std::nullopt;
}

BranchCurve ground_gamma_branch(const StationaryState& hermitian_ground, double to) {
  return continue_branch(hermitian_ground.params, hermitian_ground, Parameter::Gamma, to,
                         kGammaStep);
}

}  // namespace

Eigen::MatrixXd shooting_jacobian(const StationaryState& s) {
  const PhaseAnchor anchor = s.unknowns.anchor;
  const auto f = [&](const RealVector& v) {
    return shooting_residual(ShootingUnknowns::from_vector(v, anchor), s.params, s.x_match);
  };
  const RealVector x = s.unknowns.to_vector();
  const RealVector f0 = f(x);
  Eigen::MatrixXd jac(5, 5);
  for (int j = 0; j < 5; ++j) {
    RealVector y = x;
    const double h = s.params.newton.fd_step * std::max(1.0, std::abs(x[j]));
    y[j] += h;
    jac.col(j) = (f(y) - f0) / h;
  }
  return jac;
}

std::vector<Seed> seed_states(const TrapParams& params) {
  params.validate();
  std::vector<Seed> out;
  const std::vector<StationaryState> hermitian = hermitian_states(params);
  std::optional<BranchCurve> ground_curve;
  for (const StationaryState& h : hermitian) {
    if (params.gamma == 0.0) {
      out.push_back({h.branch, h.unknowns});
      continue;
    }
    try {
      BranchCurve c = continue_branch(h.params, h, Parameter::Gamma, params.gamma, kGammaStep);
      if (!c.terminated) out.push_back({h.branch, c.states.back().unknowns});
      if (h.branch == Branch::Ground) ground_curve = std::move(c);
    } catch (const UsageError&) {
    }
  }
  if (params.g >= 0) return out;

  std::optional<ShootingUnknowns> plus;
  if (ground_curve) {
    if (auto sp = ground_singular_point(*ground_curve); sp && sp->gamma < params.gamma) {
      if (auto broken = broken_from_singular(*sp)) {
        try {
          BranchCurve c = continue_branch(broken->params, *broken, Parameter::Gamma, params.gamma,
                                          kGammaStep);
          if (!c.terminated) plus = c.states.back().unknowns;
        } catch (const UsageError&) {
        }
      }
    }
  }
  if (plus) {
    out.push_back({Branch::BrokenPlus, *plus});
    out.push_back({Branch::BrokenMinus, pt_image(*plus)});
    return out;
  }
  // Below the pitchfork: plain symmetry-breaking perturbations of the ground
  // state, which fail or fall back onto it.
  auto ground = std::find_if(out.begin(), out.end(),
                             [](const Seed& s) { return s.branch == Branch::Ground; });
  if (ground != out.end()) {
    const ShootingUnknowns base = ground->unknowns.gauged(PhaseAnchor::Value);
    for (double sign : {+1.0, -1.0}) {
      ShootingUnknowns u = base;
      u.kappa += sign * 1e-2i;
      // psi * (1 +- 0.05 i tanh(x/b)) changes only psi'(0).
      u.dpsi0 += sign * 0.05i * u.psi0 / params.b;
      out.push_back({sign > 0 ? Branch::BrokenPlus : Branch::BrokenMinus, u});
    }
  }
  return out;
}

std::vector<BranchCurve> gamma_branches(const TrapParams& params, double gamma_max) {
  params.validate();
  std::vector<BranchCurve> out;
  std::optional<BranchCurve> ground;
  for (const StationaryState& h : hermitian_states(params)) {
    try {
      BranchCurve c = continue_branch(h.params, h, Parameter::Gamma, gamma_max, kGammaStep);
      if (h.branch == Branch::Ground) ground = c;
      out.push_back(std::move(c));
    } catch (const UsageError&) {
    }
  }
  if (params.g >= 0 || !ground) return out;
  const auto sp = ground_singular_point(*ground);
  if (!sp || sp->gamma >= gamma_max) return out;
  const auto broken = broken_from_singular(*sp);
  if (!broken) return out;
  BranchCurve plus;
  try {
    plus = continue_branch(broken->params, *broken, Parameter::Gamma, gamma_max, kGammaStep);
  } catch (const UsageError&) {
    return out;
  }
  BranchCurve minus;
  minus.parameter = Parameter::Gamma;
  for (std::size_t i = 0; i < plus.states.size(); ++i) {
    const StationaryState& s = plus.states[i];
    auto m = try_solve_stationary(s.params, pt_image(s.unknowns), Branch::BrokenMinus);
    if (!m) {
      minus.terminated = true;
      minus.termination_value = minus.values.empty() ? s.params.gamma : minus.values.back();
      break;
    }
    minus.values.push_back(plus.values[i]);
    minus.states.push_back(std::move(*m));
  }
  if (!minus.terminated) {
    minus.terminated = plus.terminated;
    minus.termination_value = plus.termination_value;
  }
  out.push_back(std::move(plus));
  if (!minus.states.empty()) out.push_back(std::move(minus));
  return out;
}

BranchCurve continue_branch(const TrapParams& params, const StationaryState& start,
                            Parameter parameter, double to, double step) {
  if (!(step > 0)) throw UsageError("continuation step must be positive");
  BranchCurve curve;
  curve.parameter = parameter;
  const double from = params.get(parameter);
  curve.values.push_back(from);
  curve.states.push_back(start);
  if (from == to) return curve;

  const double dir = to > from ? 1.0 : -1.0;
  const double min_step = step / 64.0;
  double h = step;
  double cur = from;
  const PhaseAnchor anchor = start.unknowns.anchor;
  bool any = false;

  while (dir * (to - cur) > 0) {
    double next = cur + dir * h;
    if (dir * (next - to) > 0 || std::abs(next - to) < 1e-12) next = to;

    // Secant predictor from the last two points.
    ShootingUnknowns guess = curve.states.back().unknowns;
    if (curve.states.size() >= 2) {
      const std::size_t n = curve.states.size();
      const double p1 = curve.values[n - 1], p0 = curve.values[n - 2];
      const RealVector v1 = curve.states[n - 1].unknowns.to_vector();
      const RealVector v0 = curve.states[n - 2].unknowns.to_vector();
      guess = ShootingUnknowns::from_vector(v1 + (v1 - v0) * ((next - p1) / (p1 - p0)), anchor);
    }

    auto s = try_solve_stationary(params.with(parameter, next), guess, start.branch);
    bool ok = s.has_value();
    if (ok) {
      const StationaryState& prev = curve.states.back();
      ok = s->pt_symmetric == start.pt_symmetric && std::abs(s->kappa - prev.kappa) < 0.05;
    }
    if (ok) {
      curve.values.push_back(next);
      curve.states.push_back(std::move(*s));
      cur = next;
      any = true;
      h = std::min(2.0 * h, step);
    } else {
      h *= 0.5;
      if (h < min_step * (1.0 - 1e-9)) {
        if (!any) throw UsageError("continuation failed at its first step");
        curve.terminated = true;
        curve.termination_value = cur;
        break;
      }
    }
  }
  return curve;
}

std::vector<StationaryState> solve_all_states(const TrapParams& params) {
  std::vector<StationaryState> found;
  for (const Seed& seed : seed_states(params)) {
    auto s = try_solve_stationary(params, seed.unknowns, seed.branch);
    if (!s) continue;
    const bool broken_label = seed.branch == Branch::BrokenPlus || seed.branch == Branch::BrokenMinus;
    if (broken_label == s->pt_symmetric) continue;  // fell onto another branch
    const bool duplicate = std::any_of(found.begin(), found.end(), [&](const StationaryState& f) {
      return std::abs(f.kappa - s->kappa) < 1e-6;
    });
    if (duplicate) continue;
    if (broken_label) s->branch = s->kappa.imag() > 0 ? Branch::BrokenPlus : Branch::BrokenMinus;
    found.push_back(std::move(*s));
  }
  return found;
}

namespace {

std::optional<StationaryState> nearest_solve(const TrapParams& params, double gamma,
                                             const std::vector<StationaryState>& known,
                                             Branch label, bool want_pt) {
  const StationaryState* best = nullptr;
  for (const auto& k : known)
    if (!best || std::abs(k.params.gamma - gamma) < std::abs(best->params.gamma - gamma)) best = &k;
  if (!best) return std::nullopt;
  auto s = try_solve_stationary(params.with(Parameter::Gamma, gamma), best->unknowns, label);
  if (!s || s->pt_symmetric != want_pt) return std::nullopt;
  return s;
}

}  // namespace

PitchforkResult locate_pitchfork_detailed(const TrapParams& params) {
  params.validate();
  if (params.g == 0.0) throw NotFound("no pitchfork bifurcation without nonlinearity");
  const auto hermitian = hermitian_states(params);
  const auto h_ground = find_branch(hermitian, Branch::Ground);
  if (!h_ground) throw NotFound("ground state not found");
  const BranchCurve ground = ground_gamma_branch(*h_ground, kGammaScanMax);
  const auto sp = ground_singular_point(ground);
  if (!sp) throw NotFound("no symmetry-breaking bifurcation on the ground branch");
  const auto broken = broken_from_singular(*sp);
  if (!broken) throw NotFound("no broken states near the ground-branch bifurcation");

  // Broken branch continued downward until it merges with the ground state.
  const double floor = std::max(0.0, sp->gamma - 0.05);
  BranchCurve down = continue_branch(broken->params, *broken, Parameter::Gamma, floor, 2.5e-4);
  if (!down.terminated) throw NotFound("broken branch does not terminate");
  std::vector<StationaryState> known = down.states;
  const TrapParams& bp = broken->params;

  // Existence bisection.
  double hi = down.termination_value;
  double lo = hi - 2.5e-4 / 64.0;
  while (nearest_solve(bp, lo, known, Branch::BrokenPlus, false)) lo -= hi - lo;
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (auto s = nearest_solve(bp, mid, known, Branch::BrokenPlus, false)) {
      hi = mid;
      known.push_back(std::move(*s));
    } else {
      lo = mid;
    }
  }

  PitchforkResult r;
  r.gamma_bisection = 0.5 * (lo + hi);

  // Square-root scaling: |Im kappa|^2 is linear in gamma near the bifurcation.
  constexpr int kFitPoints = 6;
  constexpr double kFitSpacing = 2e-4;
  for (int k = kFitPoints; k >= 1; --k) {
    const double gamma = hi + k * kFitSpacing;
    auto s = nearest_solve(bp, gamma, known, Branch::BrokenPlus, false);
    if (!s) continue;
    r.fit_points.emplace_back(gamma, s->kappa.imag() * s->kappa.imag());
    known.push_back(std::move(*s));
  }
  if (r.fit_points.size() < 3) throw NotFound("too few broken states for the extrapolation");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(r.fit_points.size());
  for (const auto& [x, y] : r.fit_points) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  r.gamma_kappa = -intercept / slope;
  return r;
}

double locate_pitchfork(const TrapParams& params) {
  return locate_pitchfork_detailed(params).gamma_kappa;
}

double locate_tangent(const TrapParams& params) {
  params.validate();
  const auto hermitian = hermitian_states(params);
  const auto h_ground = find_branch(hermitian, Branch::Ground);
  const auto h_excited = find_branch(hermitian, Branch::Excited);
  if (!h_ground || !h_excited) throw NotFound("the PT-symmetric pair does not exist at gamma = 0");
  const BranchCurve ground = ground_gamma_branch(*h_ground, kGammaScanMax);
  const BranchCurve excited = ground_gamma_branch(*h_excited, kGammaScanMax);
  if (!ground.terminated && !excited.terminated) throw NotFound("no tangent bifurcation in range");

  std::vector<StationaryState> known_g = ground.states;
  std::vector<StationaryState> known_e = excited.states;
  const TrapParams& base = h_ground->params;
  const auto exists = [&](double gamma) {
    auto g = nearest_solve(base, gamma, known_g, Branch::Ground, true);
    auto e = nearest_solve(base, gamma, known_e, Branch::Excited, true);
    if (!g || !e) return false;
    known_g.push_back(std::move(*g));
    known_e.push_back(std::move(*e));
    return true;
  };
  double lo = std::min(ground.terminated ? ground.termination_value : kGammaScanMax,
                       excited.terminated ? excited.termination_value : kGammaScanMax);
  double hi = lo + kGammaStep / 64.0;
  while (exists(hi)) {
    lo = hi;
    hi += kGammaStep / 64.0;
    if (hi > kGammaScanMax) throw NotFound("no tangent bifurcation in range");
  }
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    (exists(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace ptdelta
