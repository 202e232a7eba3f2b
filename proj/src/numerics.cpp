#include "ptdelta/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ptdelta {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Continuous extension (Hairer, Norsett & Wanner).
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

// Three-point Gauss-Legendre rule on [0, 1].
constexpr double kGaussNodes[3] = {0.5 - 0.3872983346207416885, 0.5, 0.5 + 0.3872983346207416885};
constexpr double kGaussWeights[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

class DoPri5 {
 public:
  DoPri5(const OdeRhs& rhs, const IntegratorConfig& cfg, Eigen::Index n)
      : rhs_(rhs), cfg_(cfg), k1_(n), k2_(n), k3_(n), k4_(n), k5_(n), k6_(n), k7_(n), tmp_(n),
        ynew_(n) {}

  // Integrates one smooth segment from (x, y) to `target`, appending nodes.
  // `h` carries the step-size proposal across segments.
  void run(double& x, StateVector& y, double target, double& h, Segment& seg) {
    const double dir = target > x ? 1.0 : -1.0;
    seg.x.push_back(x);
    seg.y.push_back(y);
    if (x == target) return;
    eval(x, y, k1_);
    std::size_t steps = 0;
    while (true) {
      const double remaining = std::abs(target - x);
      double h_try = h;
      bool last = false;
      if (h_try >= remaining * (1.0 - 1e-12)) {
        h_try = remaining;
        last = true;
      }
      const double hs = dir * h_try;
      stages(x, y, hs);
      double err = error_norm(y, hs);
      if (!std::isfinite(err)) err = 1e10;
      if (err <= 1.0) {
        const double xnew = last ? target : x + hs;
        for (double th : kGaussNodes) {
          seg.qx.push_back(x + th * hs);
          seg.qy.push_back(dense(y, hs, th));
        }
        seg.x.push_back(xnew);
        seg.y.push_back(ynew_);
        x = xnew;
        y = ynew_;
        k1_ = k7_;
        if (last) return;
        const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        h = std::min(h_try * fac, cfg_.max_step);
      } else {
        h = h_try * std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
      }
      if (h < 1e-13 * std::max(1.0, std::abs(x))) {
        throw IntegrationFailure("step size underflow", x);
      }
      if (++steps > 5'000'000) throw IntegrationFailure("too many steps", x);
    }
  }

 private:
  void eval(double x, const StateVector& y, StateVector& out) {
    rhs_(x, y, out);
    if (!out.allFinite()) throw InvalidState("non-finite right-hand side", x);
  }

  void stages(double x, const StateVector& y, double hs) {
    tmp_ = y + hs * a21 * k1_;
    eval(x + c2 * hs, tmp_, k2_);
    tmp_ = y + hs * (a31 * k1_ + a32 * k2_);
    eval(x + c3 * hs, tmp_, k3_);
    tmp_ = y + hs * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    eval(x + c4 * hs, tmp_, k4_);
    tmp_ = y + hs * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    eval(x + c5 * hs, tmp_, k5_);
    tmp_ = y + hs * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    eval(x + hs, tmp_, k6_);
    ynew_ = y + hs * (a71 * k1_ + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
    eval(x + hs, ynew_, k7_);
  }

  double error_norm(const StateVector& y, double hs) {
    tmp_ = hs * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    double acc = 0.0;
    const Eigen::Index n = y.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sk = cfg_.abs_tol + cfg_.rel_tol * std::max(std::abs(y[i]), std::abs(ynew_[i]));
      const double e = std::abs(tmp_[i]) / sk;
      acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(n));
  }

  StateVector dense(const StateVector& y, double hs, double th) const {
    const double th1 = 1.0 - th;
    const StateVector ydiff = ynew_ - y;
    const StateVector bspl = hs * k1_ - ydiff;
    const StateVector r4 = ydiff - hs * k7_ - bspl;
    const StateVector r5 = hs * (d1 * k1_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
    return y + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5)));
  }

 private:
  const OdeRhs& rhs_;
  const IntegratorConfig& cfg_;
  StateVector k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, ynew_;
};

}  // namespace

void IntegratorConfig::validate() const {
  if (!(abs_tol > 0 && rel_tol > 0 && max_step > 0 && initial_step > 0)) {
    throw UsageError("integrator tolerances and steps must be strictly positive");
  }
}

void NewtonConfig::validate() const {
  if (!(residual_tol > 0) || !(fd_step > 0) || max_iterations < 1 || !(damping > 0) ||
      damping > 1) {
    throw UsageError("invalid Newton configuration");
  }
}

std::size_t Trajectory::sample_count() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.x.size();
  return n;
}

void Trajectory::endpoints(std::vector<double>& x, std::vector<StateVector>& y) const {
  x.clear();
  y.clear();
  for (const auto& s : segments) {
    x.insert(x.end(), s.x.begin(), s.x.end());
    y.insert(y.end(), s.y.begin(), s.y.end());
  }
}

Trajectory integrate_piecewise(const OdeRhs& rhs, const std::vector<JumpCondition>& jumps,
                               double x_start, double x_end, const StateVector& y0,
                               const IntegratorConfig& cfg) {
  cfg.validate();
  if (x_start == x_end) throw UsageError("integration interval is empty");
  if (!y0.allFinite()) throw InvalidState("non-finite initial state", x_start);
  const double dir = x_end > x_start ? 1.0 : -1.0;
  for (std::size_t i = 0; i < jumps.size(); ++i) {
    const double p = jumps[i].position;
    if (!(dir * (p - x_start) > 0 && dir * (x_end - p) > 0)) {
      throw UsageError("jump position outside the open integration interval");
    }
    if (i > 0 && !(dir * (p - jumps[i - 1].position) > 0)) {
      throw UsageError("jumps must be sorted along the direction of integration");
    }
    if (jumps[i].transform.rows() != y0.size() || jumps[i].transform.cols() != y0.size()) {
      throw UsageError("jump transform dimension mismatch");
    }
  }

  Trajectory traj;
  DoPri5 stepper(rhs, cfg, y0.size());
  double x = x_start;
  StateVector y = y0;
  double h = std::min(cfg.initial_step, cfg.max_step);
  for (std::size_t i = 0; i <= jumps.size(); ++i) {
    const double target = i < jumps.size() ? jumps[i].position : x_end;
    Segment seg;
    stepper.run(x, y, target, h, seg);
    traj.segments.push_back(std::move(seg));
    if (i < jumps.size()) {
      if (dir > 0) {
        y = jumps[i].transform * y;
      } else {
        y = jumps[i].transform.partialPivLu().solve(y);
      }
    }
  }
  return traj;
}

cplx quadrature(const Trajectory& trajectory, const TrajectoryIntegrand& integrand) {
  if (trajectory.sample_count() < 2) throw UsageError("quadrature needs at least two samples");
  cplx total = 0.0;
  for (const auto& seg : trajectory.segments) {
    for (std::size_t i = 0; i + 1 < seg.x.size(); ++i) {
      const double h = seg.x[i + 1] - seg.x[i];
      cplx panel = 0.0;
      for (int k = 0; k < 3; ++k) panel += kGaussWeights[k] * integrand(seg.qx[3 * i + k], seg.qy[3 * i + k]);
      total += h * panel;
    }
  }
  return total;
}

NewtonResult newton_solve(const RealResidual& residual, const RealVector& guess,
                          const NewtonConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = guess.size();
  RealVector x = guess;
  RealVector f = residual(x);
  if (f.size() != n) throw UsageError("residual dimension differs from unknown dimension");

  RealVector best = x;
  double best_norm = f.lpNorm<Eigen::Infinity>();
  Eigen::MatrixXd jac(n, n);

  for (int it = 0; it <= cfg.max_iterations; ++it) {
    const double fmax = f.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(fmax)) break;
    if (fmax < best_norm) {
      best = x;
      best_norm = fmax;
    }
    if (fmax <= cfg.residual_tol) return {x, it, fmax};
    if (it == cfg.max_iterations) break;

    for (Eigen::Index j = 0; j < n; ++j) {
      const double step = cfg.fd_step * std::max(1.0, std::abs(x[j]));
      RealVector xp = x;
      xp[j] += step;
      jac.col(j) = (residual(xp) - f) / step;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    lu.setThreshold(1e-12);
    if (!jac.allFinite() || lu.rank() < n) {
      throw SingularSystem("rank-deficient Jacobian in Newton iteration");
    }
    const RealVector dx = lu.solve(-f);

    const double f2 = f.norm();
    double lambda = cfg.damping;
    RealVector trial_x, trial_f;
    bool accepted = false;
    RealVector fallback_x, fallback_f;
    double fallback_norm = std::numeric_limits<double>::infinity();
    for (int halving = 0; halving <= 8; ++halving) {
      trial_x = x + lambda * dx;
      try {
        trial_f = residual(trial_x);
      } catch (const IntegrationFailure&) {
        lambda *= 0.5;
        continue;
      } catch (const InvalidState&) {
        lambda *= 0.5;
        continue;
      }
      const double tn = trial_f.norm();
      if (std::isfinite(tn) && tn < f2) {
        accepted = true;
        break;
      }
      if (std::isfinite(tn) && tn < fallback_norm) {
        fallback_norm = tn;
        fallback_x = trial_x;
        fallback_f = trial_f;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (fallback_x.size() == 0) break;
      trial_x = fallback_x;
      trial_f = fallback_f;
    }
    x = trial_x;
    f = trial_f;
  }
  throw NonConvergence("Newton iteration did not converge", best, best_norm);
}

double bisect(const std::function<double(double)>& f, double a, double b, double tol) {
  if (!(tol > 0)) throw UsageError("bisection tolerance must be positive");
  double fa = f(a);
  const double fb = f(b);
  if (!(fa * fb < 0)) throw BracketError("no sign change in bisection bracket");
  while (std::abs(b - a) > tol) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

cplx hermite_cubic(double x0, double x1, cplx y0, cplx y1, cplx d0, cplx d1, double x) {
  const double h = x1 - x0;
  const double t = (x - x0) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
}

}  // namespace ptdelta
