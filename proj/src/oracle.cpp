#include "ptdelta/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace ptdelta {

// ---------------------------------------------------------------------------
// Linear spectrum
// ---------------------------------------------------------------------------

cplx linear_determinant(cplx kappa, double gamma, double b) {
  const cplx cl = delta_coefficient(Side::Left, gamma);
  const cplx cr = delta_coefficient(Side::Right, gamma);
  return (2.0 * kappa + cl) * (2.0 * kappa + cr) - cl * cr * std::exp(-4.0 * kappa * b);
}

namespace {

cplx linear_determinant_derivative(cplx kappa, double gamma, double b) {
  const cplx cl = delta_coefficient(Side::Left, gamma);
  const cplx cr = delta_coefficient(Side::Right, gamma);
  return 2.0 * (2.0 * kappa + cr) + 2.0 * (2.0 * kappa + cl) +
         4.0 * b * cl * cr * std::exp(-4.0 * kappa * b);
}

std::optional<cplx> newton_root(cplx z, double gamma, double b) {
  for (int it = 0; it < 100; ++it) {
    const cplx d = linear_determinant_derivative(z, gamma, b);
    if (std::abs(d) < 1e-300) return std::nullopt;
    const cplx step = linear_determinant(z, gamma, b) / d;
    z -= step;
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) || std::abs(z) > 50.0)
      return std::nullopt;
    if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(z))) return z;
  }
  return std::nullopt;
}

}  // namespace

std::vector<cplx> linear_spectrum(double gamma, double b) {
  if (!(b > 0)) throw UsageError("linear_spectrum: b must be positive");
  std::vector<cplx> roots;
  for (int i = 1; i <= 30; ++i) {
    for (int j = -10; j <= 10; ++j) {
      const auto r = newton_root(cplx(0.1 * i, 0.1 * j), gamma, b);
      if (!r || r->real() < 1e-6) continue;
      if (std::abs(linear_determinant(*r, gamma, b)) > 1e-12) continue;
      const bool seen = std::any_of(roots.begin(), roots.end(),
                                    [&](cplx q) { return std::abs(q - *r) < 1e-8; });
      if (!seen) roots.push_back(*r);
    }
  }
  for (auto& r : roots)
    if (std::abs(r.imag()) < 1e-14) r.imag(0.0);
  std::sort(roots.begin(), roots.end(), [](cplx a, cplx c) {
    if (a.real() != c.real()) return a.real() > c.real();
    return a.imag() > c.imag();
  });
  return roots;
}

std::optional<double> hermitian_linear_kappa(double b, double sign) {
  if (!(b > 0)) throw UsageError("hermitian_linear_kappa: b must be positive");
  const auto f = [&](double k) { return k - 0.5 * (1.0 + sign * std::exp(-2.0 * k * b)); };
  const double lo = 1e-6;
  if (f(lo) >= 0.0) return std::nullopt;
  return bisect(f, lo, 1.0, 1e-14);
}

LinearExceptionalPoint linear_exceptional_point(double b) {
  if (!(b > 0)) throw UsageError("linear_exceptional_point: b must be positive");
  // t = 1 - 2 kappa; gamma^2 = t / b - t^2 at the double root.
  const auto h = [&](double t) {
    return (1.0 + t / b - t * t) * std::exp(-2.0 * b * (1.0 - t)) - t / b;
  };
  const double hi = std::min(1.0, 1.0 / b);
  const int n = 400;
  double a = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double t = hi * i / n;
    if (h(a) * h(t) <= 0.0) {
      const double root = bisect(h, a, t, 1e-15);
      return {std::sqrt(std::max(0.0, root / b - root * root)), 0.5 * (1.0 - root)};
    }
    a = t;
  }
  throw NotFound("linear_exceptional_point: no double root");
}

// ---------------------------------------------------------------------------
// Grid solver
// ---------------------------------------------------------------------------

void GridProblem::validate() const {
  if (!(h > 0)) throw UsageError("GridProblem: h must be positive");
  if (!(L > 10 * h)) throw UsageError("GridProblem: L too small for h");
  if (!point_wells && width() < 2.0 * h) throw UsageError("GridProblem: sigma must be at least 2h");
}

int GridProblem::half_points() const { return static_cast<int>(std::lround(L / h)); }

RealVector GridProblem::grid() const {
  const int m = half_points();
  RealVector x(2 * m + 1);
  for (int i = 0; i <= 2 * m; ++i) x[i] = (i - m) * h;
  return x;
}

StateVector regularized_potential(const GridProblem& problem, const TrapParams& params) {
  const RealVector x = problem.grid();
  const cplx cl = delta_coefficient(Side::Left, params.gamma);
  const cplx cr = delta_coefficient(Side::Right, params.gamma);
  if (!(params.b + 5.0 * problem.width() < problem.L))
    throw UsageError("GridProblem: wells too close to the box edge");
  if (problem.point_wells) {
    const double nodes = params.b / problem.h;
    if (std::abs(nodes - std::round(nodes)) > 1e-9)
      throw UsageError("GridProblem: point wells need b on a grid node");
    const int m = problem.half_points();
    const auto k = static_cast<int>(std::lround(nodes));
    if (k >= m) throw UsageError("GridProblem: wells outside the grid");
    StateVector v = StateVector::Zero(x.size());
    v[m - k] = cl / problem.h;
    v[m + k] = cr / problem.h;
    return v;
  }
  const double s = problem.width();
  const double norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
  StateVector v(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double gl = norm * std::exp(-0.5 * std::pow((x[i] + params.b) / s, 2));
    const double gr = norm * std::exp(-0.5 * std::pow((x[i] - params.b) / s, 2));
    v[i] = cl * gl + cr * gr;
  }
  return v;
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

struct GridSystem {
  const GridProblem& problem;
  const TrapParams& params;
  StateVector pot;
  int n = 0;
  int anchor = 0;

  RealVector residual(const StateVector& psi, cplx kappa) const {
    const double h = problem.h;
    const double ih2 = 1.0 / (h * h);
    RealVector r(2 * n + 2);
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
      const cplx left = i > 0 ? psi[i - 1] : cplx{};
      const cplx right = i + 1 < n ? psi[i + 1] : cplx{};
      const double rho = std::norm(psi[i]);
      const cplx e = (left - 2.0 * psi[i] + right) * ih2 -
                     (kappa * kappa + pot[i] + params.g * rho) * psi[i];
      r[2 * i] = e.real();
      r[2 * i + 1] = e.imag();
      norm += rho;
    }
    r[2 * n] = h * norm - 1.0;
    r[2 * n + 1] = psi[anchor].imag();
    return r;
  }

  // Newton step from the bordered system [A B; C 0]: A is the banded
  // derivative in the grid values, B the two kappa columns, C the norm and
  // phase rows.
  RealVector step(const StateVector& psi, cplx kappa, const RealVector& r) const {
    const double h = problem.h;
    const double ih2 = 1.0 / (h * h);
    const int dim = 2 * n;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(8 * n));
    Eigen::MatrixXd bcols(dim, 2);
    Eigen::MatrixXd crows = Eigen::MatrixXd::Zero(2, dim);
    for (int i = 0; i < n; ++i) {
      const int re = 2 * i, im = 2 * i + 1;
      const cplx a = -2.0 * ih2 - kappa * kappa - pot[i] - 2.0 * params.g * std::norm(psi[i]);
      const cplx bb = -params.g * psi[i] * psi[i];
      const cplx dp = a + bb;
      const cplx dq = cplx(0, 1) * (a - bb);
      t.emplace_back(re, re, dp.real());
      t.emplace_back(im, re, dp.imag());
      t.emplace_back(re, im, dq.real());
      t.emplace_back(im, im, dq.imag());
      for (int j : {i - 1, i + 1}) {
        if (j < 0 || j >= n) continue;
        t.emplace_back(re, 2 * j, ih2);
        t.emplace_back(im, 2 * j + 1, ih2);
      }
      const cplx dk = -2.0 * kappa * psi[i];
      bcols(re, 0) = dk.real();
      bcols(im, 0) = dk.imag();
      bcols(re, 1) = -dk.imag();
      bcols(im, 1) = dk.real();
      crows(0, re) = 2.0 * h * psi[i].real();
      crows(0, im) = 2.0 * h * psi[i].imag();
    }
    crows(1, 2 * anchor + 1) = 1.0;
    SpMat a(dim, dim);
    a.setFromTriplets(t.begin(), t.end());
    a.makeCompressed();
    Eigen::SparseLU<SpMat, Eigen::NaturalOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw SingularSystem("grid_solve: singular Jacobian");
    const RealVector z0 = lu.solve(-r.head(dim));
    const Eigen::MatrixXd z = lu.solve(bcols);
    const Eigen::Matrix2d schur = -crows * z;
    const Eigen::Vector2d rhs = -r.tail(2) - crows * z0;
    const Eigen::FullPivLU<Eigen::Matrix2d> slu(schur);
    if (slu.rank() < 2) throw SingularSystem("grid_solve: singular bordered system");
    const Eigen::Vector2d dk = slu.solve(rhs);
    RealVector dx(dim + 2);
    dx.head(dim) = z0 - z * dk;
    dx.tail(2) = dk;
    return dx;
  }
};

}  // namespace

GridSolution grid_solve_single(const GridProblem& problem, const TrapParams& params,
                               const StateVector& guess, cplx kappa_guess) {
  problem.validate();
  params.validate();
  const int n = 2 * problem.half_points() + 1;
  if (guess.size() != n) throw UsageError("grid_solve: guess size does not match the grid");
  if (guess.cwiseAbs().maxCoeff() <= 0.0) throw UsageError("grid_solve: zero guess");

  GridSystem sys{problem, params, regularized_potential(problem, params), n, 0};
  const int centre = n / 2;
  Eigen::Index imax = 0;
  const double amax = guess.cwiseAbs().maxCoeff(&imax);
  sys.anchor = std::abs(guess[centre]) > 0.1 * amax ? centre : static_cast<int>(imax);

  StateVector psi = guess * std::polar(1.0, -std::arg(guess[sys.anchor]));
  const double scale = std::sqrt(problem.h * psi.squaredNorm());
  psi /= scale;
  cplx kappa = kappa_guess;

  RealVector r = sys.residual(psi, kappa);
  double rnorm = r.lpNorm<Eigen::Infinity>();
  int it = 0;
  for (; it < 40 && rnorm > 1e-9; ++it) {
    const RealVector dx = sys.step(psi, kappa, r);
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k <= 8; ++k, lambda *= 0.5) {
      StateVector p2 = psi;
      for (int i = 0; i < n; ++i) p2[i] += lambda * cplx(dx[2 * i], dx[2 * i + 1]);
      const cplx k2 = kappa + lambda * cplx(dx[2 * n], dx[2 * n + 1]);
      const RealVector r2 = sys.residual(p2, k2);
      const double n2 = r2.lpNorm<Eigen::Infinity>();
      if (std::isfinite(n2) && (n2 < rnorm || k == 8)) {
        psi = std::move(p2);
        kappa = k2;
        r = r2;
        rnorm = n2;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (!(rnorm <= 1e-9)) {
    RealVector best(2 * n + 2);
    for (int i = 0; i < n; ++i) {
      best[2 * i] = psi[i].real();
      best[2 * i + 1] = psi[i].imag();
    }
    best[2 * n] = kappa.real();
    best[2 * n + 1] = kappa.imag();
    throw NonConvergence("grid_solve: Newton did not converge", best, rnorm);
  }
  if (kappa.real() < 0) kappa = -kappa;
  return {problem.grid(), psi, kappa, problem.point_wells ? 0.0 : problem.width(), it, rnorm};
}

GridResult grid_solve(const GridProblem& problem, const TrapParams& params,
                      const StateVector& guess, cplx kappa_guess) {
  GridResult out;
  StateVector start = guess;
  cplx kstart = kappa_guess;
  for (int level = 0; level < 3; ++level) {
    GridProblem q = problem;
    q.sigma = 4.0 * problem.h * (1 << level);
    GridSolution s = grid_solve_single(q, params, start, kstart);
    start = s.psi;
    kstart = s.kappa;
    out.sigma[level] = q.sigma;
    out.levels[level] = s.kappa;
    if (level == 0) out.fine = std::move(s);
  }
  const auto& k = out.levels;
  out.kappa = (8.0 * k[0] - 6.0 * k[1] + k[2]) / 3.0;
  out.error_estimate = std::abs(out.kappa - (2.0 * k[0] - k[1]));
  return out;
}

StateVector grid_guess(const StationaryState& state, const GridProblem& problem) {
  const RealVector x = problem.grid();
  StateVector g = StateVector::Zero(x.size());
  const double lo = state.psi.x.front(), hi = state.psi.x.back();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x[i] >= lo && x[i] <= hi) g[i] = state.psi.eval(x[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Propagation
// ---------------------------------------------------------------------------

void PropagationRun::validate() const {
  grid.validate();
  if (!(dt > 0) || !(T > 0)) throw UsageError("PropagationRun: dt and T must be positive");
  if (sample_every < 1) throw UsageError("PropagationRun: sample_every must be >= 1");
  if (epsilon < 0 || epsilon > 1e-3) throw UsageError("PropagationRun: epsilon must lie in [0, 1e-3]");
  if (!(blow_up > 0)) throw UsageError("PropagationRun: blow_up must be positive");
}

namespace {

/// Solves the tridiagonal system with constant off-diagonal `off` and
/// diagonal `diag` in place of `rhs`.
void solve_tridiagonal(const std::vector<cplx>& diag, cplx off, std::vector<cplx>& rhs,
                       std::vector<cplx>& work) {
  const std::size_t n = diag.size();
  work.resize(n);
  cplx den = diag[0];
  work[0] = off / den;
  rhs[0] /= den;
  for (std::size_t i = 1; i < n; ++i) {
    den = diag[i] - off * work[i - 1];
    work[i] = off / den;
    rhs[i] = (rhs[i] - off * rhs[i - 1]) / den;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= work[i] * rhs[i + 1];
}

}  // namespace

PropagationSeries propagate(const PropagationRun& run, const TrapParams& params,
                            const StationaryState& state, const BdgSolution* mode) {
  run.validate();
  params.validate();
  const GridProblem& grid = run.grid;
  const double h = grid.h;
  const double dt = run.dt;

  const StateVector shoot = grid_guess(state, grid);
  const GridSolution base = grid_solve_single(grid, params, shoot, state.kappa);
  // Same global phase as the shooting state, so that the BdG mode applies.
  const StateVector psi0 = base.psi * std::polar(1.0, -std::arg(shoot.dot(base.psi)));

  const auto n = static_cast<std::size_t>(psi0.size());
  const RealVector xs = grid.grid();
  const StateVector pot = regularized_potential(grid, params);

  std::vector<cplx> psi(n), ref(n);
  for (std::size_t i = 0; i < n; ++i) {
    ref[i] = psi0[static_cast<Eigen::Index>(i)];
    psi[i] = ref[i];
    if (mode && run.epsilon > 0) {
      const double x = xs[static_cast<Eigen::Index>(i)];
      const auto in = [&](const WaveSamples& w) { return x >= w.x.front() && x <= w.x.back(); };
      const cplx u = in(mode->u) ? mode->u.eval(x) : cplx{};
      const cplx w = in(mode->v) ? mode->v.eval(x) : cplx{};
      psi[i] += run.epsilon * (u + std::conj(w));
    }
  }

  const bool norm_independent = grid.mode == NonlinearityMode::NormIndependent;
  const auto mass = [&](const std::vector<cplx>& f) {
    double sum = 0.0;
    for (const cplx& z : f) sum += std::norm(z);
    return h * sum;
  };

  const cplx half(0.0, 0.5 * dt);
  const cplx off = -half / (h * h);
  std::vector<cplx> lin(n);
  for (std::size_t i = 0; i < n; ++i) lin[i] = 2.0 / (h * h) + pot[static_cast<Eigen::Index>(i)];

  PropagationSeries out;
  out.epsilon = run.epsilon;
  out.mu = -base.kappa * base.kappa;
  // One step maps psi0 to psi0 (1 - i mu dt/2) / (1 + i mu dt/2).
  const cplx per_step = (1.0 + half * out.mu) / (1.0 - half * out.mu);

  const auto record = [&](long step) {
    const cplx rot = std::pow(per_step, static_cast<double>(step));
    double diff = 0.0;
    cplx overlap{};
    for (std::size_t i = 0; i < n; ++i) {
      const cplx z = psi[i] * rot;
      diff += std::norm(z - ref[i]);
      overlap += std::conj(ref[i]) * z;
    }
    out.t.push_back(step * dt);
    out.norm.push_back(std::sqrt(mass(psi)));
    out.overlap.push_back(h * overlap);
    out.amplitude.push_back(std::sqrt(h * diff));
    const double a = out.amplitude.back();
    return std::isfinite(a) && a < run.blow_up;
  };

  std::vector<cplx> next(n), trial(n), diag(n), work;
  std::vector<double> rho(n);
  const long steps = std::lround(run.T / dt);
  if (!record(0)) {
    out.truncated = true;
    return out;
  }
  for (long s = 1; s <= steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) rho[i] = std::norm(psi[i]);
    const double mass_now = mass(psi);
    next = psi;
    for (int it = 0; it < 50; ++it) {
      double geff = params.g;
      if (norm_independent) geff /= 0.5 * (mass_now + mass(next));
      for (std::size_t i = 0; i < n; ++i) {
        const cplx hd = lin[i] + geff * 0.5 * (rho[i] + std::norm(next[i]));
        diag[i] = 1.0 + half * hd;
        const cplx left = i > 0 ? psi[i - 1] : cplx{};
        const cplx right = i + 1 < n ? psi[i + 1] : cplx{};
        trial[i] = (1.0 - half * hd) * psi[i] + half / (h * h) * (left + right);
      }
      solve_tridiagonal(diag, off, trial, work);
      double change = 0.0, size = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        change = std::max(change, std::abs(trial[i] - next[i]));
        size = std::max(size, std::abs(trial[i]));
      }
      next.swap(trial);
      if (params.g == 0.0 || change <= 1e-15 * std::max(1.0, size)) break;
    }
    psi.swap(next);
    if (s % run.sample_every == 0 || s == steps) {
      if (!record(s)) {
        out.truncated = true;
        break;
      }
    }
  }
  return out;
}

GrowthFit fit_growth_rate(const std::vector<double>& t, const std::vector<double>& a,
                          double epsilon) {
  if (t.size() != a.size()) throw UsageError("fit_growth_rate: size mismatch");
  GrowthFit fit;
  const double lo = 10.0 * epsilon, hi = 0.1;
  std::size_t begin = 0;
  while (begin < a.size() && !(a[begin] > lo && a[begin] < hi)) {
    if (a[begin] >= hi) return fit;
    ++begin;
  }
  std::size_t end = begin;
  while (end < a.size() && a[end] > lo && a[end] < hi) ++end;
  fit.window_begin = begin;
  fit.window_end = end;
  const bool exits_above = end < a.size() && a[end] >= hi;
  if (end - begin < 5 || !exits_above) return fit;

  double st = 0, sy = 0, stt = 0, sty = 0;
  const double k = static_cast<double>(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const double y = std::log(a[i]);
    st += t[i];
    sy += y;
    stt += t[i] * t[i];
    sty += t[i] * y;
  }
  const double den = k * stt - st * st;
  if (den <= 0) return fit;
  fit.rate = (k * sty - st * sy) / den;
  fit.stable = !(fit.rate > 0);
  if (fit.stable) fit.rate = 0.0;
  return fit;
}

GrowthFit fit_growth_rate(const PropagationSeries& series) {
  return fit_growth_rate(series.t, series.amplitude, series.epsilon);
}

}  // namespace ptdelta
