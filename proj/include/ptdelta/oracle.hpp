#ifndef PTDELTA_ORACLE_HPP
#define PTDELTA_ORACLE_HPP

#include <array>
#include <vector>

#include "ptdelta/bdg.hpp"

namespace ptdelta {

// ---------------------------------------------------------------------------
// Linear (g = 0) spectrum
// ---------------------------------------------------------------------------

/// Matching determinant of the linear problem assembled from the piecewise
/// exponentials: D(kappa) = (2 kappa + cL)(2 kappa + cR) - cL cR e^{-4 kappa b}
/// with the jump coefficients cL, cR of the two wells.
cplx linear_determinant(cplx kappa, double gamma, double b);

/// Roots of D with Re kappa > 0, by complex Newton from a grid of starting
/// points; distinct, sorted by decreasing Re kappa.
std::vector<cplx> linear_spectrum(double gamma, double b);

/// Root of kappa = (1 + sign e^{-2 kappa b}) / 2 in (0, 1] by bisection
/// (sign = +1 even, -1 odd); absent when the odd state does not exist.
std::optional<double> hermitian_linear_kappa(double b, double sign);

struct LinearExceptionalPoint {
  double gamma = 0.0;
  double kappa = 0.0;
};
/// Where the two real linear roots merge: double root of
/// (1 + gamma^2) e^{-4 kappa b} - (2 kappa - 1)^2 - gamma^2.
LinearExceptionalPoint linear_exceptional_point(double b);

// ---------------------------------------------------------------------------
// Finite-difference grid solver
// ---------------------------------------------------------------------------

/// Uniform grid x_i = i h, |i| <= M, with psi = 0 one step beyond; wells
/// replaced by unit-area Gaussians of width sigma, or with point_wells by a
/// weight 1/h on the node at +-b (b must then be a multiple of h).
struct GridProblem {
  double h = 0.0025;
  double L = 20.0;     // half extent, rounded to a multiple of h
  double sigma = 0.0;  // <= 0 selects 4 h
  NonlinearityMode mode = NonlinearityMode::NormDependent;
  bool point_wells = false;

  void validate() const;
  int half_points() const;  // M
  RealVector grid() const;
  double width() const { return sigma > 0 ? sigma : 4.0 * h; }
};

/// -(1 + i gamma) G(x + b) - (1 - i gamma) G(x - b) on the grid.
StateVector regularized_potential(const GridProblem& problem, const TrapParams& params);

struct GridSolution {
  RealVector x;
  StateVector psi;
  cplx kappa;
  double sigma = 0.0;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Newton on (grid values, kappa) with the norm condition and Im psi = 0 at
/// the largest guess value appended.
GridSolution grid_solve_single(const GridProblem& problem, const TrapParams& params,
                               const StateVector& guess, cplx kappa_guess);

struct GridResult {
  cplx kappa;  // extrapolated to sigma -> 0
  std::array<double, 3> sigma{};
  std::array<cplx, 3> levels{};  // kappa at sigma = 4h, 8h, 16h
  double error_estimate = 0.0;   // distance to the two-level extrapolation
  GridSolution fine;             // sigma = 4h
};

/// Solves at sigma = 4h, 8h and 16h and extrapolates kappa to sigma -> 0
/// assuming an error a sigma + c sigma^2 (a smoothed well acts like a point
/// well whose strength is shifted at first order in its width).
GridResult grid_solve(const GridProblem& problem, const TrapParams& params,
                      const StateVector& guess, cplx kappa_guess);

/// A shooting state sampled on the grid (zero outside its matching points).
StateVector grid_guess(const StationaryState& state, const GridProblem& problem);

// ---------------------------------------------------------------------------
// Real-time propagation
// ---------------------------------------------------------------------------

struct PropagationRun {
  GridProblem grid{0.01, 25.0, 0.0, NonlinearityMode::NormDependent, true};
  double dt = 0.01;
  double T = 150.0;
  int sample_every = 10;
  double epsilon = 1e-4;
  double blow_up = 1e3;  // amplitude at which the run stops early

  void validate() const;
};

struct PropagationSeries {
  std::vector<double> t;
  std::vector<double> norm;
  std::vector<cplx> overlap;       // <psi0 | psi(t) e^{i mu t}>
  std::vector<double> amplitude;   // || psi(t) e^{i mu t} - psi0 ||
  double epsilon = 0.0;
  cplx mu;
  bool truncated = false;          // stopped at the blow-up threshold
};

/// Evolves i psi_t = [-d^2 + V + g_eff |psi|^2] psi on the grid of the
/// stationary solver (psi = 0 beyond +-L) by the Crank-Nicolson scheme with
/// the nonlinearity averaged over the two time levels, solved by fixed-point
/// iteration. It conserves the norm for gamma = 0 and maps a grid stationary
/// state onto itself times a phase, which e^{i mu t} in the observables is
/// replaced by. The start is the grid stationary state near `state` plus
/// epsilon (u + v*) of `mode` (none: unperturbed). In the norm-independent
/// mode g_eff = g / ||psi||^2.
PropagationSeries propagate(const PropagationRun& run, const TrapParams& params,
                            const StationaryState& state, const BdgSolution* mode);

struct GrowthFit {
  double rate = 0.0;
  bool stable = true;
  std::size_t window_begin = 0, window_end = 0;  // sample indices, half open
};

/// Least-squares slope of log a(t) over the samples where
/// 10 epsilon < a < 0.1 (up to the first exit above 0.1).
GrowthFit fit_growth_rate(const std::vector<double>& t, const std::vector<double>& a,
                          double epsilon);
GrowthFit fit_growth_rate(const PropagationSeries& series);

}  // namespace ptdelta

#endif  // PTDELTA_ORACLE_HPP
