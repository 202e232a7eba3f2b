#ifndef PTDELTA_NUMERICS_HPP
#define PTDELTA_NUMERICS_HPP

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ptdelta {

using cplx = std::complex<double>;
using StateVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IntegrationFailure : public std::runtime_error {
 public:
  IntegrationFailure(const std::string& what, double last_x)
      : std::runtime_error(what), last_x(last_x) {}
  double last_x;
};

class InvalidState : public std::runtime_error {
 public:
  InvalidState(const std::string& what, double x)
      : std::runtime_error(what), x(x) {}
  double x;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, RealVector best, double best_norm)
      : std::runtime_error(what), best(std::move(best)), best_norm(best_norm) {}
  RealVector best;
  double best_norm;
};

class SingularSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BracketError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// ODE integration with interior jumps
// ---------------------------------------------------------------------------

/// Linear jump applied to the state when crossing `position` in the +x
/// direction. Crossing in the -x direction applies the inverse.
struct JumpCondition {
  double position = 0.0;
  Eigen::MatrixXcd transform;
};

struct IntegratorConfig {
  double abs_tol = 1e-11;
  double rel_tol = 1e-11;
  double max_step = 0.5;
  double initial_step = 1e-3;

  void validate() const;
};

/// Right-hand side y' = f(x, y), written into `dydx` (preallocated).
using OdeRhs = std::function<void(double x, const StateVector& y, StateVector& dydx)>;

/// One smooth piece of a trajectory between jumps: accepted step endpoints
/// plus, for every step, the continuous-extension state at the three
/// Gauss-Legendre nodes of that step (used by `quadrature`).
struct Segment {
  std::vector<double> x;
  std::vector<StateVector> y;
  std::vector<double> qx;
  std::vector<StateVector> qy;
};

struct Trajectory {
  std::vector<Segment> segments;

  const StateVector& final_state() const { return segments.back().y.back(); }
  double final_x() const { return segments.back().x.back(); }
  std::size_t sample_count() const;

  /// Step endpoints in integration order. Jump positions appear twice, once
  /// per side.
  void endpoints(std::vector<double>& x, std::vector<StateVector>& y) const;
};

/// Adaptive Dormand-Prince 5(4) integration from x_start to x_end.
/// `jumps` must be sorted along the direction of integration.
Trajectory integrate_piecewise(const OdeRhs& rhs, const std::vector<JumpCondition>& jumps,
                               double x_start, double x_end, const StateVector& y0,
                               const IntegratorConfig& cfg);

using TrajectoryIntegrand = std::function<cplx(double x, const StateVector& y)>;

/// Oriented integral along the trajectory (from its start to its end):
/// three-point Gauss-Legendre per step on the continuous extension.
cplx quadrature(const Trajectory& trajectory, const TrajectoryIntegrand& integrand);

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

struct NewtonConfig {
  double residual_tol = 1e-10;
  int max_iterations = 40;
  double fd_step = 1e-7;
  double damping = 1.0;

  void validate() const;
};

struct NewtonResult {
  RealVector root;
  int iterations = 0;
  double residual_norm = 0.0;  // max-norm
};

using RealResidual = std::function<RealVector(const RealVector&)>;

/// Damped Newton iteration with a forward-difference Jacobian refreshed on
/// every iteration. Throws NonConvergence (carrying the best iterate) or
/// SingularSystem.
NewtonResult newton_solve(const RealResidual& residual, const RealVector& guess,
                          const NewtonConfig& cfg);

/// Bisection on a sign change of f in [a, b]; returns the midpoint of the
/// final bracket of width <= tol.
double bisect(const std::function<double(double)>& f, double a, double b, double tol);

/// Hermite cubic interpolation from values and derivatives at two nodes.
cplx hermite_cubic(double x0, double x1, cplx y0, cplx y1, cplx d0, cplx d1, double x);

}  // namespace ptdelta

#endif  // PTDELTA_NUMERICS_HPP
