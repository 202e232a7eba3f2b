#ifndef PTDELTA_STATIONARY_HPP
#define PTDELTA_STATIONARY_HPP

#include <optional>
#include <string>
#include <vector>

#include "ptdelta/numerics.hpp"

namespace ptdelta {

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NonlinearityMode { NormDependent, NormIndependent };
enum class Branch { Ground, Excited, BrokenPlus, BrokenMinus };
enum class Side { Left, Right };
enum class Parameter { Gamma, G };

std::string to_string(Branch b);
std::string to_string(NonlinearityMode m);

/// Physical configuration of the double-delta trap plus solver settings.
struct TrapParams {
  double gamma = 0.0;  // gain/loss strength, >= 0
  double g = 0.0;      // contact nonlinearity, attractive for g < 0
  double b = 1.1;      // wells sit at +-b
  NonlinearityMode mode = NonlinearityMode::NormDependent;
  double x_max = 0.0;  // outer matching point; <= 0 selects it from kappa
  IntegratorConfig integrator;
  NewtonConfig newton;

  void validate() const;
  TrapParams with(Parameter p, double value) const;
  double get(Parameter p) const { return p == Parameter::Gamma ? gamma : g; }
};

/// Number of decay lengths 1/Re(kappa) between the outer well and the
/// automatic matching point. Outward integration amplifies the growing tail
/// by about e^{kDecayLengths}; in the attractive case a larger factor drives
/// Newton iterates into nonlinear blow-up.
inline constexpr double kDecayLengths = 5.0;

/// Matching point used for a solve started from `kappa`: params.x_max when
/// set, otherwise b + kDecayLengths / Re(kappa) rounded up to a multiple of
/// 0.5 and clamped to [b + 5.5, b + 60].
double matching_point(const TrapParams& params, cplx kappa);

/// Local decay rate q of the nonlinear tail psi'' = (kappa^2 + g|psi|^2) psi,
/// q = sqrt(kappa^2 + g |psi|^2 kappa / (kappa + Re kappa)), Re q > 0.
/// For real kappa psi' = -q psi holds exactly on the decaying tail (first
/// integral of the real equation); for complex kappa it is exact to first
/// order in |psi|^2. At g = 0 it is kappa.
cplx tail_decay_rate(cplx kappa, double g, double abs2);

/// Integral of |psi|^2 over the tail beyond a matching point where
/// |psi|^2 = abs2: abs2 / Re(q + kappa).
double tail_norm(cplx kappa, double g, double abs2);

/// Which initial quantity carries the fixed global phase: either psi(0) is
/// real (the usual choice) or psi'(0) is purely imaginary. The second is
/// needed for states with a node at the origin (odd states at gamma = 0).
/// Both choices coincide with the PT-symmetric phase convention.
enum class PhaseAnchor { Value, Slope };

struct ShootingUnknowns {
  cplx psi0{1.0, 0.0};
  cplx dpsi0{0.0, 0.0};
  cplx kappa{0.5, 0.0};
  PhaseAnchor anchor = PhaseAnchor::Value;

  /// Value anchor: (psi(0), Re psi'(0), Im psi'(0), Re kappa, Im kappa).
  /// Slope anchor: (Im psi'(0), Re psi(0), Im psi(0), Re kappa, Im kappa).
  RealVector to_vector() const;
  static ShootingUnknowns from_vector(const RealVector& v, PhaseAnchor anchor);
  /// Same wavefunction up to a global phase, rotated onto `anchor`.
  ShootingUnknowns gauged(PhaseAnchor anchor) const;
};

/// Sampled wavefunction with derivatives; evaluation by Hermite cubics.
struct WaveSamples {
  std::vector<double> x;
  std::vector<cplx> psi;
  std::vector<cplx> dpsi;

  cplx eval(double at) const;
};

struct StationaryState {
  TrapParams params;
  double x_match = 0.0;  // outer matching point of the solve
  ShootingUnknowns unknowns;
  cplx kappa;
  cplx mu;  // -kappa^2
  WaveSamples psi;
  Branch branch = Branch::Ground;
  bool pt_symmetric = true;
  double pt_deviation = 0.0;  // max_x |psi(-x) - conj(psi(x))|
  double norm = 1.0;
  double residual_norm = 0.0;
  int iterations = 0;
};

/// psi'' away from the wells: (kappa^2 + g_eff |psi|^2) psi, with
/// g_eff = g / norm_estimate in the norm-independent mode.
cplx gpe_rhs(double x, cplx psi, cplx dpsi, cplx kappa, const TrapParams& params,
             double norm_estimate = 1.0);

/// Derivative jump psi'(x+) - psi'(x-) = c psi at the well on `side`.
cplx delta_coefficient(Side side, double gamma);
/// 2x2 jump on (psi, psi').
JumpCondition delta_jump(Side side, double gamma, double b);

/// Five real residuals: Re/Im of psi' + q psi at the right matching point,
/// Re/Im of psi' - q psi at the left one (q from tail_decay_rate), and
/// norm - 1. The two-argument form picks the matching point from u.kappa.
RealVector shooting_residual(const ShootingUnknowns& u, const TrapParams& params);

/// Integrates the GPE outward from x = 0 for given initial data. The norm
/// includes the tails beyond the matching points.
struct ShootingRun {
  Trajectory right;
  Trajectory left;
  double norm = 0.0;
};
ShootingRun integrate_stationary(const ShootingUnknowns& u, const TrapParams& params,
                                 double x_match, double max_step_override = 0.0);
RealVector shooting_residual(const ShootingUnknowns& u, const TrapParams& params, double x_match);

StationaryState solve_stationary(const TrapParams& params, const ShootingUnknowns& guess,
                                 std::optional<Branch> label = std::nullopt);
std::optional<StationaryState> try_solve_stationary(const TrapParams& params,
                                                    const ShootingUnknowns& guess,
                                                    std::optional<Branch> label = std::nullopt);

/// Forward-difference Jacobian of the shooting residual at a state's
/// unknowns and matching point.
Eigen::MatrixXd shooting_jacobian(const StationaryState& s);

/// Mirror image x -> -x of a state, which maps the problem at gamma onto the
/// problem at -gamma.
StationaryState mirror(const StationaryState& s);

/// Analytic g = 0, gamma = 0 states (even and, when b > 1, odd).
struct Seed {
  Branch branch;
  ShootingUnknowns unknowns;
};
std::vector<Seed> linear_hermitian_seeds(double b);
std::vector<Seed> seed_states(const TrapParams& params);

struct BranchCurve {
  Parameter parameter = Parameter::Gamma;
  std::vector<double> values;
  std::vector<StationaryState> states;
  bool terminated = false;
  double termination_value = 0.0;  // last converged parameter value when terminated
};

BranchCurve continue_branch(const TrapParams& params, const StationaryState& start,
                            Parameter parameter, double to, double step);

/// Ground and Excited branches continued in gamma from the Hermitian states
/// and, for g < 0, the broken pair from the pitchfork upward; each curve runs
/// to gamma_max or to its termination.
std::vector<BranchCurve> gamma_branches(const TrapParams& params, double gamma_max);

/// States for every seed that converges at `params`, labelled, with
/// duplicates of an already found branch dropped.
std::vector<StationaryState> solve_all_states(const TrapParams& params);

struct PitchforkResult {
  double gamma_kappa = 0.0;     // square-root extrapolation
  double gamma_bisection = 0.0; // existence bisection
  std::vector<std::pair<double, double>> fit_points;  // (gamma, |Im kappa|^2)
};

PitchforkResult locate_pitchfork_detailed(const TrapParams& params);
double locate_pitchfork(const TrapParams& params);

/// Gamma of the exceptional point where the two PT-symmetric states merge.
double locate_tangent(const TrapParams& params);

}  // namespace ptdelta

#endif  // PTDELTA_STATIONARY_HPP
