#ifndef PTDELTA_BDG_HPP
#define PTDELTA_BDG_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ptdelta/stationary.hpp"

namespace ptdelta {

/// Standard BdG equations, or the variant linearised around the
/// norm-independent nonlinearity g|psi|^2 / ||psi||^2 (extra integral S).
enum class BdgVariant { Standard, Modified };
enum class Component { U, V };
enum class Stability { Oscillatory, Unstable };

std::string to_string(BdgVariant v);
std::string to_string(Stability s);

/// Initial quantity whose imaginary part is fixed to zero to remove the
/// common phase of (u, v). V0 is the usual choice; the others are used when
/// v(0) vanishes (odd fluctuations, or v = 0 in the linear limit).
enum class GaugeAnchor { V0, DV0, U0, DU0 };

struct BdgUnknowns {
  cplx u0, du0, v0, dv0;
  cplx omega;
  cplx s{0.0, 0.0};  // Modified variant only
  GaugeAnchor gauge = GaugeAnchor::V0;

  /// (u0, v0, du0, dv0, omega[, S]) as interleaved real pairs with the
  /// imaginary part of the gauge anchor left out: 9 reals, 11 for Modified.
  RealVector to_vector(BdgVariant variant) const;
  static BdgUnknowns from_vector(const RealVector& x, BdgVariant variant, GaugeAnchor gauge);

  /// Same mode multiplied by a common phase so that the anchor is real and
  /// non-negative.
  BdgUnknowns gauged(GaugeAnchor anchor) const;
  /// Anchor with the largest magnitude, preferring V0 on ties.
  GaugeAnchor best_anchor() const;

  /// (u, v, omega) -> (v*, u*, -omega*).
  BdgUnknowns conjugate_partner() const;
  /// (u(x), v(x), omega) -> (u*(-x), v*(-x), omega*); a solution again when
  /// the stationary state is PT-symmetric.
  BdgUnknowns pt_partner() const;
};

struct BdgSolution {
  StationaryState base;
  BdgVariant variant = BdgVariant::Standard;
  BdgUnknowns unknowns;
  cplx omega;
  WaveSamples u;
  WaveSamples v;
  std::optional<cplx> s_integral;
  double normalization = 1.0;  // integral of |u + v*|^2
  double residual_norm = 0.0;
  int iterations = 0;

  /// {omega, -omega*, omega*, -omega}.
  std::array<cplx, 4> quadruplet() const;
};

/// u'' and v'' away from the wells. The Modified variant adds the sources
/// -g|psi0|^2 psi0 S and -g|psi0|^2 psi0* S.
std::pair<cplx, cplx> bdg_rhs(cplx psi0, cplx u, cplx v, cplx kappa, double g, cplx omega,
                              cplx s_source = 0.0);
/// Same with psi0 taken from the state's samples.
std::pair<cplx, cplx> bdg_rhs(double x, cplx u, cplx v, const StationaryState& state, cplx omega);

/// Jump of (f, f') at the well on `side`: the GPE coefficient for U, its
/// complex conjugate for V.
JumpCondition bdg_jump(Side side, double gamma, double b, Component which);

/// Asymptotic decay rates sqrt(kappa^2 - omega) and sqrt(kappa*^2 + omega),
/// both with positive real part.
std::pair<cplx, cplx> bdg_decay_rates(cplx kappa, cplx omega);

/// Integrates psi0 (from the state's initial data) together with (u, v)
/// outward from x = 0 to the state's matching point.
struct BdgRun {
  Trajectory right;
  Trajectory left;
  double normalization = 0.0;  // integral of |u + v*|^2
  double mass = 0.0;           // integral of |u|^2 + |v|^2
  cplx s_integral;
};
BdgRun integrate_bdg(const BdgUnknowns& x, const StationaryState& state, BdgVariant variant,
                     double max_step_override = 0.0);

/// Nine reals: Re/Im of u' + q_u u and v' + q_v v at +x_match, of
/// u' - q_u u and v' - q_v v at -x_match, and the normalization minus 1.
/// All four complex initial values are used as given (no gauge).
RealVector bdg_residual(const BdgUnknowns& x, const StationaryState& state);
/// The nine above with the S sources, then Re/Im of S - S_computed.
RealVector modified_bdg_residual(const BdgUnknowns& x, const StationaryState& state);
RealVector bdg_residual(const BdgUnknowns& x, const StationaryState& state, BdgVariant variant);

/// Newton solve from `guess` (gauge re-chosen from the guess). Newton runs
/// with the mass normalization integral(|u|^2 + |v|^2) = 1, which stays well
/// conditioned when the mode approaches the Goldstone mode (psi0, -psi0*) near
/// omega = 0; the converged mode is then rescaled to integral |u + v*|^2 = 1.
/// The result is mapped into the closed first quadrant of omega by the
/// symmetries.
BdgSolution solve_bdg(const StationaryState& state, const BdgUnknowns& guess,
                      BdgVariant variant);
std::optional<BdgSolution> try_solve_bdg(const StationaryState& state, const BdgUnknowns& guess,
                                         BdgVariant variant);

/// The tracked mode at gamma = 0 and g = state.params.g, for a Ground or
/// Excited Hermitian state, continued in g from the linear limit where it is
/// the other bound state with omega = kappa_ground^2 - kappa_excited^2.
BdgSolution hermitian_mode(const StationaryState& state, BdgVariant variant);

struct StabilityPoint {
  double gamma = 0.0;
  cplx omega;
  Stability stability = Stability::Oscillatory;
  bool converged = false;
};

struct StabilityCurve {
  BdgVariant variant = BdgVariant::Standard;
  Branch branch = Branch::Ground;
  std::vector<StabilityPoint> points;
  std::vector<BdgSolution> solutions;  // converged points only, in order
};

inline constexpr double kStabilityThreshold = 1e-8;
Stability classify(cplx omega);

/// BdG along a gamma branch of PT-symmetric states, seeded at the branch
/// start from the Hermitian mode.
StabilityCurve track_stability(const BranchCurve& branch, BdgVariant variant);

/// The tracked mode of a Ground or Excited state at params.gamma, followed
/// from the Hermitian mode along the branch.
BdgSolution tracked_mode(const TrapParams& params, Branch branch, BdgVariant variant);

/// Gamma where the tracked ground-state mode turns unstable, bracket <= 1e-6.
double locate_stability_change(const TrapParams& params, BdgVariant variant);

struct DeltaGamma {
  double gamma_kappa = 0.0;
  double gamma_omega = 0.0;
  double delta = 0.0;  // gamma_kappa - gamma_omega
};
DeltaGamma delta_gamma(const TrapParams& params, BdgVariant variant);

/// N g: a state of norm N under g acts like a normalised one under N g.
double effective_nonlinearity(double norm, double g);

}  // namespace ptdelta

#endif  // PTDELTA_BDG_HPP
