from ._core import (
    BdgSolution,
    BdgVariant,
    Branch,
    DeltaGamma,
    GrowthFit,
    LinearExceptionalPoint,
    NonConvergence,
    NonlinearityMode,
    NotFound,
    Stability,
    StationaryState,
    TrapParams,
    UsageError,
    classify,
    delta_gamma,
    fit_growth_rate,
    grid_kappa,
    linear_determinant,
    linear_exceptional_point,
    linear_spectrum,
    locate_pitchfork,
    locate_stability_change,
    locate_tangent,
    main,
    sha256_hex,
    solve_all_states,
    tracked_mode,
)

__all__ = [name for name in dir() if not name.startswith("_")]
