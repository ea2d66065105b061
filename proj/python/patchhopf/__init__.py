"""Delayed n-patch population model analysis.

Thin re-export of the compiled core: model construction, spectral bound and
critical dispersal, equilibria, Hopf thresholds with certificates, the
topology index of the dispersal matrix, and direct simulation.
"""

from ._patchhopf import (  # noqa: F401
    DimensionError,
    HopfCurve,
    HopfCurveRow,
    HopfPoint,
    Model,
    PerronData,
    RegimeError,
    SolverError,
    TopologyIndex,
    ValidationError,
    ValidationReport,
    classify,
    detect_asymptotics,
    find_dstar,
    hopf_curve,
    integrate,
    rightmost_roots,
    solve_equilibrium,
    spectral_bound,
    tau_expansion,
    topology_index,
    validate_dispersion,
)

__all__ = [
    "DimensionError",
    "HopfCurve",
    "HopfCurveRow",
    "HopfPoint",
    "Model",
    "PerronData",
    "RegimeError",
    "SolverError",
    "TopologyIndex",
    "ValidationError",
    "ValidationReport",
    "classify",
    "detect_asymptotics",
    "find_dstar",
    "hopf_curve",
    "integrate",
    "rightmost_roots",
    "solve_equilibrium",
    "spectral_bound",
    "tau_expansion",
    "topology_index",
    "validate_dispersion",
]
