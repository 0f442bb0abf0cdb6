"""Calabi flow of torus-invariant Kähler metrics in symplectic coordinates.

Potentials live on a periodic grid as ``u(x) = c|x|^2/2 + psi(x)``; the
flow ``du/dt = sum_ij (u^{ij})_{,ij}`` is integrated with explicit RK4 and
fourth-order finite differences.
"""

from .errors import (
    CalabiFlowError,
    ConvexityError,
    NothingToBlowUpError,
    NumericalError,
    StiffnessError,
)
from .flow import (
    DiagnosticsRecord,
    FlowConfig,
    FlowState,
    FlowTrace,
    blowup_extract,
    dissipation_checks,
    fit_decay_rate,
    fit_mode_decay_rate,
    rhs,
    run,
    step,
)
from .geometry import (
    d2u_dt2_star,
    energies,
    hessian_comparison_margin,
    riemann_norm,
    riemannian_distance,
    scalar_curvature,
    star_rotation_invariance,
    trace_pairing,
)
from .legendre import KahlerPotential, phi_third_derivatives, to_kahler, to_symplectic
from .potential import SymplecticPotential, m_condition_estimate, rescale
from .torus_field import GridSpec, PeriodicField, derivative, integrate, interpolate

__all__ = [
    "CalabiFlowError",
    "ConvexityError",
    "NothingToBlowUpError",
    "NumericalError",
    "StiffnessError",
    "DiagnosticsRecord",
    "FlowConfig",
    "FlowState",
    "FlowTrace",
    "blowup_extract",
    "dissipation_checks",
    "fit_decay_rate",
    "fit_mode_decay_rate",
    "rhs",
    "run",
    "step",
    "d2u_dt2_star",
    "energies",
    "hessian_comparison_margin",
    "riemann_norm",
    "riemannian_distance",
    "scalar_curvature",
    "star_rotation_invariance",
    "trace_pairing",
    "KahlerPotential",
    "phi_third_derivatives",
    "to_kahler",
    "to_symplectic",
    "SymplecticPotential",
    "m_condition_estimate",
    "rescale",
    "GridSpec",
    "PeriodicField",
    "derivative",
    "integrate",
    "interpolate",
]
