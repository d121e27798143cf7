"""Free-period action functional on discretized loops and critical-value estimators."""

from .loops import (
    ActionConvention,
    ConventionError,
    LoopPath,
    circle_loop,
    concatenate,
    free_reduce,
    iterate_loop,
    point_loop,
    resample_loop,
    reverse_loop,
)
from .functional import (
    ActionReport,
    LoopFunctional,
    RefinementError,
    action_gradient,
    action_hessian,
    action_Sk,
    closed_polygon_flux,
    disc_flux_quadrature,
    flux_of_homotopy,
    ode_residual,
)
from .critical import (
    EmbeddingError,
    ManeEstimate,
    TauPlusStar,
    disc_taimanov,
    elementary_estimate_gap,
    estimate_mane,
    estimate_tau_plus,
    taimanov_Tk,
    tau_plus_star,
)

__all__ = [
    "EmbeddingError",
    "ManeEstimate",
    "TauPlusStar",
    "disc_taimanov",
    "elementary_estimate_gap",
    "estimate_mane",
    "estimate_tau_plus",
    "taimanov_Tk",
    "tau_plus_star",
    "ActionConvention",
    "ActionReport",
    "ConventionError",
    "LoopFunctional",
    "LoopPath",
    "RefinementError",
    "action_Sk",
    "action_gradient",
    "action_hessian",
    "circle_loop",
    "closed_polygon_flux",
    "concatenate",
    "disc_flux_quadrature",
    "flux_of_homotopy",
    "free_reduce",
    "iterate_loop",
    "ode_residual",
    "point_loop",
    "resample_loop",
    "reverse_loop",
]
