"""Exact propagators for the anisotropic time-dependent heat equation
``u_t = sum_ij a_ij(t) d_i d_j u`` on ``R^n`` (periodised on a grid), with
estimate verifiers and mollified-coefficient nets for step diffusivities."""

__version__ = "0.1.0"

from .diffusivity import (
    ConstantModel, DiffusivityModel, MollifiedModel, Mollifier, PiecewiseConstantModel,
    SmoothModel, SpdMatrix, TimeFunction, accumulate, decay_budget, eval_a, mollify,
)
from .errors import AnisoHeatError
from .kernel import KernelParams, kernel_eval, kernel_p_norm, symbol_eval
from .propagator import Field, SpatialGrid, Trajectory, apply_propagator, solve_duhamel, solve_homogeneous

__all__ = [
    "AnisoHeatError", "ConstantModel", "DiffusivityModel", "Field", "KernelParams",
    "MollifiedModel", "Mollifier", "PiecewiseConstantModel", "SmoothModel", "SpatialGrid",
    "SpdMatrix", "TimeFunction", "Trajectory", "accumulate", "apply_propagator",
    "decay_budget", "eval_a", "kernel_eval", "kernel_p_norm", "mollify", "solve_duhamel",
    "solve_homogeneous", "symbol_eval",
]
