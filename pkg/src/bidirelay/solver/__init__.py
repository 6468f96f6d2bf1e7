"""Dual decomposition solver with ellipsoid multiplier updates."""

from .core import SCHEME_ROLES, SolverOptions, active_coordinates, dual_function, solve
from .ellipsoid import EllipsoidState, ellipsoid_step, volume_ratio
from .rates import evaluate_rates, two_way_split

__all__ = ["SCHEME_ROLES", "EllipsoidState", "SolverOptions", "active_coordinates",
           "dual_function", "ellipsoid_step", "evaluate_rates", "solve", "two_way_split",
           "volume_ratio"]
