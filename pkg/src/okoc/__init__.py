"""Occupation-kernel linear programs for finite-horizon optimal control."""

from .assembly import Box, CenterSet, FiniteProgram, ProblemSpec, assemble, generate_centers
from .kernels import Family, KernelConfig
from .occupation import Trajectory
from .solver import SolveOptions, SolveResult, Status, solve

__all__ = [
    "Box",
    "CenterSet",
    "Family",
    "FiniteProgram",
    "KernelConfig",
    "ProblemSpec",
    "SolveOptions",
    "SolveResult",
    "Status",
    "Trajectory",
    "assemble",
    "generate_centers",
    "solve",
]

__version__ = "0.1.0"
