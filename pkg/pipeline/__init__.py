"""Pipeline steps behind the command-line subcommands."""

from .kernel_step import KernelStep
from .solve_step import SolveStep
from .poles_step import PolesStep
from .compare_step import CompareStep
from .continuum_step import ContinuumStep

__all__ = [
    "KernelStep",
    "SolveStep",
    "PolesStep",
    "CompareStep",
    "ContinuumStep",
]
