"""Time-domain, spectral and continuum solvers."""

from .direct_solver import Provenance, SolverError, TimeGrid, TimeSeries, kernel_table, solve_volterra
from .spectral import (
    BranchMatchingError,
    Pole,
    PoleKind,
    SpectralConvergenceError,
    find_oscillatory_poles,
    find_resonance_poles,
)
from .evolution import EvolutionError, SpectralData, TailVariant, compare, evolve_asymptotic, evolve_contour
from .continuum import SamplingError

__all__ = [
    "Provenance",
    "SolverError",
    "TimeGrid",
    "TimeSeries",
    "kernel_table",
    "solve_volterra",
    "BranchMatchingError",
    "Pole",
    "PoleKind",
    "SpectralConvergenceError",
    "find_oscillatory_poles",
    "find_resonance_poles",
    "EvolutionError",
    "SpectralData",
    "TailVariant",
    "compare",
    "evolve_asymptotic",
    "evolve_contour",
    "SamplingError",
]
