"""Time-domain solution of the Volterra integro-differential system.

dβ_j/dt = -γ' Σ_l ∫₀^t β_l(τ) e^{iΩ(t-τ)} K(t-τ, r_jl) dτ

History integrals use the trapezoidal product rule; the update is the
implicit trapezoidal (Crank-Nicolson) step. With L(u) = γ' e^{iΩu} K(u) and
C_n the history integral at t_n,

    (I + h²/4 · L₀) β_{n+1} = β_n - h/2 · C_n - h/2 · h[½L_{n+1}β₀ + Σ_{m=1}^{n} L_{n+1-m} β_m]

The step matrix is the same at every step and is factored once.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from config.settings import settings
from core.kernels import memory_kernel_grid
from core.model import DistanceMatrix, InitialState, ModelParams, distances
from core.quadrature import QuadratureError, QuadratureSpec
from utils.progress import ProgressTracker

logger = logging.getLogger(__name__)

# Step matrices with a larger condition number are treated as singular
SINGULAR_CONDITION = 1e12


class SolverError(Exception):
    """Direct solver failure."""
    pass


class Provenance(Enum):
    """Which evaluator produced a time series."""
    DIRECT = "direct"
    CONTOUR = "contour"
    ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = start + n·step, n = 0..steps."""
    step: float
    steps: int
    start: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"time step must be positive, got {self.step}")
        if self.steps < 1:
            raise ValueError(f"grid needs at least one step, got {self.steps}")

    @classmethod
    def covering(cls, horizon: float, step: float, start: float = 0.0) -> "TimeGrid":
        """Smallest grid with the given step reaching ``horizon``."""
        steps = max(1, int(math.ceil((horizon - start) / step - 1e-9)))
        return cls(step=step, steps=steps, start=start)

    @classmethod
    def default(cls, params: ModelParams, horizon: float, start: float = 0.0) -> "TimeGrid":
        """h = min(s/Ω, s·R/c) with s = SOLVER_STEP_SCALE (0.05)."""
        scale = settings.solver.step_scale
        step = min(scale / params.omega, scale * params.R / params.c)
        return cls.covering(horizon, step, start)

    @property
    def nodes(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.steps + 1)

    @property
    def end(self) -> float:
        return self.start + self.step * self.steps

    def refined(self) -> "TimeGrid":
        """Same interval with half the step."""
        return TimeGrid(step=0.5 * self.step, steps=2 * self.steps, start=self.start)


@dataclass
class TimeSeries:
    """Amplitudes β(t_n) on a grid, one row per node.

    ``components`` optionally holds named additive parts of ``values``
    (pole terms, tail) with the same shape.
    """
    grid: TimeGrid
    values: np.ndarray
    provenance: Provenance
    components: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"{self.values.shape[0]} rows for a grid of {self.grid.steps + 1} nodes"
            )

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def n_atoms(self) -> int:
        return int(self.values.shape[1])

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)


@dataclass
class KernelTable:
    """K(m·h, r) on the distinct distances, m = 0..M."""
    grid: TimeGrid
    distances: DistanceMatrix
    per_distance: np.ndarray

    def matrices(self) -> np.ndarray:
        """(M+1, N, N) array of K_jl(m·h)."""
        return self.distances.expand(self.per_distance)

    def entry(self, j: int, l: int, m: int) -> complex:
        """K_jl(m·h), 0-based indices."""
        return complex(self.per_distance[m, self.distances.inverse[j, l]])


def _distance_key(r: float) -> float:
    """Distances equal to 1e-14 relative share one kernel column."""
    return float(f"{r:.13e}")


def kernel_table(
    params: ModelParams,
    grid: TimeGrid,
    spec: Optional[QuadratureSpec] = None,
    threads: Optional[int] = None,
    chunk: Optional[int] = None,
    progress: Optional[ProgressTracker] = None,
) -> KernelTable:
    """
    Precompute K(m·h, r) for every distinct distance and lag.

    Each distance is integrated in chunks of lags that share one adaptive
    panel set; chunks run on a thread pool and are gathered in submission
    order.

    Raises:
        SolverError: Quadrature failure, naming the (j, l, m) entry
    """
    if grid.start != 0.0:
        raise SolverError("kernel table needs a grid starting at t = 0")
    d = distances(params)
    threads = threads or settings.threads
    chunk = chunk or settings.solver.kernel_chunk
    lags = grid.step * np.arange(grid.steps + 1)

    keys: dict[float, int] = {}
    column_of_key = []
    for r in d.unique:
        key = _distance_key(float(r))
        keys.setdefault(key, len(keys))
        column_of_key.append(keys[key])
    representatives = list(keys)

    jobs = [
        (key_index, start)
        for key_index in range(len(representatives))
        for start in range(0, lags.size, chunk)
    ]

    def run(job):
        key_index, start = job
        r = representatives[key_index]
        block = lags[start:start + chunk]
        try:
            result = memory_kernel_grid(block, r, params, spec)
        except QuadratureError as e:
            worst = start + int(np.argmax(np.atleast_1d(e.error))) if e.error is not None else start
            unique_index = column_of_key.index(key_index)
            j, l = d.pair_for(unique_index)
            raise SolverError(f"kernel quadrature failed at (j={j}, l={l}, m={worst}): {e}") from e
        if progress:
            progress.advance(block.size)
        return result.value

    with ThreadPoolExecutor(max_workers=threads) as executor:
        blocks = list(executor.map(run, jobs))

    per_key = np.empty((lags.size, len(representatives)), dtype=complex)
    for (key_index, start), values in zip(jobs, blocks):
        per_key[start:start + values.size, key_index] = values

    logger.info(
        f"Kernel table: {lags.size} lags x {len(representatives)} distinct distances "
        f"({d.unique.size} before merging)"
    )
    return KernelTable(grid=grid, distances=d, per_distance=per_key[:, column_of_key])


def solve_volterra(
    params: ModelParams,
    initial: InitialState,
    grid: TimeGrid,
    table: Optional[KernelTable] = None,
    spec: Optional[QuadratureSpec] = None,
    threads: Optional[int] = None,
    progress: Optional[ProgressTracker] = None,
) -> TimeSeries:
    """
    Second-order product-integration solution β(t_n), n = 0..M.

    Args:
        params: Model
        initial: β(0)
        grid: Uniform grid starting at 0
        table: Precomputed kernel table (computed on demand otherwise)
        spec: Quadrature policy for the kernel table
        threads: Worker cap for the kernel table
        progress: Optional tracker advanced once per step

    Returns:
        TimeSeries with DIRECT provenance

    Raises:
        SolverError: Singular step matrix (suggests h/2), kernel failure
    """
    if grid.start != 0.0:
        raise SolverError("the Volterra system starts at t = 0")
    n_atoms = params.n_atoms
    beta0 = np.asarray(initial.beta0, dtype=complex)
    if beta0.shape != (n_atoms,):
        raise SolverError(f"initial state has {beta0.shape[0]} entries for {n_atoms} atoms")

    h, steps = grid.step, grid.steps
    beta = np.empty((steps + 1, n_atoms), dtype=complex)
    beta[0] = beta0

    if params.g == 0.0:
        beta[:] = beta0
        if progress:
            progress.advance(steps)
        return TimeSeries(grid=grid, values=beta, provenance=Provenance.DIRECT)

    if table is None:
        table = kernel_table(params, grid, spec=spec, threads=threads)
    lags = h * np.arange(steps + 1)
    memory = params.gamma_prime * np.exp(1j * params.omega * lags)[:, None, None] * table.matrices()

    identity = np.eye(n_atoms, dtype=complex)
    step_matrix = identity + 0.25 * h * h * memory[0]
    condition = np.linalg.cond(step_matrix)
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise SolverError(
            f"step matrix singular (condition {condition:.3e}) at h={h:.6g}; retry with h={h / 2:.6g}"
        )
    factors = lu_factor(step_matrix)

    history = np.zeros(n_atoms, dtype=complex)
    for n in range(steps):
        known = 0.5 * memory[n + 1] @ beta0
        if n > 0:
            known = known + np.einsum("mjl,ml->j", memory[n:0:-1], beta[1:n + 1])
        known *= h
        rhs = beta[n] - 0.5 * h * history - 0.5 * h * known
        beta[n + 1] = lu_solve(factors, rhs)
        history = known + 0.5 * h * memory[0] @ beta[n + 1]
        if progress:
            progress.advance()

    growth = float(np.max(np.linalg.norm(beta, axis=1)) / max(np.linalg.norm(beta0), 1e-300))
    if growth > 1.0 + 10.0 * h * h * steps:
        logger.warning(f"Amplitude norm grew by a factor {growth:.6g}; consider a smaller step")
    logger.info(f"Direct solve: {steps} steps of h={h:.6g} for {n_atoms} atoms")
    return TimeSeries(grid=grid, values=beta, provenance=Provenance.DIRECT)
