"""β(t) from the spectral data.

The semi-exact evaluator integrates the jump of the resolvent across the
positive real axis,

    β(t) = e^{iΩt} γ ∫₀^∞ e^{-iyt} H⁺(y) N(y) H⁻(y) β(0) dy + Σ_j R_j β(0) e^{i(p_j+Ω)t},

where H± = ((y - Ω)I + γA±(y))⁻¹ and N(y) = (y/c)² e^{-(yR/c)²} f_{y/c}
comes from A⁺ - A⁻ = -2πi N. The asymptotic evaluator replaces the integral
by the resonance-pole terms S_j e^{i(Ω - z_j)t} β(0) and the algebraic tail
e^{iΩt} T β(0)/t³.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from config.settings import settings
from core.kernels import BranchEvaluator, a_zero, branch_jump, f_matrix
from core.model import InitialState, ModelParams, distances
from core.quadrature import QuadratureError, QuadratureSpec, adaptive_panels, initial_edges
from solvers.direct_solver import Provenance, TimeGrid, TimeSeries
from solvers.spectral import (
    GuardReport,
    Pole,
    PoleBoundReport,
    find_oscillatory_poles,
    find_resonance_poles,
    pole_bound_report,
    small_coupling_guard,
    zeroth_order_poles,
)

logger = logging.getLogger(__name__)

TIME_CHUNK = 256
# Graded breakpoints around a resonance stop at this fraction of Ω
GRADING_LIMIT = 0.5


class EvolutionError(Exception):
    """Evaluation of β(t) from spectral data failed."""
    pass


class TailVariant(Enum):
    LEAD = "lead"
    IMPROVED = "improved"
    NONE = "none"


@dataclass
class SpectralData:
    """Pole sets, A₀ and the tail matrices of one instance."""
    oscillatory: list[Pole]
    resonance: list[Pole]
    a0: np.ndarray
    tail_lead: np.ndarray
    tail_improved: np.ndarray
    guard: Optional[GuardReport] = None
    bound: Optional[PoleBoundReport] = None

    @property
    def tail_headline(self) -> np.ndarray:
        """Half of the leading tail, the normalisation with 2π² in the denominator."""
        return 0.5 * self.tail_lead

    def tail(self, variant: TailVariant) -> Optional[np.ndarray]:
        if variant is TailVariant.LEAD:
            return self.tail_lead
        if variant is TailVariant.IMPROVED:
            return self.tail_improved
        return None

    @property
    def defective(self) -> bool:
        return any(pole.defective for pole in self.resonance)

    def to_dict(self) -> dict:
        def matrix(m):
            return [[float(v.real), float(v.imag)] for v in np.asarray(m).ravel()]

        return {
            "oscillatory": [pole.to_dict() for pole in self.oscillatory],
            "resonance": [pole.to_dict() for pole in self.resonance],
            "tail_lead": matrix(self.tail_lead),
            "tail_improved": matrix(self.tail_improved),
            "tail_headline": matrix(self.tail_headline),
            "guard": self.guard.to_dict() if self.guard else None,
            "bound": self.bound.to_dict() if self.bound else None,
        }


def tail_matrices(params: ModelParams, a0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    T_lead = -16π²γ/(2πic²Ω²)·J and T_improved = -16π²γ/(2πic²)·P J P.

    P = (ΩI - γA₀)⁻¹ and J is the all-ones matrix (f at k = 0 is 4π for
    every pair).
    """
    n = params.n_atoms
    ones = np.ones((n, n))
    scale = -16.0 * math.pi ** 2 * params.gamma / (2j * math.pi * params.c ** 2)
    propagator = np.linalg.inv(params.omega * np.eye(n) - params.gamma * a0)
    return scale / params.omega ** 2 * ones, scale * propagator @ ones @ propagator


def compute_spectral_data(
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
    threads: Optional[int] = None,
) -> SpectralData:
    """Oscillatory and resonance poles, A₀, tail matrices and the guard reports."""
    d = distances(params)
    a0 = a_zero(d, params, spec)
    lead, improved = tail_matrices(params, a0)
    guard = small_coupling_guard(params, spec, d) if params.g > 0 else None
    return SpectralData(
        oscillatory=find_oscillatory_poles(params, spec),
        resonance=find_resonance_poles(params, spec, guard=guard, threads=threads),
        a0=a0,
        tail_lead=lead,
        tail_improved=improved,
        guard=guard,
        bound=pole_bound_report(params),
    )


def _beta0(params: ModelParams, initial: InitialState) -> np.ndarray:
    beta0 = np.asarray(initial.beta0, dtype=complex)
    if beta0.shape != (params.n_atoms,):
        raise EvolutionError(f"initial state has {beta0.shape[0]} entries for {params.n_atoms} atoms")
    return beta0


def _oscillatory_terms(poles: list[Pole], beta0: np.ndarray, times: np.ndarray, omega: float) -> dict[str, np.ndarray]:
    terms = {}
    for k, pole in enumerate(poles, start=1):
        phase = np.exp(1j * (pole.location.real + omega) * times)
        terms[f"oscillatory_{k}"] = phase[:, None] * (pole.residue @ beta0)[None, :]
    return terms


def _resonance_breakpoints(locations: list[complex], omega: float) -> np.ndarray:
    """Re z ± |Im z|·2^k, graded up to GRADING_LIMIT·Ω."""
    points = []
    for z in locations:
        width = max(abs(z.imag), 1e-15 * omega)
        points.append(z.real)
        while width <= GRADING_LIMIT * omega:
            points.extend([z.real - width, z.real + width])
            width *= 2.0
    return np.array(points)


def _cut_integrand(params: ModelParams, evaluator: BranchEvaluator, beta0: np.ndarray, stabilized: bool, t_max: float):
    d = distances(params)
    n = params.n_atoms
    identity = np.eye(n)
    gamma = params.gamma

    def integrand(y: np.ndarray) -> np.ndarray:
        m = (y - params.omega)[:, None, None] * identity + gamma * evaluator.minus(y)
        rhs = np.broadcast_to(beta0, (y.size, n))[..., None]
        if stabilized:
            jump = np.real(branch_jump(y, d, params) / (-2j * math.pi))
            inner = np.linalg.solve(m, rhs)
            x = gamma * np.conj(np.linalg.solve(m, np.conj(jump @ inner)))[..., 0]
        else:
            plus = np.conj(np.linalg.solve(m, np.conj(rhs)))
            minus = np.linalg.solve(m, rhs)
            x = ((plus - minus) / (2j * math.pi))[..., 0]
        return np.stack([x, x * np.exp(-1j * y * t_max)[:, None]], axis=1)

    return integrand


def evolve_contour(
    params: ModelParams,
    initial: InitialState,
    grid: TimeGrid,
    spectral: Optional[SpectralData] = None,
    spec: Optional[QuadratureSpec] = None,
    stabilized: bool = True,
    threads: Optional[int] = None,
) -> TimeSeries:
    """
    β(t) from the branch-cut integral plus the oscillatory-pole terms.

    The y-integral is computed once on an adaptive rule that resolves the
    integrand and its modulation at the largest time; all times are then
    evaluated by a matrix product over the rule. Panels are graded around
    every resonance Re z_j down to width |Im z_j|. Valid for all t ≥ 0.

    Args:
        params: Model
        initial: β(0)
        grid: Output times
        spectral: Precomputed poles (the oscillatory ones are required;
            resonance locations only place breakpoints)
        spec: Quadrature policy
        stabilized: Use γH⁺NH⁻ instead of the difference H⁺ - H⁻
        threads: Worker cap for the time chunks

    Returns:
        TimeSeries with CONTOUR provenance and components
        ``branch_cut``, ``oscillatory_k``

    Raises:
        EvolutionError: Panel budget exhausted near a resonance
    """
    beta0 = _beta0(params, initial)
    times = grid.nodes
    if np.any(times < 0):
        raise EvolutionError("contour evaluation needs t ≥ 0")
    if params.g == 0.0:
        values = np.broadcast_to(beta0, (times.size, params.n_atoms)).copy()
        return TimeSeries(grid=grid, values=values, provenance=Provenance.CONTOUR)

    spec = spec or QuadratureSpec()
    if spectral is None:
        oscillatory = find_oscillatory_poles(params, spec)
        locations = [pole.location for pole in zeroth_order_poles(params, spec)]
    else:
        oscillatory = spectral.oscillatory
        locations = [pole.location for pole in spectral.resonance] or [
            pole.location for pole in zeroth_order_poles(params, spec)
        ]

    d = distances(params)
    y_max = params.c * spec.truncation_radius(params.R ** 2)
    evaluator = BranchEvaluator(d, params, spec, w_max=y_max / params.c)
    t_max = float(times.max())
    frequency = t_max + 2.0 * d.max_distance / params.c
    try:
        edges = initial_edges(
            y_max, spec, frequency=frequency,
            breakpoints=_resonance_breakpoints(locations, params.omega),
        )
        result = adaptive_panels(
            _cut_integrand(params, evaluator, beta0, stabilized, t_max),
            edges, spec, keep_rule=True, label="branch-cut integral",
        )
    except QuadratureError as e:
        raise EvolutionError(
            f"{e}; the resonances may be too narrow for the panel budget: raise QUAD_MAX_PANELS "
            "or use a coupling inside the small-coupling guard"
        ) from e

    rule = result.rule
    samples = rule.samples[:, 0, :]
    logger.info(f"Branch-cut rule: {rule.size} nodes on [0, {y_max:.4g}] for {times.size} times")

    def chunk(start: int) -> np.ndarray:
        t = times[start:start + TIME_CHUNK]
        phases = np.exp(-1j * np.outer(t, rule.nodes)) * rule.weights[None, :]
        return np.exp(1j * params.omega * t)[:, None] * (phases @ samples)

    with ThreadPoolExecutor(max_workers=threads or settings.threads) as executor:
        blocks = list(executor.map(chunk, range(0, times.size, TIME_CHUNK)))
    integral = np.concatenate(blocks, axis=0)

    components = {"branch_cut": integral}
    components.update(_oscillatory_terms(oscillatory, beta0, times, params.omega))
    values = sum(components.values())
    return TimeSeries(grid=grid, values=values, provenance=Provenance.CONTOUR, components=components)


def evolve_asymptotic(
    params: ModelParams,
    initial: InitialState,
    grid: TimeGrid,
    tail: TailVariant = TailVariant.IMPROVED,
    spectral: Optional[SpectralData] = None,
    spec: Optional[QuadratureSpec] = None,
) -> TimeSeries:
    """
    Σ R_j e^{i(p_j+Ω)t}β(0) + Σ S_j e^{i(Ω-z_j)t}β(0) + e^{iΩt} T β(0)/t³.

    Components are named ``oscillatory_k``, ``pole_k`` and ``tail`` and sum
    to the returned values.

    Raises:
        EvolutionError: A tail at t = 0, or defective resonance poles
    """
    beta0 = _beta0(params, initial)
    times = grid.nodes
    if tail is not TailVariant.NONE and np.any(times <= 0):
        raise EvolutionError("tail undefined at t=0")
    spectral = spectral or compute_spectral_data(params, spec)
    if spectral.defective:
        raise EvolutionError("defective resonance poles have no residue; the asymptotic form is unavailable")

    components = _oscillatory_terms(spectral.oscillatory, beta0, times, params.omega)
    for k, pole in enumerate(spectral.resonance, start=1):
        phase = np.exp(1j * (params.omega - pole.location) * times)
        components[f"pole_{k}"] = phase[:, None] * (pole.residue @ beta0)[None, :]
    matrix = spectral.tail(tail)
    if matrix is not None:
        envelope = np.exp(1j * params.omega * times) / times ** 3
        components["tail"] = envelope[:, None] * (matrix @ beta0)[None, :]

    values = sum(components.values()) if components else np.zeros((times.size, params.n_atoms), dtype=complex)
    return TimeSeries(grid=grid, values=values, provenance=Provenance.ASYMPTOTIC, components=components)


@dataclass
class ErrorReport:
    """Differences between two time series on a common grid."""
    max_abs: float
    l2_abs: float
    max_rel: float
    l2_rel: float
    per_atom_max_abs: list[float]
    per_atom_l2_abs: list[float]
    worst_time: float
    settle_time: Optional[float]
    n_points: int
    interpolated: bool = False
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "max_abs": self.max_abs,
            "l2_abs": self.l2_abs,
            "max_rel": self.max_rel,
            "l2_rel": self.l2_rel,
            "per_atom_max_abs": self.per_atom_max_abs,
            "per_atom_l2_abs": self.per_atom_l2_abs,
            "worst_time": self.worst_time,
            "settle_time": self.settle_time,
            "n_points": self.n_points,
            "interpolated": self.interpolated,
            "warnings": self.warnings,
        }


def _interpolate(times: np.ndarray, source_times: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.empty((times.size, values.shape[1]), dtype=complex)
    for j in range(values.shape[1]):
        out[:, j] = np.interp(times, source_times, values[:, j].real) + 1j * np.interp(
            times, source_times, values[:, j].imag
        )
    return out


def compare(a: TimeSeries, b: TimeSeries) -> ErrorReport:
    """
    Error of ``b`` against ``a``.

    On differing grids ``b`` is linearly interpolated onto the times of
    ``a`` inside the common range, with a warning. Relative errors divide by
    the largest norm of ``a``. The settle time is the earliest time after
    which the error stays below a tenth of its maximum.

    Raises:
        EvolutionError: Disjoint time ranges or different atom counts
    """
    if a.n_atoms != b.n_atoms:
        raise EvolutionError(f"series have {a.n_atoms} and {b.n_atoms} atoms")
    ta, tb = a.times, b.times
    warnings = []
    interpolated = not (ta.shape == tb.shape and np.allclose(ta, tb, rtol=0.0, atol=1e-12 * max(1.0, ta.max())))
    if interpolated:
        lo, hi = max(ta.min(), tb.min()), min(ta.max(), tb.max())
        if lo > hi:
            raise EvolutionError(f"time ranges [{ta.min():g}, {ta.max():g}] and [{tb.min():g}, {tb.max():g}] are disjoint")
        keep = (ta >= lo) & (ta <= hi)
        times = ta[keep]
        reference = a.values[keep]
        other = _interpolate(times, tb, b.values)
        message = f"grids differ; second series interpolated onto {times.size} times of the first"
        logger.warning(message)
        warnings.append(message)
    else:
        times, reference, other = ta, a.values, b.values

    error = other - reference
    norms = np.linalg.norm(error, axis=1)
    scale = max(float(np.linalg.norm(reference, axis=1).max()), 1e-300)
    total = max(float(np.linalg.norm(reference)), 1e-300)

    peak = float(norms.max())
    above = np.flatnonzero(norms > 0.1 * peak)
    settle = None
    if peak > 0 and above.size and above[-1] + 1 < times.size:
        settle = float(times[above[-1] + 1])
    elif peak == 0:
        settle = float(times[0])

    return ErrorReport(
        max_abs=peak,
        l2_abs=float(np.linalg.norm(error)),
        max_rel=peak / scale,
        l2_rel=float(np.linalg.norm(error)) / total,
        per_atom_max_abs=np.abs(error).max(axis=0).tolist(),
        per_atom_l2_abs=np.linalg.norm(error, axis=0).tolist(),
        worst_time=float(times[int(np.argmax(norms))]),
        settle_time=settle,
        n_points=int(times.size),
        interpolated=interpolated,
        warnings=warnings,
    )


def crossover_time(
    spectral: SpectralData,
    initial: InitialState,
    tail: TailVariant = TailVariant.IMPROVED,
) -> Optional[float]:
    """
    Time t* after which the tail outweighs the resonance terms.

    Root beyond 3/Γ_min of ‖Σ_j S_j β(0)‖ e^{-Γ_min t} = ‖T β(0)‖/t³; None
    when either side vanishes.
    """
    matrix = spectral.tail(tail)
    decaying = [pole for pole in spectral.resonance if pole.residue is not None and pole.decay_rate > 0]
    if matrix is None or not decaying:
        return None
    beta0 = np.asarray(initial.beta0, dtype=complex)
    weight = float(np.linalg.norm(sum(pole.residue @ beta0 for pole in decaying)))
    tail_weight = float(np.linalg.norm(matrix @ beta0))
    if weight == 0.0 or tail_weight == 0.0:
        return None
    rate = min(pole.decay_rate for pole in decaying)

    def gap(t: float) -> float:
        return math.log(weight) - rate * t - math.log(tail_weight) + 3.0 * math.log(t)

    lower = 3.0 / rate
    if gap(lower) <= 0:
        return lower
    upper = 2.0 * lower
    while gap(upper) > 0:
        upper *= 2.0
    return float(brentq(gap, lower, upper))


def remainder_bound(
    params: ModelParams,
    t,
    delta: float,
    initial: Optional[InitialState] = None,
    samples: int = 2000,
) -> np.ndarray:
    """
    Upper bound on the part of the ray integral beyond distance δ from 0.

        4g²C_F e^{-δs/(2c)} (2c² + δs(2c + δs)) / (π³Ω²s³ sin²(π/8)) · ‖β(0)‖,  s = ct - 2r_max,

    with C_F = sup over the ray Arg y = -π/6 of e^{-|y| r_max/c}‖f(y/c)‖₂,
    sampled on ``samples`` points. Infinite where s ≤ 0. Diagnostic only.
    """
    t = np.asarray(t, dtype=float)
    d = distances(params)
    r_max = d.max_distance
    norm = float(np.linalg.norm(initial.beta0)) if initial is not None else 1.0
    reach = 50.0 * params.c / max(r_max, params.R)
    radius = np.linspace(0.0, reach, samples)
    ray = radius * np.exp(-1j * math.pi / 6.0)
    values = np.linalg.norm(f_matrix(ray / params.c, d), ord=2, axis=(1, 2))
    c_f = float(np.max(np.exp(-radius * r_max / params.c) * values))

    s = params.c * t - 2.0 * r_max
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        bound = (
            4.0 * params.g ** 2 * c_f * np.exp(-delta * s / (2.0 * params.c))
            / (math.pi ** 3 * params.omega ** 2 * s ** 3 * math.sin(math.pi / 8.0) ** 2)
            * (2.0 * params.c ** 2 + delta * s * (2.0 * params.c + delta * s))
            * norm
        )
    return np.where(s > 0, bound, np.inf)
