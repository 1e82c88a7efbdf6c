"""Poles and residues of the resolvent.

Two families of poles govern the dynamics:

* oscillatory poles p > 0, roots of det((p + Ω)I - E(p)), found on the
  decreasing eigenvalue branches of the real symmetric matrix E(y);
* resonance poles z in the fourth quadrant, roots of det M(z) with
  M(y) = (y - Ω)I + γA⁻(y), found by Newton iteration on a tracked
  eigenvalue of M.

The conjugate system M⁺(y) = (y - Ω)I + γA⁺(y) is handled by the same code
through :class:`ConjugateBranch` and has the conjugate roots.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol

import numpy as np
from scipy.linalg import eig, eigh, svd
from scipy.optimize import brentq, linear_sum_assignment

from config.settings import settings
from core.kernels import (
    BranchEvaluator,
    BranchSide,
    a_branch,
    a_minus,
    e_matrix,
    e_quadratic_derivative,
    is_positive_definite,
)
from core.model import DistanceMatrix, ModelParams, distances
from core.quadrature import QuadratureSpec, finite_difference
from utils.retry import retry_with_refinement

logger = logging.getLogger(__name__)

SECTOR_ANGLE = math.pi / 8.0
# Oscillatory branches are started just right of the branch point y = 0
BRANCH_START = 1e-8


class BranchMatchingError(Exception):
    """Eigenvector overlap too small to continue the branches."""
    pass


class SpectralConvergenceError(Exception):
    """Pole search failed; ``trajectory`` holds the Newton iterates."""

    def __init__(self, message: str, trajectory: Optional[list[complex]] = None):
        super().__init__(message)
        self.trajectory = list(trajectory or [])


class PoleKind(Enum):
    OSCILLATORY = "oscillatory"
    RESONANCE = "resonance"


@dataclass
class Pole:
    """One pole of the resolvent with its residue.

    Oscillatory poles store the real number p (the pole of the resolvent
    sits at y = -p in the frequency variable, giving e^{i(p+Ω)t}).
    ``residue`` is None for defective poles.
    """
    location: complex
    residue: Optional[np.ndarray]
    kind: PoleKind
    iterations: int = 0
    step_size: float = 0.0
    eigenvector: Optional[np.ndarray] = None
    multiplicity: int = 1
    defective: bool = False
    certified: bool = True

    @property
    def decay_rate(self) -> float:
        """Γ = -Im z; zero for oscillatory poles."""
        if self.kind is PoleKind.OSCILLATORY:
            return 0.0
        return -float(np.imag(self.location))

    def to_dict(self) -> dict:
        location = complex(self.location)
        residue = None
        if self.residue is not None:
            residue = [[float(v.real), float(v.imag)] for v in np.asarray(self.residue).ravel()]
        return {
            "kind": self.kind.value,
            "re": location.real,
            "im": location.imag,
            "residue": residue,
            "iterations": self.iterations,
            "step_size": self.step_size,
            "multiplicity": self.multiplicity,
            "defective": self.defective,
            "certified": self.certified,
        }


@dataclass
class EigenBranch:
    """Eigenvalue branch λ_j(y) of E(y) with continuous eigenvectors."""
    index: int
    y: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def is_decreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.eigenvalues) < tol))


@dataclass
class GuardReport:
    """Small-coupling guard 2N·γ·C_A < Ω sin(π/8)."""
    c_a: float
    lhs: float
    rhs: float

    @property
    def certified(self) -> bool:
        return self.lhs < self.rhs

    def to_dict(self) -> dict:
        return {"c_a": self.c_a, "lhs": self.lhs, "rhs": self.rhs, "certified": self.certified}


@dataclass
class PoleBoundReport:
    """No-oscillatory-pole certificate from the Gershgorin bound on E(y)."""
    quantity: float
    gershgorin_bound: float
    omega: float

    @property
    def certified(self) -> bool:
        return self.gershgorin_bound < self.omega

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "gershgorin_bound": self.gershgorin_bound,
            "omega": self.omega,
            "certifies_no_oscillatory_poles": self.certified,
        }


# ---------------------------------------------------------------------------
# Branch functions used by the resonance search
# ---------------------------------------------------------------------------

class BranchFunction(Protocol):
    """A matrix function of y with its derivative, batched over points."""

    def values(self, y: np.ndarray) -> np.ndarray: ...

    def derivatives(self, y: np.ndarray) -> np.ndarray: ...


class DirectBranch:
    """A⁻ and (A⁻)' by adaptive quadrature."""

    def __init__(self, d: DistanceMatrix, params: ModelParams, spec: Optional[QuadratureSpec] = None):
        self._d = d
        self._params = params
        self._spec = spec

    def values(self, y: np.ndarray) -> np.ndarray:
        return a_minus(np.atleast_1d(y), self._d, self._params, self._spec)

    def derivatives(self, y: np.ndarray) -> np.ndarray:
        return a_minus(np.atleast_1d(y), self._d, self._params, self._spec, derivative=1)


class BranchExpansion:
    """Taylor expansion of A⁻ about Ω from samples on a circle.

    With ρ = Ω sin(π/8) and P equispaced samples A_k on |y - Ω| = ρ, the
    coefficients are b_m = FFT(A)_m / P and

        A⁻(y) ≈ Σ_m b_m s^m,  s = (y - Ω)/ρ.

    A⁻ is analytic in the disk |y - Ω| < Ω, so the coefficients decay like
    sin(π/8)^m and only the first P/2 are kept.
    """

    def __init__(self, evaluator: BranchEvaluator, center: float, radius: float, points: Optional[int] = None):
        points = points or settings.spectral.expansion_points
        self.center = center
        self.radius = radius
        angles = 2.0 * math.pi * np.arange(points) / points
        samples = evaluator.minus(center + radius * np.exp(1j * angles))
        coefficients = np.fft.fft(samples, axis=0) / points
        self.coefficients = coefficients[: points // 2]
        tail = float(np.abs(self.coefficients[-1]).max())
        head = float(np.abs(self.coefficients[0]).max())
        if tail > 1e-8 * head:
            logger.warning(f"Branch expansion tail coefficient {tail:.3e} relative to {head:.3e}")

    def values(self, y: np.ndarray) -> np.ndarray:
        s = (np.atleast_1d(y) - self.center) / self.radius
        powers = s[:, None] ** np.arange(self.coefficients.shape[0])[None, :]
        return np.einsum("pm,mjl->pjl", powers, self.coefficients)

    def derivatives(self, y: np.ndarray) -> np.ndarray:
        s = (np.atleast_1d(y) - self.center) / self.radius
        orders = np.arange(1, self.coefficients.shape[0])
        powers = orders[None, :] * s[:, None] ** (orders - 1)[None, :]
        return np.einsum("pm,mjl->pjl", powers, self.coefficients[1:]) / self.radius


class SampledBranch:
    """A⁻ from a :class:`BranchEvaluator`; derivatives by central differences."""

    def __init__(self, evaluator: BranchEvaluator, step: float = 1e-3):
        self._evaluator = evaluator
        self._step = step

    def values(self, y: np.ndarray) -> np.ndarray:
        return self._evaluator.minus(np.atleast_1d(y))

    def derivatives(self, y: np.ndarray) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=complex))
        return finite_difference(self._evaluator.minus, y, self._step * np.maximum(1.0, np.abs(y)), 1)


class ConjugateBranch:
    """A⁺(y) = conj(A⁻(conj y)) from any A⁻ branch function."""

    def __init__(self, inner: BranchFunction):
        self._inner = inner

    def values(self, y: np.ndarray) -> np.ndarray:
        return np.conj(self._inner.values(np.conj(np.atleast_1d(y))))

    def derivatives(self, y: np.ndarray) -> np.ndarray:
        return np.conj(self._inner.derivatives(np.conj(np.atleast_1d(y))))


def _sector_radius(params: ModelParams) -> float:
    return params.omega * math.sin(SECTOR_ANGLE)


def _evaluator(params: ModelParams, d: DistanceMatrix, spec: Optional[QuadratureSpec], y_max: float) -> BranchEvaluator:
    return BranchEvaluator(d, params, spec, w_max=y_max / params.c)


def branch_function(
    params: ModelParams,
    d: Optional[DistanceMatrix] = None,
    spec: Optional[QuadratureSpec] = None,
    side: BranchSide = BranchSide.UPPER,
) -> BranchFunction:
    """Direct quadrature up to SPECTRAL_DIRECT_MAX_ATOMS atoms, the circle expansion above."""
    d = d or distances(params)
    if params.n_atoms <= settings.spectral.direct_max_atoms:
        function: BranchFunction = DirectBranch(d, params, spec)
    else:
        radius = _sector_radius(params)
        evaluator = _evaluator(params, d, spec, params.omega + radius)
        function = BranchExpansion(evaluator, params.omega, radius)
    if side is BranchSide.LOWER:
        function = ConjugateBranch(function)
    return function


# ---------------------------------------------------------------------------
# Oscillatory poles
# ---------------------------------------------------------------------------

def _refine_samples(y: np.ndarray, refinement: int) -> np.ndarray:
    """Insert 2^refinement - 1 log-spaced points between neighbours."""
    if refinement == 0:
        return y
    factor = 2 ** refinement
    log_y = np.log(y)
    fine = [np.linspace(a, b, factor, endpoint=False) for a, b in zip(log_y[:-1], log_y[1:])]
    return np.exp(np.concatenate(fine + [log_y[-1:]]))


@retry_with_refinement(
    max_attempts=settings.spectral.branch_refinements,
    exceptions=(BranchMatchingError,),
)
def lambda_branches(
    params: ModelParams,
    y_samples,
    spec: Optional[QuadratureSpec] = None,
    overlap: Optional[float] = None,
    refinement: int = 0,
) -> list[EigenBranch]:
    """
    Eigenvalue branches of E(y) matched across samples by eigenvector overlap.

    Branch j starts at the j-th largest eigenvalue of the first sample.
    Consecutive samples are matched by maximising Σ |v_j(y_k)ᵀ v_m(y_{k+1})|;
    a matched overlap below the threshold densifies the samples and retries.

    Raises:
        BranchMatchingError: Overlap below threshold after all refinements
        ValueError: Samples not positive and increasing
    """
    y = np.asarray(y_samples, dtype=float)
    if y.ndim != 1 or y.size < 1 or np.any(y <= 0) or np.any(np.diff(y) <= 0):
        raise ValueError("y samples must be positive and strictly increasing")
    threshold = overlap or settings.spectral.branch_overlap
    y = _refine_samples(y, refinement)
    d = distances(params)
    n = params.n_atoms

    eigenvalues = np.empty((y.size, n))
    eigenvectors = np.empty((y.size, n, n))
    for k, yk in enumerate(y):
        values, vectors = eigh(e_matrix(float(yk), d, params, spec))
        order = np.argsort(values)[::-1]
        values, vectors = values[order], vectors[:, order]
        if k > 0:
            overlaps = np.abs(eigenvectors[k - 1].T @ vectors)
            rows, cols = linear_sum_assignment(overlaps, maximize=True)
            worst = float(overlaps[rows, cols].min())
            if worst < threshold:
                raise BranchMatchingError(
                    f"eigenvector overlap {worst:.3f} below {threshold} between "
                    f"y={y[k - 1]:.6g} and y={yk:.6g}"
                )
            values, vectors = values[cols], vectors[:, cols]
            signs = np.sign(np.sum(eigenvectors[k - 1] * vectors, axis=0))
            vectors = vectors * np.where(signs == 0, 1.0, signs)
        eigenvalues[k] = values
        eigenvectors[k] = vectors

    return [
        EigenBranch(index=j, y=y, eigenvalues=eigenvalues[:, j], eigenvectors=eigenvectors[:, :, j])
        for j in range(n)
    ]


def _ordered_eigenvalue(params: ModelParams, d: DistanceMatrix, spec, j: int):
    def value(y: float) -> float:
        eigenvalues = np.linalg.eigvalsh(e_matrix(y, d, params, spec))
        return float(eigenvalues[::-1][j])
    return value


def find_oscillatory_poles(params: ModelParams, spec: Optional[QuadratureSpec] = None) -> list[Pole]:
    """
    Real poles p > 0 of ((y + Ω)I - E(y))⁻¹.

    The order statistics μ_1(y) ≥ ... ≥ μ_N(y) of E(y) are nonincreasing, so
    φ_j(y) = y + Ω - μ_j(y) is strictly increasing and has a root on
    (0, μ_j(0⁺) - Ω] exactly when μ_j(0⁺) > Ω. Coinciding roots form one pole
    with the eigenspace residue V(I - VᵀE'V)⁻¹Vᵀ; simple roots get
    vvᵀ/(1 - λ').
    """
    if params.g == 0.0:
        return []
    d = distances(params)
    omega = params.omega
    y0 = BRANCH_START * omega
    e_start = e_matrix(y0, d, params, spec)
    if not is_positive_definite(e_start):
        logger.warning(f"E({y0:.3g}) is not positive definite; oscillatory branches may be misordered")
    start = np.linalg.eigvalsh(e_start)[::-1]

    roots = []
    for j, mu in enumerate(start):
        if mu <= omega + y0:
            continue
        branch = _ordered_eigenvalue(params, d, spec, j)
        upper = mu - omega
        p, info = brentq(
            lambda y: y + omega - branch(y), y0, upper,
            xtol=1e-13 * omega, rtol=4.0 * np.finfo(float).eps, full_output=True,
        )
        roots.append((p, info.iterations, upper - y0))
        logger.debug(f"Oscillatory branch {j}: root p={p:.12g} after {info.iterations} iterations")

    poles = []
    roots.sort()
    used = [False] * len(roots)
    for i, (p, iterations, width) in enumerate(roots):
        if used[i]:
            continue
        group = [k for k in range(i, len(roots)) if not used[k] and abs(roots[k][0] - p) <= settings.spectral.dedup_tol * omega]
        for k in group:
            used[k] = True
        values, vectors = eigh(e_matrix(p, d, params, spec))
        nearest = np.argsort(np.abs(values - (p + omega)))[: len(group)]
        basis = vectors[:, nearest]
        slope = _quadratic_form_block(p, basis, d, params, spec)
        residue = basis @ np.linalg.solve(np.eye(len(group)) - slope, basis.T)
        residual = float(np.linalg.norm((p + omega) * basis - e_matrix(p, d, params, spec) @ basis))
        if residual > 1e-10 * omega:
            logger.warning(f"Oscillatory pole p={p:.12g} has eigen-residual {residual:.3e}")
        poles.append(Pole(
            location=complex(p),
            residue=residue.astype(complex),
            kind=PoleKind.OSCILLATORY,
            iterations=max(roots[k][1] for k in group),
            step_size=width,
            eigenvector=basis[:, 0].astype(complex),
            multiplicity=len(group),
        ))
    logger.info(f"Found {len(poles)} oscillatory pole(s)")
    return poles


def _quadratic_form_block(y: float, basis: np.ndarray, d, params, spec) -> np.ndarray:
    """VᵀE'(y)V from quadratic forms, using polarisation for the off-diagonal."""
    m = basis.shape[1]
    block = np.empty((m, m))
    for a in range(m):
        block[a, a] = e_quadratic_derivative(y, basis[:, a], d, params, spec)
        for b in range(a):
            plus = e_quadratic_derivative(y, basis[:, a] + basis[:, b], d, params, spec)
            minus = e_quadratic_derivative(y, basis[:, a] - basis[:, b], d, params, spec)
            block[a, b] = block[b, a] = 0.25 * (plus - minus)
    return block


def pole_bound_report(params: ModelParams) -> PoleBoundReport:
    """
    N·g²/(cΩR²) and the Gershgorin bound max_y‖E(y)‖_∞ ≤ N·γ'·2π/(cR²).

    |E_jl(y)| ≤ E_jj(0) = 2πγ'/(cR²), so the bound below Ω excludes every
    oscillatory pole.
    """
    n = params.n_atoms
    return PoleBoundReport(
        quantity=n * params.g ** 2 / (params.c * params.omega * params.R ** 2),
        gershgorin_bound=n * params.gamma_prime * 2.0 * math.pi / (params.c * params.R ** 2),
        omega=params.omega,
    )


# ---------------------------------------------------------------------------
# Resonance poles
# ---------------------------------------------------------------------------

def resonance_matrix(
    y: complex,
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
    side: BranchSide = BranchSide.UPPER,
) -> np.ndarray:
    """M(y) = (y - Ω)I + γ·A⁻(y), or with A⁺ for the lower side. Not inverted."""
    d = distances(params)
    a = a_branch(y, side, d, params, spec)
    return (complex(y) - params.omega) * np.eye(params.n_atoms) + params.gamma * a


def _matrices(function: BranchFunction, params: ModelParams, y) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    identity = np.eye(params.n_atoms)
    return (y - params.omega)[:, None, None] * identity + params.gamma * function.values(y)


def _slopes(function: BranchFunction, params: ModelParams, y) -> np.ndarray:
    identity = np.eye(params.n_atoms)
    return identity + params.gamma * function.derivatives(np.atleast_1d(np.asarray(y, dtype=complex)))


def _noise_floor(params: ModelParams, a: np.ndarray, spec: Optional[QuadratureSpec]) -> float:
    rel_tol = (spec or QuadratureSpec()).rel_tol
    return 10.0 * params.gamma * float(np.abs(a).max()) * max(rel_tol, 1e-12)


@dataclass
class _NewtonResult:
    root: complex
    iterations: int
    step_size: float
    right: np.ndarray
    left: np.ndarray
    trajectory: list[complex] = field(default_factory=list)


def _eigen_newton(
    function: BranchFunction,
    params: ModelParams,
    start: complex,
    direction: np.ndarray,
    tol: float,
    max_iter: int,
) -> _NewtonResult:
    """Newton on the eigenvalue of M(y) whose eigenvector continues ``direction``."""
    z = complex(start)
    previous = direction
    trajectory = [z]
    step = float("inf")
    for iteration in range(1, max_iter + 1):
        m = _matrices(function, params, z)[0]
        values, left, right = eig(m, left=True, right=True)
        index = int(np.argmax(np.abs(previous.conj() @ right)))
        e = values[index]
        u, v = left[:, index], right[:, index]
        if abs(e) <= tol:
            return _NewtonResult(z, iteration - 1, step, v, u, trajectory)
        slope = (u.conj() @ _slopes(function, params, z)[0] @ v) / (u.conj() @ v)
        delta = e / slope
        z -= delta
        step = abs(delta)
        previous = v
        trajectory.append(z)
        logger.debug(f"Newton {iteration}: z={z:.15g} |e|={abs(e):.3e} step={step:.3e}")
    raise SpectralConvergenceError(
        f"eigenvalue Newton did not converge from {start:.12g} in {max_iter} iterations",
        trajectory,
    )


def _determinant_newton(
    function: BranchFunction,
    params: ModelParams,
    start: complex,
    tol: float,
    max_iter: int,
) -> _NewtonResult:
    """Newton on det M(y) with (det M)'/det M = tr(M⁻¹M')."""
    z = complex(start)
    trajectory = [z]
    for iteration in range(1, max_iter + 1):
        m = _matrices(function, params, z)[0]
        trace = np.trace(np.linalg.solve(m, _slopes(function, params, z)[0]))
        delta = 1.0 / trace
        z -= delta
        trajectory.append(z)
        if abs(delta) <= tol:
            m = _matrices(function, params, z)[0]
            u_svd, _, vh = svd(m)
            return _NewtonResult(z, iteration, abs(delta), vh[-1].conj(), u_svd[:, -1], trajectory)
    raise SpectralConvergenceError(
        f"determinant Newton did not converge from {start:.12g} in {max_iter} iterations",
        trajectory,
    )


def _winding_number(function: BranchFunction, params: ModelParams, center: complex, radius: float, points: int) -> int:
    angles = 2.0 * math.pi * np.arange(points + 1) / points
    matrices = _matrices(function, params, center + radius * np.exp(1j * angles))
    signs, _ = np.linalg.slogdet(matrices)
    phase = np.unwrap(np.angle(signs))
    return int(round((phase[-1] - phase[0]) / (2.0 * math.pi)))


def small_coupling_guard(
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
    d: Optional[DistanceMatrix] = None,
) -> GuardReport:
    """
    Check 2N·γ·C_A < Ω sin(π/8).

    C_A is the largest entry modulus of A⁻ over a log-polar sample of the
    sector |Arg y| ≤ π/6, radii from 10⁻³Ω to 8·max(Ω, c/R).
    """
    d = d or distances(params)
    r_max = 8.0 * max(params.omega, params.c / params.R)
    radii = np.geomspace(1e-3 * params.omega, r_max, 17)
    angles = np.linspace(-math.pi / 6.0, math.pi / 6.0, 5)
    points = (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
    evaluator = _evaluator(params, d, spec, r_max)
    c_a = float(np.abs(evaluator.minus(points)).max())
    report = GuardReport(
        c_a=c_a,
        lhs=2.0 * params.n_atoms * params.gamma * c_a,
        rhs=_sector_radius(params),
    )
    if not report.certified:
        logger.warning(
            f"Small-coupling guard fails ({report.lhs:.4g} ≥ {report.rhs:.4g}); "
            "resonance poles are reported as uncertified"
        )
    return report


def zeroth_order_poles(
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
    side: BranchSide = BranchSide.UPPER,
) -> list[Pole]:
    """Poles Ω - γμ_j of ((y - Ω)I + γA(Ω))⁻¹ with residues v u*/(u* v)."""
    d = distances(params)
    a = a_branch(params.omega, side, d, params, spec)
    values, left, right = eig(a, left=True, right=True)
    poles = []
    for j in range(params.n_atoms):
        u, v = left[:, j], right[:, j]
        poles.append(Pole(
            location=complex(params.omega - params.gamma * values[j]),
            residue=np.outer(v, u.conj()) / (u.conj() @ v),
            kind=PoleKind.RESONANCE,
            eigenvector=v,
        ))
    poles.sort(key=lambda pole: (pole.location.real, pole.location.imag))
    return poles


def count_resonance_poles(
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
    radius: Optional[float] = None,
    points: int = 256,
    side: BranchSide = BranchSide.UPPER,
) -> int:
    """Winding number of det M(y) around |y - Ω| = radius (default Ω sin(π/8))."""
    radius = radius or _sector_radius(params)
    d = distances(params)
    function: BranchFunction = SampledBranch(_evaluator(params, d, spec, params.omega + radius))
    if side is BranchSide.LOWER:
        function = ConjugateBranch(function)
    return _winding_number(function, params, complex(params.omega), radius, points)


def contour_residue(
    params: ModelParams,
    location: complex,
    radius: float,
    points: int = 64,
    spec: Optional[QuadratureSpec] = None,
    function: Optional[BranchFunction] = None,
) -> np.ndarray:
    """(1/2πi)∮ M(ξ)⁻¹ dξ on |ξ - location| = radius by the trapezoidal rule."""
    function = function or branch_function(params, spec=spec)
    angles = 2.0 * math.pi * np.arange(points) / points
    nodes = np.exp(1j * angles)
    inverses = np.linalg.inv(_matrices(function, params, location + radius * nodes))
    return radius * np.einsum("p,pjl->jl", nodes, inverses) / points


def _cluster(roots: list[_NewtonResult], tol: float) -> list[list[_NewtonResult]]:
    clusters: list[list[_NewtonResult]] = []
    for result in sorted(roots, key=lambda r: (r.root.real, r.root.imag)):
        if clusters and any(abs(result.root - other.root) <= tol for other in clusters[-1]):
            clusters[-1].append(result)
        else:
            clusters.append([result])
    return clusters


def _deduplicate(results: list[_NewtonResult], tol: float) -> list[tuple[_NewtonResult, int]]:
    """Distinct roots with the number of starts that reached each."""
    distinct: list[tuple[_NewtonResult, int]] = []
    for result in sorted(results, key=lambda r: (r.root.real, r.root.imag)):
        for k, (kept, hits) in enumerate(distinct):
            if abs(result.root - kept.root) <= tol:
                distinct[k] = (kept, hits + 1)
                break
        else:
            distinct.append((result, 1))
    return distinct


def find_resonance_poles(
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
    side: BranchSide = BranchSide.UPPER,
    guard: Optional[GuardReport] = None,
    threads: Optional[int] = None,
) -> list[Pole]:
    """
    All N roots of det M(y) near Ω with their residues.

    Newton starts at z⁰_j = Ω - γμ_j for the eigenvalues μ_j of A(Ω) and
    iterates on the eigenvalue of M(y) tracked by eigenvector overlap, with
    slope u*M'v/(u*v). For up to SPECTRAL_DETERMINANT_MAX_ATOMS atoms a
    failed start is retried with determinant Newton. Roots within
    SPECTRAL_DEDUP_TOL·Ω merge; roots within SPECTRAL_CLUSTER_TOL·Ω form one
    pole whose residue is V(U*M'V)⁻¹U* on the numerical null space when it
    is semisimple, and which is flagged defective otherwise.

    Args:
        params: Model
        spec: Quadrature policy
        side: UPPER for M with A⁻ (fourth-quadrant roots), LOWER for A⁺
        guard: Precomputed small-coupling guard (computed when omitted)
        threads: Worker cap for independent Newton starts

    Returns:
        Poles sorted by real part

    Raises:
        SpectralConvergenceError: Non-convergence, or a root on the wrong side of the axis
    """
    n = params.n_atoms
    omega = params.omega
    if params.g == 0.0:
        return [Pole(
            location=complex(omega), residue=np.eye(n, dtype=complex), kind=PoleKind.RESONANCE,
            multiplicity=n,
        )]

    d = distances(params)
    guard = guard or small_coupling_guard(params, spec, d)
    function = branch_function(params, d, spec, side)
    a_omega = function.values(np.array([omega], dtype=complex))[0]
    mu, right = np.linalg.eig(a_omega)
    order = np.lexsort((mu.imag, mu.real))
    mu, right = mu[order], right[:, order]

    tol = max(settings.spectral.newton_tol * omega, _noise_floor(params, a_omega, spec))
    max_iter = settings.spectral.newton_max_iter

    def run(j: int) -> _NewtonResult:
        start = omega - params.gamma * mu[j]
        try:
            return _eigen_newton(function, params, start, right[:, j], tol, max_iter)
        except SpectralConvergenceError as e:
            if n > settings.spectral.determinant_max_atoms:
                raise
            logger.warning(f"Eigenvalue tracking failed from {start:.12g}; trying determinant Newton")
            try:
                return _determinant_newton(function, params, start, tol, max_iter)
            except SpectralConvergenceError as fallback:
                raise SpectralConvergenceError(str(fallback), e.trajectory + fallback.trajectory) from fallback

    with ThreadPoolExecutor(max_workers=threads or settings.threads) as executor:
        results = list(executor.map(run, range(n)))

    expected_sign = -1.0 if side is BranchSide.UPPER else 1.0
    for result in results:
        if np.sign(result.root.imag) != expected_sign:
            raise SpectralConvergenceError(
                f"root {result.root:.12g} lies on the wrong side of the real axis", result.trajectory
            )

    distinct = _deduplicate(results, settings.spectral.dedup_tol * omega)
    hits = {id(result): count for result, count in distinct}
    clusters = _cluster([result for result, _ in distinct], settings.spectral.cluster_tol * omega)

    poles = []
    for cluster in clusters:
        poles.append(_cluster_pole(cluster, hits, function, params, tol, guard.certified, distinct))

    total = sum(pole.multiplicity for pole in poles)
    if total < n:
        suspects = ", ".join(f"{pole.location:.9g}" for pole in poles if pole.multiplicity > 1 or pole.defective)
        logger.warning(
            f"Found {total} of {n} resonance poles counting multiplicity; "
            f"suspected multiplicity near {suspects or 'an unresolved root'}"
        )
    logger.info(f"Found {len(poles)} resonance pole(s) for {n} atoms")
    return poles


def _cluster_pole(
    cluster: list[_NewtonResult],
    hits: dict[int, int],
    function: BranchFunction,
    params: ModelParams,
    tol: float,
    certified: bool,
    distinct: list[tuple[_NewtonResult, int]],
) -> Pole:
    iterations = max(result.iterations for result in cluster)
    step_size = max(result.step_size for result in cluster)
    started = sum(hits[id(result)] for result in cluster)

    if len(cluster) == 1 and started == 1:
        result = cluster[0]
        slope = _slopes(function, params, result.root)[0]
        u, v = result.left, result.right
        residue = np.outer(v, u.conj()) / (u.conj() @ slope @ v)
        return Pole(
            location=result.root, residue=residue, kind=PoleKind.RESONANCE,
            iterations=iterations, step_size=step_size, eigenvector=v, certified=certified,
        )

    center = complex(np.mean([result.root for result in cluster]))
    m = _matrices(function, params, center)[0]
    slope = _slopes(function, params, center)[0]
    u_svd, sigma, vh = svd(m)
    spread = max(abs(result.root - center) for result in cluster)
    rank_tol = max(tol, spread) * 10.0 * max(1.0, float(np.abs(slope).max()))
    nullity = int(np.sum(sigma <= rank_tol))

    others = [abs(kept.root - center) for kept, _ in distinct if all(kept is not r for r in cluster)]
    radius = 0.5 * min(others + [1e-3 * params.omega])
    radius = max(radius, 4.0 * spread)
    algebraic = _winding_number(function, params, center, radius, 64)
    multiplicity = max(len(cluster), algebraic, 1)

    if nullity >= multiplicity:
        right = vh[-multiplicity:].conj().T
        left = u_svd[:, -multiplicity:]
        residue = right @ np.linalg.solve(left.conj().T @ slope @ right, left.conj().T)
        defective = False
    else:
        residue = None
        defective = True
        logger.warning(
            f"Pole {center:.12g} has algebraic multiplicity {multiplicity} "
            f"but null space dimension {nullity}; flagged defective"
        )
    return Pole(
        location=center, residue=residue, kind=PoleKind.RESONANCE, iterations=iterations,
        step_size=step_size, eigenvector=vh[-1].conj(), multiplicity=multiplicity,
        defective=defective, certified=certified,
    )
