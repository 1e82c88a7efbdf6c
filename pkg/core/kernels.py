"""Special functions and matrix-valued functions of the coupled-atom model.

Conventions: w = y/c is the wavenumber conjugate to a complex frequency y,
and every k-integral carries the Gaussian form factor e^{-k²R²}. Matrix
entries depend on the atom pair only through r_jl, so every matrix is
computed on the distinct distances of a :class:`DistanceMatrix` and then
expanded to N×N.

Branch values: A⁻ is the function that equals the plain Cauchy integral

    I(w) = ∫₀^∞ k² e^{-k²R²} f(k, r) / (k - w) dk

in the upper half-plane, its upper boundary value on the positive real
axis, and its analytic continuation I(w) + 2πi n(w) below the axis.
A⁺(y) = conj(A⁻(conj y)).
"""

import logging
import math
from enum import Enum
from typing import Optional

import numpy as np

from core.model import DistanceMatrix, ModelParams
from core.quadrature import (
    DomainError,
    QuadratureRule,
    QuadratureSpec,
    cauchy_integral,
    cauchy_product,
    composite_rule,
    finite_difference,
    initial_edges,
    integrate_semiinfinite,
    principal_value,
    DERIVATIVE_STEP,
)

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
SERIES_CUTOFF = 1e-4
# Points closer than this to the positive real axis use the boundary value
AXIS_SNAP = 1e-8
PRODUCT_CHUNK = 256


class BranchSide(Enum):
    """Which branch of the cut functions Γ and A is evaluated."""
    UPPER = "upper"
    LOWER = "lower"
    BOUNDARY_FROM_UPPER = "boundary_from_upper"
    BOUNDARY_FROM_LOWER = "boundary_from_lower"


def f_scalar(k, r):
    """f(k, r) = 4π sin(kr)/(kr), with the series 1 - x²/6 + x⁴/120 for |kr| < 1e-4."""
    x = np.asarray(k) * np.asarray(r)
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    x2 = x * x
    series = 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    value = FOUR_PI * np.where(small, series, np.sin(safe) / safe)
    return value if np.ndim(value) else value[()]


def f_derivative(k, r):
    """∂f/∂k = 4π r (x cos x - sin x)/x² with x = kr."""
    r = np.asarray(r)
    x = np.asarray(k) * r
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    series = -x / 3.0 + x ** 3 / 30.0
    exact = (safe * np.cos(safe) - np.sin(safe)) / safe ** 2
    value = FOUR_PI * r * np.where(small, series, exact)
    return value if np.ndim(value) else value[()]


def f_matrix(k, d: DistanceMatrix) -> np.ndarray:
    """Matrix f_k with entries f(k, r_jl); shape (N, N), or (m, N, N) for k of shape (m,)."""
    k = np.asarray(k)
    per_distance = f_scalar(k[..., None], d.unique)
    return d.expand(per_distance)


def is_symmetric(matrix: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.allclose(matrix, matrix.T, rtol=0.0, atol=tol * max(1.0, np.abs(matrix).max())))


def is_hermitian(matrix: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.allclose(matrix, matrix.conj().T, rtol=0.0, atol=tol * max(1.0, np.abs(matrix).max())))


def is_positive_definite(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    """Hermitian with every eigenvalue above ``tol`` times the largest one."""
    if not is_hermitian(matrix):
        return False
    eigenvalues = np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T))
    return bool(eigenvalues.min() > tol * max(abs(eigenvalues.max()), 1e-300))


def _numerator(params: ModelParams, d: DistanceMatrix):
    """n(k) = k² e^{-k²R²} f(k, r) on the distinct distances; (m,) -> (m, U)."""
    r = d.unique
    R2 = params.R ** 2

    def numerator(k: np.ndarray) -> np.ndarray:
        k = np.asarray(k)
        return (k * k * np.exp(-k * k * R2))[:, None] * f_scalar(k[:, None], r[None, :])

    return numerator


def _oscillation(d: DistanceMatrix) -> float:
    return float(d.unique.max()) if d.unique.size else 0.0


def memory_kernel(u: float, r: float, params: ModelParams, spec: Optional[QuadratureSpec] = None) -> complex:
    """K(u, r) = ∫₀^∞ k² e^{-icku - k²R²} f(k, r) dk."""
    return complex(memory_kernel_grid(np.array([u]), r, params, spec).value[0])


def memory_kernel_grid(u: np.ndarray, r: float, params: ModelParams, spec: Optional[QuadratureSpec] = None):
    """K(u_m, r) for a vector of lags sharing one adaptive panel set.

    Returns the :class:`QuadratureResult` so callers can report which lag
    failed.
    """
    u = np.asarray(u, dtype=float)
    c, R2 = params.c, params.R ** 2

    def integrand(k: np.ndarray) -> np.ndarray:
        envelope = k * k * np.exp(-k * k * R2) * f_scalar(k, r)
        return envelope[:, None] * np.exp(-1j * c * k[:, None] * u[None, :])

    frequency = c * float(np.max(np.abs(u))) + r
    return integrate_semiinfinite(
        integrand, R2, spec, frequency=frequency, label=f"memory kernel r={r:.6g}"
    )


def memory_kernel_series(u, params: ModelParams, terms: int = 12) -> np.ndarray:
    """Taylor polynomial of K(u, 0) about u = 0 from Gaussian moments.

    ∫₀^∞ k^m e^{-k²R²} dk = Γ((m+1)/2)/(2R^{m+1}); accurate for c·u ≲ R.
    """
    u = np.asarray(u, dtype=float)
    total = np.zeros_like(u, dtype=complex)
    for n in range(terms):
        moment = math.gamma((n + 3) / 2.0) / (2.0 * params.R ** (n + 3))
        total += (-1j * params.c * u) ** n / math.factorial(n) * moment
    return FOUR_PI * total


def theta(y: float, spec: Optional[QuadratureSpec] = None) -> float:
    """Θ(y) = p.v. ∫₀^∞ k² e^{-k²}/(k - y) dk for y > 0."""
    if y <= 0:
        raise DomainError(f"Θ is defined for y > 0, got {y}")

    def numerator(k):
        k = np.asarray(k)
        return k * k * np.exp(-k * k)

    return float(np.real(principal_value(numerator, y, 1.0, spec).value))


def g_matrix(y: complex, d: DistanceMatrix, params: ModelParams, spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """G(y) = ∫₀^∞ k² e^{-k²R²} [f(k, r) - f(w, r)]/(k - w) dk, w = y/c, Re y > 0.

    Within the switch window the quotient is replaced by ∂_k f(w, r).
    """
    y = complex(y)
    if y.real <= 0:
        raise DomainError(f"G is defined for Re y > 0, got {y}")
    w = y / params.c
    r = d.unique
    R2 = params.R ** 2
    f_w = f_scalar(w, r)
    df_w = f_derivative(w, r)
    window = 1e-4 * (1.0 + abs(w))

    def integrand(k: np.ndarray) -> np.ndarray:
        diff = (k - w)[:, None]
        inside = np.abs(diff) < window
        safe = np.where(inside, 1.0, diff)
        quotient = (f_scalar(k[:, None], r[None, :]) - f_w[None, :]) / safe
        quotient = np.where(inside, df_w[None, :], quotient)
        return (k * k * np.exp(-k * k * R2))[:, None] * quotient

    result = integrate_semiinfinite(
        integrand, R2, spec, frequency=_oscillation(d), breakpoints=np.array([w.real]),
        pole=w.real, label=f"G({y:.6g})",
    )
    return d.expand(np.asarray(result.value, dtype=complex))


def _snap(y) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    near_axis = np.abs(y.imag) < AXIS_SNAP
    y = np.where(near_axis, y.real + 0.0j, y)
    if np.any((y.imag == 0) & (y.real <= 0)):
        raise DomainError("A± is cut along (-∞, 0]; evaluation point lies on the cut")
    return y


def a_minus(
    y,
    d: DistanceMatrix,
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
    derivative: int = 0,
) -> np.ndarray:
    """
    A⁻(y) or (A⁻)'(y) by adaptive subtraction quadrature.

    Args:
        y: Complex point(s) off (-∞, 0]
        d: Distance matrix
        params: Model
        spec: Quadrature policy
        derivative: 0 for the value, 1 for d/dy (differentiated under the integral)

    Returns:
        (N, N) for scalar y, else (len(y), N, N)
    """
    scalar_input = np.ndim(y) == 0
    y = _snap(y)
    w = y / params.c
    numerator = _numerator(params, d)
    result = cauchy_integral(
        numerator, w, params.R ** 2, spec, boundary=1, derivative=derivative,
        frequency=_oscillation(d), label="A-",
    )
    per_distance = np.asarray(result.value)
    lower = w.imag < 0
    if np.any(lower):
        if derivative == 0:
            continuation = numerator(w[lower])
        else:
            continuation = finite_difference(
                numerator, w[lower], DERIVATIVE_STEP * (1.0 + np.abs(w[lower])), 1
            )
        per_distance[lower] += 2j * math.pi * continuation
    if derivative == 1:
        per_distance = per_distance / params.c
    matrices = d.expand(per_distance)
    return matrices[0] if scalar_input else matrices


def a_branch(
    y,
    side: BranchSide,
    d: DistanceMatrix,
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
) -> np.ndarray:
    """
    Branch value of A at y.

    UPPER returns A⁻ (continued across the positive axis), LOWER returns A⁺;
    the BOUNDARY sides return the Plemelj boundary values at Re y, i.e.
    A⁻(Re y + i0) and A⁺(Re y - i0).

    Raises:
        DomainError: y on the closed negative real axis
    """
    if side is BranchSide.UPPER:
        return a_minus(y, d, params, spec)
    if side is BranchSide.LOWER:
        return np.conj(a_minus(np.conj(y), d, params, spec))
    x = np.real(y)
    if side is BranchSide.BOUNDARY_FROM_UPPER:
        return a_minus(x, d, params, spec)
    return np.conj(a_minus(x, d, params, spec))


def branch_jump(y, d: DistanceMatrix, params: ModelParams) -> np.ndarray:
    """A⁺(y) - A⁻(y) = -2πi (y/c)² e^{-(yR/c)²} f_{y/c} for real y > 0."""
    w = np.atleast_1d(np.asarray(y, dtype=float)) / params.c
    jump = -2j * math.pi * _numerator(params, d)(w)
    matrices = d.expand(jump)
    return matrices[0] if np.ndim(y) == 0 else matrices


def a_zero(d: DistanceMatrix, params: ModelParams, spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """A₀ = lim_{y→0} A±(y) = ∫₀^∞ k e^{-k²R²} f_k dk."""
    R2 = params.R ** 2
    r = d.unique

    def integrand(k: np.ndarray) -> np.ndarray:
        return (k * np.exp(-k * k * R2))[:, None] * f_scalar(k[:, None], r[None, :])

    result = integrate_semiinfinite(integrand, R2, spec, frequency=_oscillation(d), label="A0")
    return d.expand(np.asarray(result.value, dtype=complex))


def gamma_laplace(s: complex, d: DistanceMatrix, params: ModelParams, spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """
    Γ(s) = (1/ic) ∫₀^∞ e^{-k²R²} k² f(k, r)/(s/(ic) + k) dk by direct quadrature.

    Validation oracle for the branch values: icΓ(-iy + ε) → A⁻(y) as ε → 0⁺.
    The pole sits at k = is/c, so s must stay off the closed negative
    imaginary axis.
    """
    w = 1j * complex(s) / params.c
    if w.imag == 0 and w.real >= 0:
        raise DomainError(f"Γ(s) has its pole on the integration path for s = {s}")
    numerator = _numerator(params, d)

    def integrand(k: np.ndarray) -> np.ndarray:
        return numerator(k) / (k - w)[:, None]

    breakpoints = None
    if w.real > 0:
        width = max(abs(w.imag), 1e-12)
        breakpoints = w.real + width * np.array([-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0])
    result = integrate_semiinfinite(
        integrand, params.R ** 2, spec, frequency=_oscillation(d), breakpoints=breakpoints,
        pole=max(w.real, 0.0), label=f"Gamma({s})",
    )
    return d.expand(np.asarray(result.value, dtype=complex)) / (1j * params.c)


def e_matrix(y: float, d: DistanceMatrix, params: ModelParams, spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """E(y) = γ' ∫₀^∞ k² f(k, r) e^{-k²R²}/(y + ck) dk for y ≥ 0; real symmetric."""
    if y < 0:
        raise DomainError(f"E is defined for y ≥ 0, got {y}")
    numerator = _numerator(params, d)
    c = params.c

    def integrand(k: np.ndarray) -> np.ndarray:
        return numerator(k) / (y + c * k)[:, None]

    result = integrate_semiinfinite(
        integrand, params.R ** 2, spec, frequency=_oscillation(d), label=f"E({y:.6g})"
    )
    return params.gamma_prime * d.expand(np.real(np.asarray(result.value)))


def e_quadratic_derivative(
    y: float,
    v: np.ndarray,
    d: DistanceMatrix,
    params: ModelParams,
    spec: Optional[QuadratureSpec] = None,
) -> float:
    """λ'(y) = -γ' ∫₀^∞ k² e^{-k²R²} v* f_k v/(ck + y)² dk for a unit eigenvector v."""
    v = np.asarray(v, dtype=complex)
    outer = np.conj(v)[:, None] * v[None, :]
    weights = np.bincount(d.inverse.ravel(), weights=np.real(outer).ravel(), minlength=d.unique.size)
    numerator = _numerator(params, d)
    c = params.c

    def integrand(k: np.ndarray) -> np.ndarray:
        return (numerator(k) @ weights) / (c * k + y) ** 2

    result = integrate_semiinfinite(
        integrand, params.R ** 2, spec, frequency=_oscillation(d), label=f"lambda'({y:.6g})"
    )
    return -params.gamma_prime * float(np.real(result.value))


class BranchEvaluator:
    """Fast batched A⁻ on a fixed product-integration rule.

    One table of numerator samples serves every evaluation point, so the
    cost per point is a single matrix-vector product over the distinct
    distances. The rule resolves the Gaussian (panel width ≤ 0.5/R) and the
    sinc oscillation (≤ π/(5 r_max)) on [0, K_max(w_max)].
    """

    def __init__(
        self,
        d: DistanceMatrix,
        params: ModelParams,
        spec: Optional[QuadratureSpec] = None,
        w_max: float = 0.0,
    ):
        self._d = d
        self._params = params
        self._spec = spec or QuadratureSpec()
        self._numerator = _numerator(params, d)
        self._k_max = self._spec.truncation_radius(params.R ** 2, pole=w_max)
        edges = initial_edges(
            self._k_max, self._spec, frequency=_oscillation(d), max_width=0.5 / params.R
        )
        self._rule: QuadratureRule = composite_rule(edges, self._spec.panel_order)
        self._samples = self._numerator(self._rule.nodes)
        logger.debug(
            f"Branch evaluator: {self._rule.size} nodes on [0, {self._k_max:.4g}], "
            f"{d.unique.size} distinct distances"
        )

    @property
    def rule(self) -> QuadratureRule:
        return self._rule

    def minus(self, y) -> np.ndarray:
        """A⁻ at the given points; (N, N) for scalar y, else (len(y), N, N)."""
        scalar_input = np.ndim(y) == 0
        y = _snap(y)
        w = y / self._params.c
        if np.any(np.abs(w.real) > 0.5 * self._k_max):
            raise DomainError(
                f"evaluation point beyond the tabulated range (|Re w| ≤ {0.5 * self._k_max:.4g})"
            )
        per_distance = np.empty((w.size, self._d.unique.size), dtype=complex)
        for start in range(0, w.size, PRODUCT_CHUNK):
            block = slice(start, start + PRODUCT_CHUNK)
            per_distance[block] = cauchy_product(
                self._numerator, self._samples, self._rule, self._k_max, w[block], boundary=1
            )
        lower = w.imag < 0
        if np.any(lower):
            per_distance[lower] += 2j * math.pi * self._numerator(w[lower])
        matrices = self._d.expand(per_distance)
        return matrices[0] if scalar_input else matrices

    def plus(self, y) -> np.ndarray:
        """A⁺(y) = conj(A⁻(conj y))."""
        return np.conj(self.minus(np.conj(y)))
