"""Integration engine for Gaussian-damped integrals on [0, ∞).

All integrals of the model carry a factor e^{-a k²}, so every integral is
truncated at a common radius (see :meth:`QuadratureSpec.truncation_radius`)
and evaluated with composite Gauss-Legendre panels. Panels are bisected
adaptively until the summed per-panel error estimate meets the tolerance.

Integrands are vectorised: they receive a 1-D array of nodes and return an
array whose leading axis runs over the nodes. Any trailing shape (a vector
of kernel lags, an N×N matrix, a batch of poles) is integrated at once and
shares one adaptive panel set.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from config.settings import settings

logger = logging.getLogger(__name__)

Integrand = Callable[[np.ndarray], np.ndarray]

# Half-width of the window around a real pole where the difference quotient
# is replaced by its Taylor expansion, relative to (1 + |pole|).
SWITCH_WINDOW = 1e-4
DERIVATIVE_STEP = 1e-5
HIGHER_DERIVATIVE_STEP = 1e-3


class QuadratureError(Exception):
    """Panel budget exhausted before the tolerance was met."""

    def __init__(self, message: str, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class DomainError(ValueError):
    """Evaluation point outside the domain of the requested integral."""
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """Panel, tolerance and truncation policy."""
    rel_tol: float = field(default_factory=lambda: settings.quadrature.rel_tol)
    abs_tol: float = field(default_factory=lambda: settings.quadrature.abs_tol)
    panel_order: int = field(default_factory=lambda: settings.quadrature.panel_order)
    max_panels: int = field(default_factory=lambda: settings.quadrature.max_panels)

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError(f"tolerances must be positive, got rel={self.rel_tol}, abs={self.abs_tol}")
        if self.panel_order < 2:
            raise ValueError(f"panel_order must be at least 2, got {self.panel_order}")
        if self.max_panels < 1:
            raise ValueError(f"max_panels must be positive, got {self.max_panels}")

    def with_overrides(self, **overrides) -> "QuadratureSpec":
        """Copy with the non-None overrides applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def truncation_radius(self, gaussian_scale: float, pole: float = 0.0) -> float:
        """K_max such that e^{-a K²}·poly(K) is below ``abs_tol``."""
        if gaussian_scale <= 0:
            raise DomainError(f"gaussian_scale must be positive, got {gaussian_scale}")
        root = math.sqrt(gaussian_scale)
        return max(2.0 * pole, math.sqrt(math.log(1.0 / self.abs_tol) / gaussian_scale) + 10.0 / root)


@dataclass
class QuadratureRule:
    """Nodes and weights of a composite rule, with optional integrand samples."""
    nodes: np.ndarray
    weights: np.ndarray
    samples: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return int(self.nodes.shape[0])


@dataclass
class QuadratureResult:
    """Integral value with its error estimate."""
    value: Union[complex, np.ndarray]
    error: Union[float, np.ndarray]
    panels: int
    rule: Optional[QuadratureRule] = None

    @property
    def max_error(self) -> float:
        return float(np.max(self.error))


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def composite_rule(edges: np.ndarray, order: int) -> QuadratureRule:
    """Composite Gauss-Legendre rule on the given panel edges."""
    x, w = gauss_legendre(order)
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return QuadratureRule(nodes=nodes, weights=weights)


def _weighted_sum(samples: np.ndarray, weights: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Σ_i w_i f(x_i) per panel; samples (P, n, *S), scale (P,)."""
    summed = np.tensordot(samples, weights, axes=([1], [0]))
    return summed * scale.reshape(scale.shape + (1,) * (summed.ndim - 1))


def _evaluate_panels(
    integrand: Integrand,
    left: np.ndarray,
    right: np.ndarray,
    order: int,
    keep_samples: bool,
):
    """Integrate each panel once whole and once as two halves.

    The two-halves sum is the panel value; its distance to the whole-panel
    sum is the panel error estimate.
    """
    x, w = gauss_legendre(order)
    n_panels = left.shape[0]
    half = 0.5 * (right - left)
    quarter = 0.5 * half
    mid = left + half

    whole = mid[:, None] + half[:, None] * x
    left_half = (left + quarter)[:, None] + quarter[:, None] * x
    right_half = (mid + quarter)[:, None] + quarter[:, None] * x
    nodes = np.concatenate([whole, left_half, right_half], axis=1)

    samples = np.asarray(integrand(nodes.ravel()))
    tail_shape = samples.shape[1:]
    samples = samples.reshape((n_panels, 3, order) + tail_shape)

    coarse = _weighted_sum(samples[:, 0], w, half)
    fine = _weighted_sum(samples[:, 1], w, quarter) + _weighted_sum(samples[:, 2], w, quarter)
    error = np.abs(coarse - fine)

    kept = None
    if keep_samples:
        kept = (
            nodes[:, order:],
            np.concatenate([quarter[:, None] * w, quarter[:, None] * w], axis=1),
            samples[:, 1:].reshape((n_panels, 2 * order) + tail_shape),
        )
    return fine, error, kept


def adaptive_panels(
    integrand: Integrand,
    edges: np.ndarray,
    spec: QuadratureSpec,
    keep_rule: bool = False,
    label: str = "integral",
) -> QuadratureResult:
    """
    Adaptive bisection of composite Gauss-Legendre panels.

    Panels whose error estimate exceeds their share of the tolerance are
    bisected until Σ errors ≤ max(abs_tol, rel_tol·|value|) componentwise.
    Panel values are always reduced in left-endpoint order so results do
    not depend on the refinement history.

    Args:
        integrand: Vectorised integrand (nodes leading axis)
        edges: Initial panel edges, increasing
        spec: Quadrature policy
        keep_rule: Also return the final nodes, weights and samples
        label: Name used in error messages

    Returns:
        QuadratureResult

    Raises:
        QuadratureError: Panel budget exhausted; carries the best estimate
    """
    edges = np.asarray(edges, dtype=float)
    left, right = edges[:-1].copy(), edges[1:].copy()
    if left.shape[0] > spec.max_panels:
        raise QuadratureError(
            f"{label}: initial partition needs {left.shape[0]} panels, budget is {spec.max_panels}"
        )
    values, errors, kept = _evaluate_panels(integrand, left, right, spec.panel_order, keep_rule)

    iterations = 0
    while True:
        total = values.sum(axis=0)
        total_error = errors.sum(axis=0)
        tolerance = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total))
        if np.all(total_error <= tolerance):
            break

        n_panels = left.shape[0]
        room = spec.max_panels - n_panels
        if room <= 0:
            raise QuadratureError(
                f"{label}: panel budget {spec.max_panels} exhausted, "
                f"error estimate {float(np.max(total_error)):.3e}",
                estimate=total,
                error=total_error,
            )

        score = (errors / tolerance).reshape(n_panels, -1).max(axis=1)
        split = np.flatnonzero(score > 1.0 / n_panels)
        if split.size > room:
            split = np.sort(split[np.argsort(score[split], kind="stable")[::-1][:room]])

        keep = np.ones(n_panels, dtype=bool)
        keep[split] = False
        mid = 0.5 * (left[split] + right[split])
        child_left = np.concatenate([left[split], mid])
        child_right = np.concatenate([mid, right[split]])
        child_values, child_errors, child_kept = _evaluate_panels(
            integrand, child_left, child_right, spec.panel_order, keep_rule
        )

        left = np.concatenate([left[keep], child_left])
        right = np.concatenate([right[keep], child_right])
        values = np.concatenate([values[keep], child_values])
        errors = np.concatenate([errors[keep], child_errors])
        if keep_rule:
            kept = tuple(np.concatenate([old[keep], new]) for old, new in zip(kept, child_kept))

        order = np.argsort(left, kind="stable")
        left, right = left[order], right[order]
        values, errors = values[order], errors[order]
        if keep_rule:
            kept = tuple(part[order] for part in kept)
        iterations += 1

    logger.debug(f"{label}: {left.shape[0]} panels after {iterations} refinements")

    rule = None
    if keep_rule:
        nodes, weights, samples = kept
        rule = QuadratureRule(
            nodes=nodes.ravel(),
            weights=weights.ravel(),
            samples=samples.reshape((-1,) + samples.shape[2:]),
        )
    if np.ndim(total) == 0:
        total, total_error = total[()], float(total_error)
    return QuadratureResult(value=total, error=total_error, panels=int(left.shape[0]), rule=rule)


def initial_edges(
    k_max: float,
    spec: QuadratureSpec,
    frequency: float = 0.0,
    breakpoints: Optional[np.ndarray] = None,
    max_width: Optional[float] = None,
) -> np.ndarray:
    """Uniform starting partition of [0, k_max] plus any extra breakpoints.

    Panel width is bounded by π/(5·frequency) for e^{-i·frequency·k}
    integrands.
    """
    width = k_max / 16.0
    if frequency > 0:
        width = min(width, math.pi / (5.0 * frequency))
    if max_width is not None:
        width = min(width, max_width)
    n_panels = int(math.ceil(k_max / width))
    if n_panels > spec.max_panels:
        raise QuadratureError(
            f"oscillation frequency {frequency:.6g} needs {n_panels} panels on [0, {k_max:.6g}], "
            f"budget is {spec.max_panels}"
        )
    edges = np.linspace(0.0, k_max, n_panels + 1)
    if breakpoints is not None:
        extra = np.asarray(breakpoints, dtype=float)
        extra = extra[(extra > 0.0) & (extra < k_max)]
        edges = np.unique(np.concatenate([edges, extra]))
    return edges


def integrate_semiinfinite(
    integrand: Integrand,
    gaussian_scale: float,
    spec: Optional[QuadratureSpec] = None,
    frequency: float = 0.0,
    breakpoints: Optional[np.ndarray] = None,
    pole: float = 0.0,
    keep_rule: bool = False,
    label: str = "integral",
) -> QuadratureResult:
    """
    ∫₀^∞ integrand(k) dk for an integrand damped like e^{-a k²}.

    Args:
        integrand: Vectorised integrand
        gaussian_scale: a in e^{-a k²}
        spec: Quadrature policy (defaults from settings)
        frequency: Largest oscillation frequency in k, bounds the panel width
        breakpoints: Extra panel edges (peaks, kinks)
        pole: Real part of a nearby singularity; the truncation covers 2·pole
        keep_rule: Return the final rule and samples
        label: Name used in logs and errors

    Returns:
        QuadratureResult with value and error estimate
    """
    spec = spec or QuadratureSpec()
    k_max = spec.truncation_radius(gaussian_scale, pole=max(pole, 0.0))
    edges = initial_edges(k_max, spec, frequency=frequency, breakpoints=breakpoints)
    return adaptive_panels(integrand, edges, spec, keep_rule=keep_rule, label=label)


def finite_difference(func: Callable[[np.ndarray], np.ndarray], points: np.ndarray, step: np.ndarray, order: int) -> np.ndarray:
    """Five-point central differences of order 1, 2 or 3 along the real direction.

    ``func`` maps a 1-D array of (possibly complex) points to values with the
    point axis leading; ``step`` has one entry per point.
    """
    offsets = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    stencil = {
        1: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
        2: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
        3: np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / 2.0,
    }[order]
    grid = points[None, :] + offsets[:, None] * step[None, :]
    values = np.asarray(func(grid.ravel()))
    values = values.reshape((5, points.shape[0]) + values.shape[1:])
    combined = np.tensordot(stencil, values, axes=([0], [0]))
    scale = step ** order
    return combined / scale.reshape(scale.shape + (1,) * (combined.ndim - 1))


def _log_weight(w: np.ndarray, k_max: float, boundary: int) -> np.ndarray:
    """∫₀^K dk/(k - w) with the boundary rule on (0, K)."""
    on_axis = (w.imag == 0) & (w.real > 0)
    safe = np.where(on_axis, 1.0 + 1.0j, w)
    off_axis = np.log(k_max - safe) - np.log(-safe)
    real_w = np.where(on_axis, w.real, 1.0)
    principal = np.log((k_max - real_w) / real_w) + 1j * math.pi * boundary
    return np.where(on_axis, principal, off_axis)


def _expand(array: np.ndarray, ndim: int) -> np.ndarray:
    return array.reshape(array.shape + (1,) * (ndim - array.ndim))


@dataclass
class _PoleData:
    """Numerator value and derivatives at the pole positions."""
    value: np.ndarray
    first: np.ndarray
    second: np.ndarray
    third: np.ndarray
    window: np.ndarray

    @classmethod
    def build(cls, numerator: Integrand, w: np.ndarray, need_third: bool) -> "_PoleData":
        scale = 1.0 + np.abs(w)
        value = np.asarray(numerator(w))
        first = finite_difference(numerator, w, DERIVATIVE_STEP * scale, 1)
        second = finite_difference(numerator, w, HIGHER_DERIVATIVE_STEP * scale, 2)
        third = (
            finite_difference(numerator, w, HIGHER_DERIVATIVE_STEP * scale, 3)
            if need_third else np.zeros_like(second)
        )
        return cls(value, first, second, third, SWITCH_WINDOW * scale)


def cauchy_integral(
    numerator: Integrand,
    w,
    gaussian_scale: float,
    spec: Optional[QuadratureSpec] = None,
    boundary: int = 0,
    derivative: int = 0,
    frequency: float = 0.0,
    label: str = "cauchy integral",
) -> QuadratureResult:
    """
    I(w) = ∫₀^∞ n(k)/(k - w) dk, or I'(w) = ∫₀^∞ n(k)/(k - w)² dk.

    Uses the subtraction form ∫₀^K (n(k) - n(w))/(k - w) dk + n(w)·L(w)
    with L(w) = log(K - w) - log(-w) (principal logarithms), which is valid
    for every w off [0, K]. For real w > 0 the boundary rule selects the
    principal value (``boundary=0``) or the limit from the upper
    (``+1``) or lower (``-1``) half-plane: L = ln((K - w)/w) ± iπ.

    Within |k - w| < 1e-4·(1 + |w|) the difference quotient is replaced by
    its Taylor expansion with finite-difference derivatives of n.

    Args:
        numerator: Vectorised numerator n(k), analytic, accepts complex nodes
        w: Pole position(s), scalar or 1-D array
        gaussian_scale: a in the e^{-a k²} decay of n
        spec: Quadrature policy
        boundary: -1, 0 or +1 for real w
        derivative: 0 for I(w), 1 for I'(w)
        frequency: Oscillation frequency of n in k

    Returns:
        QuadratureResult with value shaped w.shape + numerator shape

    Raises:
        DomainError: w = 0
    """
    spec = spec or QuadratureSpec()
    scalar_input = np.ndim(w) == 0
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    if np.any(w == 0):
        raise DomainError("pole at k = 0 is a branch point of the Cauchy integral")
    if derivative not in (0, 1):
        raise ValueError(f"derivative must be 0 or 1, got {derivative}")

    k_max = spec.truncation_radius(gaussian_scale, pole=float(np.max(np.abs(w.real))))
    pole = _PoleData.build(numerator, w, need_third=derivative == 1)

    def integrand(k: np.ndarray) -> np.ndarray:
        nk = np.asarray(numerator(k))
        diff = k[:, None] - w[None, :]
        inside = np.abs(diff) < pole.window[None, :]
        safe = np.where(inside, 1.0, diff)
        ndim = 2 + nk.ndim - 1
        diff_e, safe_e, inside_e = (_expand(a, ndim) for a in (diff, safe, inside))
        delta = nk[:, None] - pole.value[None]
        if derivative == 0:
            quotient = delta / safe_e
            taylor = pole.first[None] + 0.5 * pole.second[None] * diff_e
        else:
            quotient = (delta - pole.first[None] * diff_e) / safe_e ** 2
            taylor = 0.5 * pole.second[None] + pole.third[None] * diff_e / 6.0
        return np.where(inside_e, taylor, quotient)

    edges = initial_edges(k_max, spec, frequency=frequency)
    result = adaptive_panels(integrand, edges, spec, label=label)

    log_weight = _expand(_log_weight(w, k_max, boundary), pole.value.ndim)
    if derivative == 0:
        value = result.value + pole.value * log_weight
    else:
        safe_w = _expand(w, pole.value.ndim)
        log_slope = -1.0 / (k_max - safe_w) - 1.0 / safe_w
        value = result.value + pole.first * log_weight + pole.value * log_slope

    error = np.broadcast_to(result.error, np.shape(value)).copy()
    if scalar_input:
        value, error = value[0], error[0]
        if np.ndim(value) == 0:
            value, error = value[()], float(error)
    return QuadratureResult(value=value, error=error, panels=result.panels)


def principal_value(
    numerator: Integrand,
    pole: float,
    gaussian_scale: float,
    spec: Optional[QuadratureSpec] = None,
    frequency: float = 0.0,
) -> QuadratureResult:
    """
    p.v. ∫₀^∞ n(k)/(k - x₀) dk for a real pole x₀ > 0.

    Raises:
        DomainError: x₀ ≤ 0 (use the plain integral)
    """
    if pole <= 0:
        raise DomainError(f"principal value needs a pole x0 > 0, got {pole}")
    return cauchy_integral(
        numerator, complex(pole), gaussian_scale, spec=spec, boundary=0,
        frequency=frequency, label=f"principal value at {pole:.6g}",
    )


def cauchy_product(
    numerator: Integrand,
    samples: np.ndarray,
    rule: QuadratureRule,
    k_max: float,
    w: np.ndarray,
    boundary: int = 0,
) -> np.ndarray:
    """
    Batched I(w) on a fixed rule by product integration.

    The subtraction form splits into Σ_i c_i(w) n(k_i) - n(w) Σ_i c_i(w)
    with c_i = w_i/(k_i - w) off the switch window, so many poles reuse one
    table of numerator samples through a single matrix product.

    Args:
        numerator: Vectorised numerator returning (m, P) values
        samples: numerator(rule.nodes), shape (K, P)
        rule: Fixed composite rule on [0, k_max]
        k_max: Upper end of the rule
        w: Pole positions, 1-D complex
        boundary: Boundary rule for real w > 0

    Returns:
        Array (len(w), P)
    """
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise DomainError("pole at k = 0 is a branch point of the Cauchy integral")
    scale = 1.0 + np.abs(w)
    window = SWITCH_WINDOW * scale

    diff = rule.nodes[None, :] - w[:, None]
    inside = np.abs(diff) < window[:, None]
    coefficients = np.where(inside, 0.0, rule.weights[None, :] / np.where(inside, 1.0, diff))

    value_w = np.asarray(numerator(w))
    out = coefficients @ samples
    out -= value_w * coefficients.sum(axis=1)[:, None]
    out += value_w * _log_weight(w, k_max, boundary)[:, None]

    rows = np.flatnonzero(inside.any(axis=1))
    if rows.size:
        inner_weights = np.where(inside[rows], rule.weights[None, :], 0.0)
        s1 = inner_weights.sum(axis=1)
        s2 = (inner_weights * diff[rows]).sum(axis=1)
        first = finite_difference(numerator, w[rows], DERIVATIVE_STEP * scale[rows], 1)
        second = finite_difference(numerator, w[rows], HIGHER_DERIVATIVE_STEP * scale[rows], 2)
        out[rows] += first * s1[:, None] + 0.5 * second * s2[:, None]
    return out
