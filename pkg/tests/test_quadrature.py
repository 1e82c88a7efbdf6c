import math

import numpy as np
import pytest
from scipy.integrate import quad

from core.quadrature import (
    DomainError,
    QuadratureError,
    QuadratureSpec,
    adaptive_panels,
    cauchy_integral,
    cauchy_product,
    composite_rule,
    initial_edges,
    integrate_semiinfinite,
    principal_value,
)


def gaussian_moment(k):
    k = np.asarray(k)
    return k * k * np.exp(-k * k)


def test_semiinfinite_gaussian(quad_spec):
    result = integrate_semiinfinite(lambda k: np.exp(-k * k), 1.0, quad_spec)
    assert result.value == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-12)
    assert result.max_error < 1e-10


def test_semiinfinite_vector_valued(quad_spec):
    result = integrate_semiinfinite(
        lambda k: np.stack([np.exp(-k * k), k * np.exp(-k * k)], axis=1), 1.0, quad_spec
    )
    np.testing.assert_allclose(result.value, [math.sqrt(math.pi) / 2, 0.5], rtol=1e-12)


def test_oscillatory_integral(quad_spec):
    # ∫₀^∞ e^{-k²} cos(5k) dk = √π/2 e^{-25/4}
    result = integrate_semiinfinite(lambda k: np.exp(-k * k) * np.cos(5 * k), 1.0, quad_spec, frequency=5.0)
    assert result.value == pytest.approx(math.sqrt(math.pi) / 2 * math.exp(-6.25), rel=1e-9)


@pytest.mark.parametrize("x0", [0.3, 1.0, 2.5])
def test_principal_value_matches_cauchy_weight(quad_spec, x0):
    k_max = 12.0
    expected, _ = quad(gaussian_moment, 0.0, k_max, weight="cauchy", wvar=x0, epsabs=1e-13, epsrel=1e-12)
    result = principal_value(gaussian_moment, x0, 1.0, quad_spec)
    assert result.value.real == pytest.approx(expected, rel=1e-8, abs=1e-10)
    assert abs(result.value.imag) < 1e-12


def test_boundary_values_add_plemelj_term(quad_spec):
    x0 = 0.8
    pv = principal_value(gaussian_moment, x0, 1.0, quad_spec).value
    upper = cauchy_integral(gaussian_moment, x0, 1.0, quad_spec, boundary=1).value
    lower = cauchy_integral(gaussian_moment, x0, 1.0, quad_spec, boundary=-1).value
    jump = math.pi * gaussian_moment(x0)
    assert upper == pytest.approx(pv + 1j * jump, abs=1e-10)
    assert lower == pytest.approx(pv - 1j * jump, abs=1e-10)


def test_off_axis_cauchy_integral(quad_spec):
    w = 1.2 + 0.4j
    real, _ = quad(lambda k: (gaussian_moment(k) / (k - w)).real, 0.0, 12.0, epsabs=1e-13)
    imag, _ = quad(lambda k: (gaussian_moment(k) / (k - w)).imag, 0.0, 12.0, epsabs=1e-13)
    result = cauchy_integral(gaussian_moment, w, 1.0, quad_spec)
    assert result.value == pytest.approx(complex(real, imag), abs=1e-10)


def test_cauchy_derivative_matches_difference(quad_spec):
    w = 0.9 - 0.3j
    h = 1e-3
    derivative = cauchy_integral(gaussian_moment, w, 1.0, quad_spec, derivative=1).value
    plus = cauchy_integral(gaussian_moment, w + h, 1.0, quad_spec).value
    minus = cauchy_integral(gaussian_moment, w - h, 1.0, quad_spec).value
    assert derivative == pytest.approx((plus - minus) / (2 * h), rel=1e-5)


def test_principal_value_rejects_nonpositive_pole(quad_spec):
    with pytest.raises(DomainError):
        principal_value(gaussian_moment, 0.0, 1.0, quad_spec)


def test_cauchy_integral_rejects_branch_point(quad_spec):
    with pytest.raises(DomainError):
        cauchy_integral(gaussian_moment, 0.0, 1.0, quad_spec)


def test_cauchy_product_agrees_with_adaptive(quad_spec):
    k_max = quad_spec.truncation_radius(1.0, pole=2.0)
    edges = initial_edges(k_max, quad_spec, max_width=0.25)
    rule = composite_rule(edges, quad_spec.panel_order)

    def numerator(k):
        return gaussian_moment(k)[:, None]

    samples = numerator(rule.nodes)
    w = np.array([0.5 + 0.2j, 1.5 - 0.1j, 0.7 + 0.0j])
    batched = cauchy_product(numerator, samples, rule, k_max, w, boundary=1)[:, 0]
    for value, point in zip(batched, w):
        expected = cauchy_integral(gaussian_moment, point, 1.0, quad_spec, boundary=1).value
        assert value == pytest.approx(expected, abs=1e-9)


def test_panel_budget_exhausted_carries_estimate():
    spec = QuadratureSpec(rel_tol=1e-14, abs_tol=1e-15, panel_order=2, max_panels=4)
    with pytest.raises(QuadratureError) as info:
        adaptive_panels(lambda k: np.exp(-k * k) * np.cos(40 * k), np.linspace(0.0, 6.0, 3), spec)
    assert info.value.estimate is not None


def test_initial_partition_over_budget():
    spec = QuadratureSpec(max_panels=8)
    with pytest.raises(QuadratureError):
        initial_edges(10.0, spec, frequency=100.0)


def test_keep_rule_reproduces_value(quad_spec):
    result = adaptive_panels(lambda k: np.exp(-k), np.linspace(0.0, 5.0, 5), quad_spec, keep_rule=True)
    assert np.sum(result.rule.weights * result.rule.samples) == pytest.approx(result.value, rel=1e-13)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(rel_tol=0.0)
    assert QuadratureSpec().with_overrides(rel_tol=None, panel_order=8).panel_order == 8
