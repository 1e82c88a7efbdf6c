import math

import numpy as np
import pytest
from scipy.integrate import quad

from core.kernels import (
    BranchEvaluator,
    BranchSide,
    a_branch,
    a_minus,
    a_zero,
    branch_jump,
    e_matrix,
    e_quadratic_derivative,
    f_matrix,
    f_scalar,
    g_matrix,
    gamma_laplace,
    is_hermitian,
    is_positive_definite,
    is_symmetric,
    memory_kernel,
    memory_kernel_series,
    theta,
)
from core.model import ModelParams, distances
from core.quadrature import DomainError


@pytest.fixture(scope="module")
def wide_params():
    return ModelParams(
        g=0.5, R=0.7, c=1.3, omega=1.0,
        positions=np.array([[0.0, 0.0, 0.0], [0.9, 0.0, 0.0], [0.2, 1.1, 0.4]]),
    )


def test_f_series_matches_closed_form():
    k = np.array([1e-6, 1e-3, 0.5])
    expected = 4 * np.pi * np.sin(k * 2.0) / (k * 2.0)
    np.testing.assert_allclose(f_scalar(k, 2.0), expected, rtol=1e-12)
    assert f_scalar(3.0, 0.0) == pytest.approx(4 * np.pi)


@pytest.mark.parametrize("r", [0.0, 0.5, 2.0])
def test_memory_kernel_at_zero_lag(n1_params, quad_spec, r):
    expected = math.pi ** 1.5 * math.exp(-r * r / 4.0)
    assert memory_kernel(0.0, r, n1_params, quad_spec) == pytest.approx(expected, rel=1e-10)


def test_memory_kernel_small_lag_series(n1_params, quad_spec):
    for u in (0.05, 0.2):
        assert memory_kernel(u, 0.0, n1_params, quad_spec) == pytest.approx(
            memory_kernel_series(u, n1_params), rel=1e-8
        )


def test_memory_kernel_bounded_by_absolute_integral(n1_params, quad_spec):
    r = 1.5

    def absolute(k):
        return k * k * math.exp(-k * k) * abs(f_scalar(k, r))

    bound, _ = quad(absolute, 0.0, 12.0, limit=200)
    for u in (0.5, 2.0, 7.0):
        assert abs(memory_kernel(u, r, n1_params, quad_spec)) <= bound * (1 + 1e-10)


def test_theta_matches_cauchy_weight(quad_spec):
    expected, _ = quad(lambda k: k * k * math.exp(-k * k), 0.0, 12.0, weight="cauchy", wvar=0.6)
    assert theta(0.6, quad_spec) == pytest.approx(expected, rel=1e-8)
    with pytest.raises(DomainError):
        theta(0.0)


def test_real_axis_decomposition(wide_params, quad_spec):
    d = distances(wide_params)
    y = 0.9
    w = y / wide_params.c
    expected = (
        f_scalar(w, d.r) * theta(w * wide_params.R, quad_spec) / wide_params.R ** 2
        + g_matrix(y, d, wide_params, quad_spec)
    )
    np.testing.assert_allclose(a_minus(y, d, wide_params, quad_spec).real, expected.real, atol=1e-9)


def test_branch_jump_on_positive_axis(n2_params, quad_spec):
    d = distances(n2_params)
    y = 0.7
    plus = a_branch(y, BranchSide.BOUNDARY_FROM_LOWER, d, n2_params, quad_spec)
    minus = a_branch(y, BranchSide.BOUNDARY_FROM_UPPER, d, n2_params, quad_spec)
    np.testing.assert_allclose(plus - minus, branch_jump(y, d, n2_params), atol=1e-9)


def test_plus_branch_is_plain_integral_below_axis(n1_params, quad_spec):
    d = distances(n1_params)
    rng = np.random.default_rng(3)
    points = rng.uniform(0.1, 2.0, 4) - 1j * rng.uniform(0.05, 1.0, 4)
    for y in points:

        def part(k, which):
            value = k * k * math.exp(-k * k) * 4 * math.pi / (k - y)
            return value.real if which == 0 else value.imag

        real, _ = quad(part, 0.0, 12.0, args=(0,), limit=200, epsabs=1e-12)
        imag, _ = quad(part, 0.0, 12.0, args=(1,), limit=200, epsabs=1e-12)
        plus = a_branch(y, BranchSide.LOWER, d, n1_params, quad_spec)[0, 0]
        assert plus == pytest.approx(complex(real, imag), abs=1e-9)


def test_lower_continuation_is_continuous(n2_params, quad_spec):
    d = distances(n2_params)
    above = a_minus(1.0 + 1e-6j, d, n2_params, quad_spec)
    below = a_minus(1.0 - 1e-6j, d, n2_params, quad_spec)
    np.testing.assert_allclose(above, below, atol=1e-5)


def test_laplace_limit_converges_linearly(n1_params, quad_spec):
    d = distances(n1_params)
    y = n1_params.omega
    target = a_minus(y, d, n1_params, quad_spec)[0, 0]
    errors = []
    for eps in (1e-2, 1e-3, 1e-4):
        value = 1j * n1_params.c * gamma_laplace(-1j * y + eps, d, n1_params, quad_spec)[0, 0]
        errors.append(abs(value - target))
    assert errors[0] > errors[1] > errors[2]
    assert 5.0 < errors[0] / errors[1] < 20.0


def test_laplace_reflection(n2_params, quad_spec):
    d = distances(n2_params)
    s = 0.4 + 0.3j
    np.testing.assert_allclose(
        gamma_laplace(-np.conj(s), d, n2_params, quad_spec),
        -np.conj(gamma_laplace(s, d, n2_params, quad_spec)),
        atol=1e-10,
    )


def test_a_zero_is_small_frequency_limit(n2_params, quad_spec):
    d = distances(n2_params)
    np.testing.assert_allclose(a_minus(1e-7, d, n2_params, quad_spec), a_zero(d, n2_params, quad_spec), atol=1e-5)


def test_cut_rejected(n1_params):
    d = distances(n1_params)
    with pytest.raises(DomainError):
        a_minus(-1.0, d, n1_params)
    with pytest.raises(DomainError):
        e_matrix(-0.5, d, n1_params)
    with pytest.raises(DomainError):
        g_matrix(-0.5, d, n1_params)


def test_e_matrix_symmetric_positive_definite(wide_params, quad_spec):
    d = distances(wide_params)
    for y in np.geomspace(1e-3, 1e3, 7):
        e = e_matrix(float(y), d, wide_params, quad_spec)
        assert is_symmetric(e)
        assert is_positive_definite(e)


def test_eigenvalue_derivative(wide_params, quad_spec):
    d = distances(wide_params)
    y, h = 0.8, 1e-3
    values, vectors = np.linalg.eigh(e_matrix(y, d, wide_params, quad_spec))
    slope = e_quadratic_derivative(y, vectors[:, -1], d, wide_params, quad_spec)
    plus = np.linalg.eigvalsh(e_matrix(y + h, d, wide_params, quad_spec))[-1]
    minus = np.linalg.eigvalsh(e_matrix(y - h, d, wide_params, quad_spec))[-1]
    assert slope < 0
    assert slope == pytest.approx((plus - minus) / (2 * h), rel=1e-5)


def test_branch_evaluator_matches_adaptive(n3_params, quad_spec):
    d = distances(n3_params)
    evaluator = BranchEvaluator(d, n3_params, quad_spec, w_max=3.0)
    points = np.array([0.4 + 0.1j, 1.0 + 0.0j, 1.3 - 0.2j, 2.0 + 0.5j])
    np.testing.assert_allclose(evaluator.minus(points), a_minus(points, d, n3_params, quad_spec), atol=1e-8)
    np.testing.assert_allclose(
        evaluator.plus(points[0]), a_branch(points[0], BranchSide.LOWER, d, n3_params, quad_spec), atol=1e-8
    )


@pytest.mark.parametrize("y", [0.3, 1.0, 2.5 + 0.4j])
def test_g_vanishes_for_single_atom(n1_params, quad_spec, y):
    np.testing.assert_allclose(g_matrix(y, distances(n1_params), n1_params, quad_spec), 0.0, atol=1e-14)


@pytest.mark.parametrize("y", [0.3, 1.0, 2.5])
def test_g_real_symmetric_on_real_axis(wide_params, quad_spec, y):
    g = g_matrix(y, distances(wide_params), wide_params, quad_spec)
    np.testing.assert_allclose(g.imag, 0.0, atol=1e-12)
    np.testing.assert_allclose(np.diag(g), 0.0, atol=1e-14)
    assert is_symmetric(g.real)


@pytest.mark.parametrize("y", [0.0, 1e-3, 0.5, 5.0])
def test_e_entries_bounded(wide_params, quad_spec, y):
    bound = wide_params.gamma_prime * 2 * math.pi / (wide_params.c * wide_params.R ** 2)
    e = e_matrix(y, distances(wide_params), wide_params, quad_spec)
    assert np.abs(e).max() <= bound * (1 + 1e-10)


def test_e_large_frequency_limit(n1_params, quad_spec):
    y = 1e3
    limit = n1_params.gamma_prime * math.pi ** 1.5 / n1_params.R ** 3
    e = e_matrix(y, distances(n1_params), n1_params, quad_spec)
    assert e[0, 0] * y == pytest.approx(limit, rel=1e-2)


@pytest.mark.parametrize(
    "y, expected, tolerance",
    [(1e-3, 0.5, 5e-3), (50.0, -math.sqrt(math.pi) / 4 / 50.0, 5e-2)],
)
def test_theta_limits(quad_spec, y, expected, tolerance):
    if expected > 0:
        assert theta(y, quad_spec) == pytest.approx(expected, abs=tolerance)
    else:
        assert theta(y, quad_spec) / expected == pytest.approx(1.0, abs=tolerance)


@pytest.fixture(scope="module")
def five_atoms():
    rng = np.random.default_rng(7)
    params = ModelParams(g=1.0, R=1.0, c=1.0, omega=1.0, positions=rng.uniform(-1.5, 1.5, (5, 3)))
    return distances(params)


@pytest.mark.parametrize("k", [0.2, 1.0, 4.0])
def test_f_matrix_positive_definite(five_atoms, k):
    f = f_matrix(k, five_atoms)
    assert is_hermitian(f)
    assert is_positive_definite(f)


def test_f_matrix_rank_one_at_origin(five_atoms):
    f = f_matrix(0.0, five_atoms)
    np.testing.assert_allclose(f, 4 * np.pi * np.ones((5, 5)), rtol=1e-14)
    assert np.linalg.matrix_rank(f) == 1
    assert not is_positive_definite(f)


@pytest.mark.parametrize("side", [BranchSide.UPPER, BranchSide.LOWER])
def test_branches_bounded_on_sector(n2_params, quad_spec, side):
    d = distances(n2_params)
    radii = np.geomspace(1e-3, 20.0, 10)
    angles = np.linspace(-math.pi / 6, math.pi / 6, 5)
    points = (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
    values = a_branch(points, side, d, n2_params, quad_spec)
    scale = np.abs(a_zero(d, n2_params, quad_spec)).max()
    assert np.all(np.isfinite(values))
    assert np.abs(values).max() <= 25.0 * scale
    far = np.abs(values.reshape(10, 5, 2, 2)[-1]).max()
    assert far < scale
