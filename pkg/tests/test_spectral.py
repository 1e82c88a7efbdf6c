import dataclasses
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from config.settings import settings
from core.kernels import BranchEvaluator, BranchSide, e_matrix, is_positive_definite
from core.model import ModelParams, distances
from solvers.spectral import (
    BranchExpansion,
    DirectBranch,
    PoleKind,
    SampledBranch,
    SpectralConvergenceError,
    branch_function,
    contour_residue,
    count_resonance_poles,
    find_oscillatory_poles,
    find_resonance_poles,
    lambda_branches,
    pole_bound_report,
    resonance_matrix,
    small_coupling_guard,
    zeroth_order_poles,
)


@pytest.fixture(scope="module")
def n2_poles(n2_params, quad_spec):
    return find_resonance_poles(n2_params, quad_spec)


@pytest.mark.parametrize("seed", [0, 1])
def test_eigenvalue_branches_decrease(quad_spec, seed):
    rng = np.random.default_rng(seed)
    params = ModelParams(g=1.0, R=1.0, c=1.0, omega=1.0, positions=rng.uniform(-1.5, 1.5, (5, 3)))
    y = np.geomspace(1e-3, 1e3, 20)
    branches = lambda_branches(params, y, quad_spec)
    assert len(branches) == 5
    for branch in branches:
        assert branch.is_decreasing(tol=1e-10)
    d = distances(params)
    assert all(is_positive_definite(e_matrix(float(v), d, params, quad_spec)) for v in y[::5])


def test_branch_samples_validated(n1_params):
    with pytest.raises(ValueError):
        lambda_branches(n1_params, [1.0, 0.5])


def test_small_coupling_has_no_oscillatory_pole(n2_params, quad_spec):
    assert pole_bound_report(n2_params).certified
    assert find_oscillatory_poles(n2_params, quad_spec) == []


def test_strong_coupling_oscillatory_pole(strong_params, quad_spec):
    assert not pole_bound_report(strong_params).certified
    poles = find_oscillatory_poles(strong_params, quad_spec)
    assert len(poles) == 1
    pole = poles[0]
    p = pole.location.real
    assert pole.kind is PoleKind.OSCILLATORY and p > 0
    d = distances(strong_params)
    assert e_matrix(p, d, strong_params, quad_spec)[0, 0] == pytest.approx(p + strong_params.omega, rel=1e-10)
    residue = pole.residue.real
    assert np.all(np.linalg.eigvalsh(residue) >= -1e-12)
    assert 0.0 < np.trace(residue) < 1.0


def test_dense_grid_locates_same_root(strong_params, quad_spec):
    d = distances(strong_params)
    pole = find_oscillatory_poles(strong_params, quad_spec)[0]
    grid = np.linspace(0.5 * pole.location.real, 1.5 * pole.location.real, 41)
    gap = np.array([y + strong_params.omega - e_matrix(float(y), d, strong_params, quad_spec)[0, 0] for y in grid])
    crossing = np.flatnonzero(np.diff(np.sign(gap)))[0]
    assert grid[crossing] <= pole.location.real <= grid[crossing + 1]


def test_zero_coupling_single_pole(n3_params):
    poles = find_resonance_poles(n3_params.with_coupling(0.0))
    assert len(poles) == 1
    assert poles[0].location == pytest.approx(n3_params.omega)
    assert poles[0].multiplicity == 3


def test_guard_certifies_small_coupling(n2_params, quad_spec):
    report = small_coupling_guard(n2_params, quad_spec)
    assert report.certified
    assert report.to_dict()["lhs"] < report.to_dict()["rhs"]


def test_resonance_poles_are_roots(n2_params, n2_poles, quad_spec):
    assert len(n2_poles) == 2
    for pole in n2_poles:
        assert pole.location.imag < 0
        assert pole.certified and not pole.defective
        sigma = np.linalg.svd(resonance_matrix(pole.location, n2_params, quad_spec), compute_uv=False)
        assert sigma[-1] < 1e-9


def test_residues_sum_near_identity(n2_poles):
    total = sum(pole.residue for pole in n2_poles)
    np.testing.assert_allclose(total, np.eye(2), atol=1e-2)


def test_contour_residue_agrees(n2_params, n2_poles, quad_spec):
    gap = abs(n2_poles[0].location - n2_poles[1].location)
    for pole in n2_poles:
        residue = contour_residue(n2_params, pole.location, 0.25 * gap, spec=quad_spec)
        np.testing.assert_allclose(residue, pole.residue, atol=1e-6)


def test_argument_principle_count(n2_params, quad_spec):
    assert count_resonance_poles(n2_params, quad_spec) == 2


def test_zeroth_order_converges(n1_params, quad_spec):
    errors = []
    for g in (1.0, 0.5, 0.25):
        params = n1_params.with_coupling(g)
        exact = find_resonance_poles(params, quad_spec)[0].location
        approx = zeroth_order_poles(params, quad_spec)[0].location
        errors.append(abs(exact - approx))
    assert errors[0] / errors[2] >= 8.0


def test_expansion_matches_direct_branch(n3_params, quad_spec, monkeypatch):
    direct = branch_function(n3_params, spec=quad_spec)
    assert isinstance(direct, DirectBranch)
    monkeypatch.setattr(settings.spectral, "direct_max_atoms", 0)
    expansion = branch_function(n3_params, spec=quad_spec)
    assert isinstance(expansion, BranchExpansion)
    points = np.array([0.95 - 0.01j, 1.05 + 0.02j])
    np.testing.assert_allclose(expansion.values(points), direct.values(points), atol=1e-8)
    np.testing.assert_allclose(expansion.derivatives(points), direct.derivatives(points), atol=1e-6)


def test_expansion_path_finds_same_poles(n2_params, n2_poles, quad_spec, monkeypatch):
    monkeypatch.setattr(settings.spectral, "direct_max_atoms", 0)
    poles = find_resonance_poles(n2_params, quad_spec)
    np.testing.assert_allclose(
        sorted((p.location for p in poles), key=lambda z: z.real),
        sorted((p.location for p in n2_poles), key=lambda z: z.real), atol=1e-9
    )


def test_convergence_error_keeps_trajectory():
    error = SpectralConvergenceError("no root", [1.0 + 0j, 0.9 - 0.1j])
    assert len(error.trajectory) == 2


def _by_real_part(poles):
    return sorted(poles, key=lambda pole: pole.location.real)


@pytest.mark.parametrize("name", ["n2_params", "n3_params"])
def test_lower_side_poles_are_conjugates(request, quad_spec, name):
    params = request.getfixturevalue(name)
    upper = _by_real_part(find_resonance_poles(params, quad_spec))
    lower = _by_real_part(find_resonance_poles(params, quad_spec, side=BranchSide.LOWER))
    assert len(lower) == len(upper) == params.n_atoms
    for up, lo in zip(upper, lower):
        assert lo.location.imag > 0
        assert abs(np.conj(up.location) - lo.location) <= 1e-8 * abs(up.location)
        np.testing.assert_allclose(lo.residue, np.conj(up.residue), atol=1e-8)


@pytest.mark.parametrize("name", ["n1_params", "n2_params", "n3_params"])
def test_resonance_poles_inside_sector_disk(request, quad_spec, name):
    params = request.getfixturevalue(name)
    radius = params.omega * math.sin(math.pi / 8)
    for pole in find_resonance_poles(params, quad_spec):
        assert abs(pole.location - params.omega) < radius


def test_determinant_fallback_finds_same_poles(n2_params, n2_poles, quad_spec, monkeypatch, caplog):
    def failing(function, params, start, direction, tol, max_iter):
        raise SpectralConvergenceError("eigenvalue tracking disabled", [start])

    monkeypatch.setattr("solvers.spectral._eigen_newton", failing)
    with caplog.at_level("WARNING", logger="solvers.spectral"):
        poles = find_resonance_poles(n2_params, quad_spec)
    assert "trying determinant Newton" in caplog.text
    assert len(poles) == 2
    for fallback, tracked in zip(_by_real_part(poles), _by_real_part(n2_poles)):
        assert fallback.location == pytest.approx(tracked.location, abs=1e-9)
        np.testing.assert_allclose(fallback.residue, tracked.residue, atol=1e-6)


def test_fallback_disabled_above_atom_cap(n2_params, quad_spec, monkeypatch):
    def failing(function, params, start, direction, tol, max_iter):
        raise SpectralConvergenceError("eigenvalue tracking disabled", [start])

    monkeypatch.setattr("solvers.spectral._eigen_newton", failing)
    monkeypatch.setattr(settings.spectral, "determinant_max_atoms", 1)
    with pytest.raises(SpectralConvergenceError, match="disabled"):
        find_resonance_poles(n2_params, quad_spec)


def test_pair_branches_are_exchange_symmetric(n2_params, quad_spec):
    branches = lambda_branches(n2_params, np.geomspace(1e-2, 1e2, 7), quad_spec)
    for branch in branches:
        np.testing.assert_allclose(np.abs(branch.eigenvectors), 1 / math.sqrt(2), atol=1e-10)
    products = sorted(float(branch.eigenvectors[0, 0] * branch.eigenvectors[0, 1]) for branch in branches)
    assert products == pytest.approx([-0.5, 0.5], abs=1e-10)


def _rotated(params):
    rotation = Rotation.from_euler("zyx", [30.0, 45.0, -60.0], degrees=True)
    return dataclasses.replace(params, positions=rotation.apply(params.positions))


@pytest.mark.parametrize("motion", ["translated", "rotated"])
def test_poles_invariant_under_rigid_motion(n3_params, quad_spec, motion):
    moved = n3_params.translated([10.0, -3.0, 0.5]) if motion == "translated" else _rotated(n3_params)
    reference = _by_real_part(find_resonance_poles(n3_params, quad_spec))
    poles = _by_real_part(find_resonance_poles(moved, quad_spec))
    np.testing.assert_allclose(
        [pole.location for pole in poles], [pole.location for pole in reference], atol=1e-9
    )


def test_sampled_branch_derivative_matches_direct(n2_params, quad_spec):
    d = distances(n2_params)
    sampled = SampledBranch(BranchEvaluator(d, n2_params, quad_spec, w_max=2.0))
    direct = DirectBranch(d, n2_params, quad_spec)
    points = np.array([0.97 - 0.02j, 1.1 + 0.01j])
    np.testing.assert_allclose(sampled.values(points), direct.values(points), atol=1e-8)
    np.testing.assert_allclose(sampled.derivatives(points), direct.derivatives(points), atol=1e-4)


def test_indefinite_start_matrix_warns(n2_params, monkeypatch, caplog):
    monkeypatch.setattr("solvers.spectral.e_matrix", lambda y, d, params, spec=None: np.diag([0.1, -0.1]))
    with caplog.at_level("WARNING", logger="solvers.spectral"):
        assert find_oscillatory_poles(n2_params) == []
    assert "not positive definite" in caplog.text
