import numpy as np
import pytest

from core.kernels import memory_kernel
from core.model import InitialState
from core.quadrature import QuadratureSpec
from solvers.direct_solver import (
    Provenance,
    SolverError,
    TimeGrid,
    TimeSeries,
    kernel_table,
    solve_volterra,
)


def test_grid_covering_and_refinement():
    grid = TimeGrid.covering(1.0, 0.3)
    assert grid.steps == 4
    assert grid.end == pytest.approx(1.2)
    fine = grid.refined()
    assert fine.step == pytest.approx(0.15) and fine.steps == 8
    np.testing.assert_allclose(fine.nodes[::2], grid.nodes)


def test_default_grid_resolves_both_scales(n1_params):
    grid = TimeGrid.default(n1_params.with_coupling(0.1), 2.0)
    assert grid.step == pytest.approx(0.05)
    assert grid.nodes[-1] >= 2.0


def test_grid_rejects_bad_values():
    with pytest.raises(ValueError):
        TimeGrid(step=0.0, steps=3)
    with pytest.raises(ValueError):
        TimeGrid(step=0.1, steps=0)


def test_series_rows_must_match_grid():
    with pytest.raises(ValueError):
        TimeSeries(grid=TimeGrid(0.1, 3), values=np.zeros((3, 1)), provenance=Provenance.DIRECT)


def test_zero_coupling_is_constant(n2_params):
    params = n2_params.with_coupling(0.0)
    initial = InitialState(np.array([0.6, 0.8j]))
    series = solve_volterra(params, initial, TimeGrid.covering(5.0, 0.1))
    np.testing.assert_array_equal(series.values, np.broadcast_to(initial.beta0, series.values.shape))
    assert series.provenance is Provenance.DIRECT


def test_kernel_table_entries(n3_params, quad_spec):
    grid = TimeGrid.covering(0.6, 0.2)
    table = kernel_table(n3_params, grid, spec=quad_spec, threads=2, chunk=2)
    assert table.matrices().shape == (4, 3, 3)
    r = float(table.distances.r[0, 2])
    assert table.entry(0, 2, 3) == pytest.approx(memory_kernel(0.6, r, n3_params, quad_spec), rel=1e-10)
    np.testing.assert_allclose(table.matrices()[2], table.matrices()[2].T)


def test_kernel_failure_names_entry(n2_params):
    with pytest.raises(SolverError, match="j=1"):
        kernel_table(n2_params, TimeGrid.covering(1.0, 0.1), spec=QuadratureSpec(max_panels=2))


def test_initial_state_size_checked(n2_params):
    with pytest.raises(SolverError):
        solve_volterra(n2_params, InitialState.ground_first(3), TimeGrid.covering(1.0, 0.1))


def test_grid_must_start_at_zero(n1_params):
    with pytest.raises(SolverError):
        solve_volterra(n1_params, InitialState.ground_first(1), TimeGrid(0.1, 5, start=0.5))


def test_norm_does_not_grow(n2_params, quad_spec):
    series = solve_volterra(n2_params, InitialState.ground_first(2), TimeGrid.covering(5.0, 0.05), spec=quad_spec)
    assert np.all(series.norms() <= 1.0 + 1e-6)
    assert series.norms()[-1] < 1.0


def test_second_order_convergence(n1_params, quad_spec):
    params = n1_params.with_coupling(1.0)
    initial = InitialState.ground_first(1)
    coarse = TimeGrid.covering(2.0, 0.1)
    solutions = [
        solve_volterra(params, initial, grid, spec=quad_spec).values[-1]
        for grid in (coarse, coarse.refined(), coarse.refined().refined())
    ]
    ratio = abs(solutions[0] - solutions[1]) / abs(solutions[1] - solutions[2])
    assert 3.6 <= ratio <= 4.4


def test_precomputed_table_reused(n2_params, quad_spec):
    grid = TimeGrid.covering(1.0, 0.1)
    table = kernel_table(n2_params, grid, spec=quad_spec)
    initial = InitialState.ground_first(2)
    np.testing.assert_allclose(
        solve_volterra(n2_params, initial, grid, table=table).values,
        solve_volterra(n2_params, initial, grid, spec=quad_spec).values,
        atol=1e-14,
    )


def test_solution_linear_in_initial_state(n2_params, quad_spec):
    grid = TimeGrid.covering(2.0, 0.05)
    table = kernel_table(n2_params, grid, spec=quad_spec)
    beta0 = np.array([0.6, 0.8j])
    alpha = 0.3 - 0.7j
    base = solve_volterra(n2_params, InitialState(beta0), grid, table=table)
    scaled = solve_volterra(n2_params, InitialState(alpha * beta0), grid, table=table)
    np.testing.assert_allclose(scaled.values, alpha * base.values, atol=1e-13)


def test_restart_forgets_history(strong_params, quad_spec):
    grid = TimeGrid(step=0.05, steps=80)
    table = kernel_table(strong_params, grid, spec=quad_spec)
    continuous = solve_volterra(strong_params, InitialState.ground_first(1), grid, table=table)
    cut = 20
    remaining = TimeGrid(step=0.05, steps=grid.steps - cut)
    restarted = solve_volterra(
        strong_params, InitialState(continuous.values[cut]), remaining, spec=quad_spec
    )
    np.testing.assert_allclose(restarted.values[0], continuous.values[cut])
    gap = np.abs(restarted.values[1:] - continuous.values[cut + 1:]).max()
    assert gap > 1e-3
