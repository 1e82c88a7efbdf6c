"""Solve step: β(t) by the direct, contour or asymptotic evaluator."""

from typing import Optional

from core.quadrature import QuadratureSpec
from formats.config_loader import RunConfig
from formats.series_io import frame_to_csv, series_frame
from solvers.direct_solver import TimeGrid, TimeSeries, solve_volterra
from solvers.evolution import TailVariant, compute_spectral_data, evolve_asymptotic, evolve_contour
from utils.logger import get_step_logger
from utils.progress import ProgressTracker

METHODS = ("direct", "contour", "asymptotic")
DEFAULT_HORIZON = 20.0


class SolveStep:
    """Dispatch one of the three evaluators on a uniform grid."""

    def __init__(
        self,
        config: RunConfig,
        spec: Optional[QuadratureSpec] = None,
        threads: Optional[int] = None,
        show_progress: bool = True,
        log_to_file: bool = True,
    ):
        self._config = config
        self._spec = spec or config.quadrature_spec()
        self._threads = threads
        self._show_progress = show_progress
        self._logger = get_step_logger("solve", run_name=config.name, log_to_file=log_to_file)

    def _grid(self, horizon: Optional[float], step: Optional[float], start: float) -> TimeGrid:
        params = self._config.params
        overrides = self._config.grid
        horizon = horizon or overrides.horizon or DEFAULT_HORIZON / params.omega
        step = step or overrides.step
        if step is None and overrides.samples:
            step = (horizon - start) / overrides.samples
        if step is None:
            return TimeGrid.default(params, horizon, start)
        return TimeGrid.covering(horizon, step, start)

    def run(
        self,
        method: str = "direct",
        horizon: Optional[float] = None,
        step: Optional[float] = None,
        t0: Optional[float] = None,
        tail: str = "improved",
    ) -> TimeSeries:
        """
        Compute β(t) on [t0, horizon].

        Args:
            method: direct, contour or asymptotic
            horizon: Last time (config grid, then 20/Ω)
            step: Grid step (config grid, then the default step rule)
            t0: First output time; defaults to 0, or one step for the asymptotic method
            tail: lead, improved or none (asymptotic only)

        Returns:
            TimeSeries
        """
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
        params, initial = self._config.params, self._config.initial
        if t0 is None:
            t0 = self._config.grid.t0
        self._logger.info(f"Solving {self._config.name} with the {method} evaluator")

        if method == "direct":
            grid = self._grid(horizon, step, 0.0)
            with ProgressTracker("Time stepping", grid.steps, enabled=self._show_progress) as progress:
                series = solve_volterra(
                    params, initial, grid, spec=self._spec, threads=self._threads, progress=progress
                )
            return self._trim(series, t0 or 0.0)

        if method == "contour":
            grid = self._grid(horizon, step, t0 or 0.0)
            spectral = compute_spectral_data(params, self._spec, threads=self._threads)
            return evolve_contour(params, initial, grid, spectral=spectral, spec=self._spec, threads=self._threads)

        if t0 is None:
            t0 = self._grid(horizon, step, 0.0).step
        grid = self._grid(horizon, step, t0)
        spectral = compute_spectral_data(params, self._spec, threads=self._threads)
        return evolve_asymptotic(params, initial, grid, tail=TailVariant(tail), spectral=spectral, spec=self._spec)

    def _trim(self, series: TimeSeries, t0: float) -> TimeSeries:
        """Drop the nodes before t0 from a series that starts at 0."""
        skip = int(round(t0 / series.grid.step))
        if skip == 0:
            return series
        if skip >= series.grid.steps:
            raise ValueError(f"t0={t0:g} leaves fewer than two grid nodes")
        grid = TimeGrid(step=series.grid.step, steps=series.grid.steps - skip, start=skip * series.grid.step)
        return TimeSeries(grid=grid, values=series.values[skip:], provenance=series.provenance)

    def render(self, series: TimeSeries, breakdown: bool = False) -> str:
        return frame_to_csv(series_frame(series, breakdown=breakdown))
