"""Continuum step: finite-N sequence for a fixed density and g̃."""

from pathlib import Path
from typing import Optional

from config.settings import settings
from core.quadrature import QuadratureSpec
from formats.config_loader import ConfigError, RunConfig
from formats.series_io import to_json
from solvers.continuum import ContinuumRecord, ContinuumRun, continuum_observables
from utils.logger import get_step_logger
from utils.progress import ProgressTracker, StateManager, fingerprint


class ContinuumStep:
    """Run every N of the configured list, resumable per N."""

    def __init__(
        self,
        config: RunConfig,
        spec: Optional[QuadratureSpec] = None,
        threads: Optional[int] = None,
        state_dir: Optional[Path] = None,
        show_progress: bool = True,
        log_to_file: bool = True,
    ):
        if config.continuum is None:
            raise ConfigError(f"{config.name}: no continuum section (density, g_tilde, n_list)")
        self._config = config
        self._spec = spec or config.quadrature_spec()
        self._threads = threads
        self._show_progress = show_progress
        self._logger = get_step_logger("continuum", run_name=config.name, log_to_file=log_to_file)
        setup = config.continuum
        digest = fingerprint({
            "g_tilde": setup.g_tilde,
            "density": setup.density.to_dict(),
            "seed": setup.seed,
            "horizon": setup.horizon,
            "samples": setup.samples,
            "R": config.params.R,
            "c": config.params.c,
            "omega": config.params.omega,
            "rel_tol": self._spec.rel_tol,
        })
        self._state_manager = StateManager(
            f"continuum_{config.name}", state_dir or settings.paths.state_dir, setup_digest=digest
        )

    def run(self, resume: bool = False) -> ContinuumRun:
        """
        Compute the records for every N.

        Args:
            resume: Reuse records of N values finished by an earlier run

        Returns:
            ContinuumRun with one record per N
        """
        setup = self._config.continuum
        run = ContinuumRun(
            g_tilde=setup.g_tilde,
            n_list=setup.n_list,
            seed=setup.seed,
            density=setup.density,
            horizon=setup.horizon,
            samples=setup.samples,
        )

        if resume and self._state_manager.exists():
            self._state_manager.load()
            for n in self._state_manager.finished() & set(run.n_list):
                run.records[n] = ContinuumRecord.from_dict(self._state_manager.record(n))
            self._logger.info(f"Resuming with {len(run.records)} finished N value(s)")
        else:
            self._state_manager.reset()
        self._state_manager.set_total(len(run.n_list))

        with ProgressTracker(
            "Continuum sequence", len(run.n_list), self._state_manager, enabled=self._show_progress
        ) as progress:
            for n in run.n_list:
                if n in run.records:
                    continue
                self._logger.info(f"N={n}: g={setup.g_tilde / n ** 0.5:.6g}")
                try:
                    record = continuum_observables(
                        setup.g_tilde,
                        setup.density,
                        n,
                        setup.seed,
                        setup.horizon,
                        base=self._config.params,
                        samples=setup.samples,
                        spec=self._spec,
                        threads=self._threads,
                    )
                except Exception as e:
                    self._logger.error(f"N={n} failed: {e}")
                    self._state_manager.mark_failed(n, str(e))
                    self._state_manager.save()
                    raise
                run.records[n] = record
                self._state_manager.mark_finished(n, record.to_dict())
                self._state_manager.save()
                progress.advance()

        if not run.differences_decreasing():
            self._logger.warning("Successive differences of m(t) do not decrease with N")
        return run

    def render(self, run: ContinuumRun) -> str:
        differences = run.successive_differences()
        return to_json({
            "g_tilde": run.g_tilde,
            "seed": run.seed,
            "density": run.density.to_dict(),
            "records": [run.records[n].to_dict() for n in run.n_list if n in run.records],
            "successive_max_differences": [float(diff.max()) for diff in differences],
            "differences_decreasing": run.differences_decreasing(),
        })
