"""Poles step: spectral report with timing."""

import time
from typing import Optional

from core.model import validate
from core.quadrature import QuadratureSpec
from formats.config_loader import RunConfig
from formats.series_io import to_json
from solvers.evolution import crossover_time, compute_spectral_data
from solvers.spectral import zeroth_order_poles
from utils.logger import get_step_logger


class PolesStep:
    """Oscillatory and resonance poles, bounds and the tail constants."""

    def __init__(
        self,
        config: RunConfig,
        spec: Optional[QuadratureSpec] = None,
        threads: Optional[int] = None,
        log_to_file: bool = True,
    ):
        self._config = config
        self._spec = spec or config.quadrature_spec()
        self._threads = threads
        self._logger = get_step_logger("poles", run_name=config.name, log_to_file=log_to_file)

    def run(self) -> dict:
        """
        Compute the spectral data.

        Returns:
            Report with ``oscillatory``, ``resonance``, ``zeroth_order``,
            ``bound``, ``guard``, the tail matrices and wall-clock timing
        """
        params = self._config.params
        started = time.perf_counter()
        spectral = compute_spectral_data(params, self._spec, threads=self._threads)
        elapsed = time.perf_counter() - started
        zeroth = zeroth_order_poles(params, self._spec) if params.g > 0 else []

        report = {
            "name": self._config.name,
            "model": validate(params).to_dict(),
        }
        report.update(spectral.to_dict())
        report["zeroth_order"] = [pole.to_dict() for pole in zeroth]
        report["crossover_time"] = crossover_time(spectral, self._config.initial)
        report["timing"] = {
            "seconds": elapsed,
            "newton_iterations": sum(pole.iterations for pole in spectral.resonance),
        }
        self._logger.info(
            f"{len(spectral.oscillatory)} oscillatory and {len(spectral.resonance)} resonance "
            f"pole(s) in {elapsed:.3f} s"
        )
        return report

    def render(self, report: dict) -> str:
        return to_json(report)
