"""Kernel step: tabulate K_jl(u) on requested lags."""

from typing import Optional, Sequence

import numpy as np
import pandas as pd

from core.kernels import memory_kernel_grid
from core.model import distances
from core.quadrature import QuadratureError, QuadratureSpec
from formats.config_loader import RunConfig
from formats.series_io import frame_to_csv, kernel_frame
from solvers.direct_solver import SolverError
from utils.logger import get_step_logger


class KernelStep:
    """Memory kernel for every atom pair at user-chosen lags."""

    def __init__(self, config: RunConfig, spec: Optional[QuadratureSpec] = None, log_to_file: bool = True):
        self._config = config
        self._spec = spec or config.quadrature_spec()
        self._logger = get_step_logger("kernel", run_name=config.name, log_to_file=log_to_file)

    def run(self, u_values: Sequence[float]) -> pd.DataFrame:
        """
        Evaluate K(u, r_jl) for all lags.

        Args:
            u_values: Lags, at least one

        Returns:
            DataFrame with a ``u`` column and re/im columns per pair j ≤ l
        """
        u = np.asarray(list(u_values), dtype=float)
        if u.size == 0:
            raise ValueError("no lags requested")
        params = self._config.params
        d = distances(params)
        self._logger.info(f"Evaluating the kernel at {u.size} lags for {d.unique.size} distinct distances")

        per_distance = np.empty((u.size, d.unique.size), dtype=complex)
        for k, r in enumerate(d.unique):
            try:
                per_distance[:, k] = memory_kernel_grid(u, float(r), params, self._spec).value
            except QuadratureError as e:
                j, l = d.pair_for(k)
                raise SolverError(f"kernel quadrature failed for pair ({j}, {l}): {e}") from e
        return kernel_frame(u, d.expand(per_distance))

    def render(self, frame: pd.DataFrame) -> str:
        return frame_to_csv(frame)
