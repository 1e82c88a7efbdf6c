"""CSV and JSON emission of results.

CSV: comma separated, ``\\n`` line endings, header row, 17 significant
digits. JSON: UTF-8, indent 2, keys in insertion order.
"""

import io
import json
import logging
from pathlib import Path
from typing import Any, Optional, Union

import click
import numpy as np
import pandas as pd

from solvers.direct_solver import Provenance, TimeGrid, TimeSeries

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
# Relative spread of the time steps tolerated when rebuilding a grid
GRID_TOL = 1e-9


class SeriesFormatError(ValueError):
    """CSV content does not describe a time series."""
    pass


def _columns(prefix: str, values: np.ndarray) -> dict[str, np.ndarray]:
    columns = {}
    for j in range(values.shape[1]):
        columns[f"re_{prefix}_{j + 1}"] = values[:, j].real
        columns[f"im_{prefix}_{j + 1}"] = values[:, j].imag
    return columns


def series_frame(series: TimeSeries, breakdown: bool = False) -> pd.DataFrame:
    """Columns ``t, re_beta_1, im_beta_1, ...`` plus ``re_<term>_j`` per component."""
    columns: dict[str, np.ndarray] = {"t": series.times}
    columns.update(_columns("beta", series.values))
    if breakdown:
        for term, values in series.components.items():
            columns.update(_columns(term, values))
    return pd.DataFrame(columns)


def kernel_frame(u: np.ndarray, values: np.ndarray) -> pd.DataFrame:
    """Columns ``u, re_K_j_l, im_K_j_l`` for pairs j ≤ l; ``values`` is (len(u), N, N)."""
    columns: dict[str, np.ndarray] = {"u": np.asarray(u, dtype=float)}
    n = values.shape[1]
    for j in range(n):
        for l in range(j, n):
            columns[f"re_K_{j + 1}_{l + 1}"] = values[:, j, l].real
            columns[f"im_K_{j + 1}_{l + 1}"] = values[:, j, l].imag
    return pd.DataFrame(columns)


def frame_to_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def to_json(payload: Any) -> str:
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def emit(text: str, out: Optional[Path] = None) -> None:
    """Write to ``out`` or standard output."""
    if out is None:
        click.echo(text, nl=False)
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logger.info(f"Wrote {out}")


def read_series_csv(source: Union[Path, str], provenance: Provenance = Provenance.DIRECT) -> TimeSeries:
    """
    Rebuild a TimeSeries from a CSV written by :func:`series_frame`.

    Raises:
        SeriesFormatError: Missing columns or a non-uniform time column
    """
    frame = pd.read_csv(source)
    if "t" not in frame.columns:
        raise SeriesFormatError(f"{source}: no t column")
    n_atoms = sum(1 for column in frame.columns if column.startswith("re_beta_"))
    if n_atoms == 0:
        raise SeriesFormatError(f"{source}: no re_beta_j columns")
    times = frame["t"].to_numpy(dtype=float)
    if times.size < 2:
        raise SeriesFormatError(f"{source}: need at least two rows")
    steps = np.diff(times)
    step = float(steps.mean())
    if step <= 0 or np.max(np.abs(steps - step)) > GRID_TOL * max(1.0, abs(times[-1])):
        raise SeriesFormatError(f"{source}: time column is not a uniform grid")
    values = np.empty((times.size, n_atoms), dtype=complex)
    for j in range(n_atoms):
        try:
            values[:, j] = frame[f"re_beta_{j + 1}"].to_numpy() + 1j * frame[f"im_beta_{j + 1}"].to_numpy()
        except KeyError as e:
            raise SeriesFormatError(f"{source}: missing column {e.args[0]}") from None
    grid = TimeGrid(step=step, steps=times.size - 1, start=float(times[0]))
    return TimeSeries(grid=grid, values=values, provenance=provenance)
