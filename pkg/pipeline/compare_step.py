"""Compare step: error report between two series files."""

from pathlib import Path

from formats.series_io import read_series_csv, to_json
from solvers.evolution import compare
from utils.logger import get_step_logger


class CompareStep:
    """Read two CSV series and report their differences."""

    def __init__(self, log_to_file: bool = True):
        self._logger = get_step_logger("compare", log_to_file=log_to_file)

    def run(self, path_a: Path, path_b: Path) -> dict:
        a = read_series_csv(path_a)
        b = read_series_csv(path_b)
        report = compare(a, b)
        self._logger.info(f"Compared {path_a} and {path_b}: max error {report.max_abs:.3e}")
        return {"a": str(path_a), "b": str(path_b), **report.to_dict()}

    def render(self, report: dict) -> str:
        return to_json(report)
