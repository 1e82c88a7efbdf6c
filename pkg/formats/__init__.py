"""Input and output formats: JSON instances, CSV series, JSON reports."""

from .config_loader import ConfigError, RunConfig, load_run_config, parse_run_config
from .series_io import SeriesFormatError, emit, read_series_csv, series_frame, to_json

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_run_config",
    "parse_run_config",
    "SeriesFormatError",
    "emit",
    "read_series_csv",
    "series_frame",
    "to_json",
]
