"""Logging configuration.

Everything goes to stderr or to files under ``LOGS_DIR``; stdout carries
only the CSV/JSON results.
"""

import logging
import sys
from datetime import datetime
from typing import Optional

from config.settings import settings

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

LIBRARY_PACKAGES = ("core", "solvers", "formats", "utils")


def _file_handler(file_name: str, level: int) -> logging.FileHandler:
    logs_dir = settings.paths.logs_dir
    logs_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(logs_dir / file_name, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    return handler


def setup_logger(
    name: str,
    log_file: Optional[str] = None,
    level: int = logging.INFO,
    include_console: bool = True,
) -> logging.Logger:
    """
    Replace the handlers of logger ``name``.

    Args:
        name: Logger name
        log_file: File name under LOGS_DIR, or None for no file
        level: Level of the logger and its handlers
        include_console: Also write to stderr

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.handlers.clear()

    if log_file:
        logger.addHandler(_file_handler(log_file, level))

    if include_console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(console_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


def get_step_logger(step_name: str, run_name: Optional[str] = None, log_to_file: bool = True) -> logging.Logger:
    """
    Logger for one subcommand.

    With files enabled it writes ``<step>[_<instance>]_<date>.log`` and
    mirrors errors into the shared ``errors_<date>.log``.

    Args:
        step_name: Subcommand name (kernel, solve, poles, compare, continuum)
        run_name: Instance name, appended to the log file name
        log_to_file: False keeps the run free of files

    Returns:
        Step logger
    """
    date_str = datetime.now().strftime("%Y-%m-%d")
    stem = f"{step_name}_{run_name}" if run_name else step_name

    logger = setup_logger(
        step_name,
        log_file=f"{stem}_{date_str}.log" if log_to_file else None,
        level=logging.INFO,
    )
    if log_to_file:
        logger.addHandler(_file_handler(f"errors_{date_str}.log", logging.ERROR))
    return logger


def configure_library_logging(level: int = logging.WARNING) -> None:
    """Send the numerical packages' loggers to stderr at ``level``."""
    for name in LIBRARY_PACKAGES:
        setup_logger(name, level=level)
