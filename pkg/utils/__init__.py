"""Utilities module for logging, progress tracking, and retry logic."""

from .logger import setup_logger, get_logger, get_step_logger
from .progress import ProgressTracker, StateManager
from .retry import retry_with_refinement

__all__ = [
    "setup_logger",
    "get_logger",
    "get_step_logger",
    "ProgressTracker",
    "StateManager",
    "retry_with_refinement",
]
