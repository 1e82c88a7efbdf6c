"""Retry logic for refinable numerical procedures."""

import functools
import logging
from typing import Callable, Type

logger = logging.getLogger(__name__)


def retry_with_refinement(
    max_attempts: int = 6,
    exceptions: tuple[Type[Exception], ...] = (Exception,),
) -> Callable:
    """
    Retry decorator for procedures that can densify their own sampling.

    The wrapped function must accept a ``refinement`` keyword. The first
    call uses ``refinement=0``; each caught failure re-invokes it with the
    next level. After ``max_attempts`` refinements the last exception is
    re-raised.

    Args:
        max_attempts: Maximum number of refinements after the first call
        exceptions: Tuple of exception types to catch

    Returns:
        Decorated function
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            failure = None
            for refinement in range(max_attempts + 1):
                try:
                    result = func(*args, refinement=refinement, **kwargs)
                except exceptions as e:
                    failure = e
                    logger.debug(f"{func.__name__} failed at refinement {refinement}: {e}")
                    continue
                if refinement:
                    logger.info(f"{func.__name__} succeeded at refinement {refinement}")
                return result
            logger.warning(f"{func.__name__} failed after {max_attempts} refinements")
            raise failure

        return wrapper
    return decorator
