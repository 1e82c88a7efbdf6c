"""Configuration module for the emission toolkit."""

from .settings import settings

__all__ = ["settings"]
