"""Model definition, quadrature engine and kernel functions."""

from .model import DistanceMatrix, InitialState, ModelParams, ModelValidationError, distances, validate
from .quadrature import DomainError, QuadratureError, QuadratureSpec

__all__ = [
    "DistanceMatrix",
    "InitialState",
    "ModelParams",
    "ModelValidationError",
    "distances",
    "validate",
    "DomainError",
    "QuadratureError",
    "QuadratureSpec",
]
