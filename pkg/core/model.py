"""Problem definition: physical constants, atom positions, initial amplitudes."""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

COINCIDENCE_TOL = 1e-12


class ModelValidationError(Exception):
    """Problem instance violates a hard invariant."""
    pass


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Physical constants and atom positions of one problem instance.

    Construction only normalises the inputs; use :func:`validate` to check
    them. Derived couplings: ``gamma_prime = g²/(2π)³`` and
    ``gamma = gamma_prime / c``.
    """
    g: float
    R: float
    c: float
    omega: float
    positions: np.ndarray

    def __post_init__(self):
        positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ModelValidationError(
                f"positions must be a list of [x, y, z] points, got shape {positions.shape}"
            )
        object.__setattr__(self, "positions", _frozen_array(positions, float))
        for name in ("g", "R", "c", "omega"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def n_atoms(self) -> int:
        return int(self.positions.shape[0])

    @property
    def gamma_prime(self) -> float:
        return self.g ** 2 / (2.0 * np.pi) ** 3

    @property
    def gamma(self) -> float:
        return self.gamma_prime / self.c

    def with_coupling(self, g: float) -> "ModelParams":
        """Copy with a different coupling strength."""
        return dataclasses.replace(self, g=g)

    def translated(self, shift) -> "ModelParams":
        """Copy with every atom moved by the same vector."""
        return dataclasses.replace(self, positions=self.positions + np.asarray(shift, dtype=float))

    def nondimensional(self) -> "ModelParams":
        """Rescale to c = Ω = 1: lengths in c/Ω, times in 1/Ω.

        The coupling transforms as g → g·sqrt(Ω/c³) so that the Volterra
        system keeps its form in the new units.
        """
        length = self.c / self.omega
        return ModelParams(
            g=self.g * np.sqrt(self.omega / self.c ** 3),
            R=self.R / length,
            c=1.0,
            omega=1.0,
            positions=self.positions / length,
        )


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Pairwise distances r_jl = |x_j - x_l| with the distinct-value index.

    ``unique`` holds the distinct distances (exact duplicates collapse, e.g.
    lattice bonds) and ``inverse`` maps every (j, l) entry to its position in
    ``unique``, so per-distance results expand with ``values[..., inverse]``.
    """
    r: np.ndarray
    unique: np.ndarray = field(init=False)
    inverse: np.ndarray = field(init=False)

    def __post_init__(self):
        r = _frozen_array(self.r, float)
        object.__setattr__(self, "r", r)
        unique, inverse = np.unique(r, return_inverse=True)
        object.__setattr__(self, "unique", _frozen_array(unique, float))
        object.__setattr__(self, "inverse", _frozen_array(inverse.reshape(r.shape), int))

    @property
    def n(self) -> int:
        return int(self.r.shape[0])

    @property
    def max_distance(self) -> float:
        return float(self.r.max())

    def expand(self, per_distance: np.ndarray) -> np.ndarray:
        """Scatter values computed on ``unique`` (last axis) into N×N matrices."""
        per_distance = np.asarray(per_distance)
        return per_distance[..., self.inverse]

    def pair_for(self, unique_index: int) -> tuple[int, int]:
        """First (j, l) pair, 1-based, carrying the given distinct distance."""
        j, l = np.argwhere(self.inverse == unique_index)[0]
        return int(j) + 1, int(l) + 1


@dataclass(frozen=True, eq=False)
class InitialState:
    """Initial amplitudes β(0)."""
    beta0: np.ndarray

    def __post_init__(self):
        beta0 = np.atleast_1d(np.asarray(self.beta0, dtype=complex))
        object.__setattr__(self, "beta0", _frozen_array(beta0, complex))
        norm = float(np.linalg.norm(beta0))
        if norm > 1.0 + 1e-12:
            logger.warning(f"Initial state norm {norm:.6g} exceeds 1")

    @classmethod
    def ground_first(cls, n_atoms: int) -> "InitialState":
        """Excitation on the first atom: (1, 0, ..., 0)."""
        beta0 = np.zeros(n_atoms, dtype=complex)
        beta0[0] = 1.0
        return cls(beta0)

    @property
    def n_atoms(self) -> int:
        return int(self.beta0.shape[0])


@dataclass
class ValidationReport:
    """Result of :func:`validate`."""
    checks: dict[str, bool]
    n_atoms: int
    gamma: float
    gamma_prime: float
    min_distance: float
    max_distance: float

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": dict(self.checks),
            "n_atoms": self.n_atoms,
            "gamma": self.gamma,
            "gamma_prime": self.gamma_prime,
            "min_distance": self.min_distance,
            "max_distance": self.max_distance,
        }


def distances(params: ModelParams) -> DistanceMatrix:
    """Exact Euclidean distance matrix of the atom positions."""
    x = params.positions
    diff = x[:, None, :] - x[None, :, :]
    r = np.sqrt(np.einsum("jlk,jlk->jl", diff, diff))
    # Enforce exact symmetry and a zero diagonal
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 0.0)
    return DistanceMatrix(r)


def validate(params: ModelParams, initial: Optional[InitialState] = None) -> ValidationReport:
    """
    Check the model invariants and report derived quantities.

    Args:
        params: Problem instance
        initial: Optional initial state, checked for matching size

    Returns:
        Pass/fail per invariant plus γ, γ', N and the distance range

    Raises:
        ModelValidationError: Two positions coincide
    """
    n = params.n_atoms
    d = distances(params)
    coincident = np.argwhere(np.triu(d.r <= COINCIDENCE_TOL, k=1))
    if len(coincident):
        j, l = coincident[0]
        raise ModelValidationError(f"positions {j + 1},{l + 1} coincide")

    checks = {
        "n_atoms_positive": n >= 1,
        "R_positive": params.R > 0,
        "c_positive": params.c > 0,
        "omega_positive": params.omega > 0,
        "g_nonnegative": params.g >= 0,
        "positions_finite": bool(np.all(np.isfinite(params.positions))),
    }
    if initial is not None:
        checks["initial_state_size"] = initial.n_atoms == n

    off_diagonal = d.r[~np.eye(n, dtype=bool)]
    return ValidationReport(
        checks=checks,
        n_atoms=n,
        gamma=params.gamma if params.c > 0 else float("nan"),
        gamma_prime=params.gamma_prime,
        min_distance=float(off_diagonal.min()) if off_diagonal.size else 0.0,
        max_distance=float(off_diagonal.max()) if off_diagonal.size else 0.0,
    )
