"""Finite-N runs towards the continuum limit g = g̃/√N."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erf

from core.model import InitialState, ModelParams, validate
from core.quadrature import QuadratureSpec
from solvers.direct_solver import TimeGrid
from solvers.evolution import compute_spectral_data, evolve_contour

logger = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-12
MIN_ACCEPTANCE = 1e-4
MIN_PROPOSALS = 10_000
BATCH = 1024


class SamplingError(Exception):
    """Rejection sampling cannot produce the requested atoms."""
    pass


class Density(ABC):
    """Normalised atom density supported in an axis-aligned box."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != (3,) or self.upper.shape != (3,) or np.any(self.upper <= self.lower):
            raise ValueError(f"invalid bounding box {self.lower} .. {self.upper}")

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """ρ at points of shape (m, 3)."""

    @property
    @abstractmethod
    def peak(self) -> float:
        """max ρ, the rejection envelope."""

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @classmethod
    def from_dict(cls, config: dict) -> "Density":
        kind = config.get("type")
        if kind == "uniform_ball":
            return UniformBall(config["center"], float(config["radius"]))
        if kind == "gaussian":
            return GaussianDensity(config["center"], float(config["sigma"]), config["box"])
        raise ValueError(f"unknown density type: {kind!r}")

    @abstractmethod
    def to_dict(self) -> dict:
        """Config form accepted by :meth:`from_dict`."""


class UniformBall(Density):
    """ρ = 3/(4πa³) inside the ball of radius a."""

    def __init__(self, center, radius: float):
        if radius <= 0:
            raise ValueError(f"radius must be positive, got {radius}")
        self.center = np.asarray(center, dtype=float)
        self.radius = radius
        super().__init__(self.center - radius, self.center + radius)
        self._value = 3.0 / (4.0 * math.pi * radius ** 3)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        inside = np.linalg.norm(np.atleast_2d(x) - self.center, axis=1) <= self.radius
        return np.where(inside, self._value, 0.0)

    @property
    def peak(self) -> float:
        return self._value

    def to_dict(self) -> dict:
        return {"type": "uniform_ball", "center": self.center.tolist(), "radius": self.radius}


class GaussianDensity(Density):
    """Isotropic Gaussian truncated to a box, normalised with erf per axis.

    ``box`` is [[x_lo, y_lo, z_lo], [x_hi, y_hi, z_hi]].
    """

    def __init__(self, center, sigma: float, box):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        box = np.asarray(box, dtype=float)
        super().__init__(box[0], box[1])
        self.center = np.asarray(center, dtype=float)
        self.sigma = sigma
        scale = math.sqrt(2.0) * sigma
        per_axis = math.sqrt(math.pi / 2.0) * sigma * (
            erf((self.upper - self.center) / scale) - erf((self.lower - self.center) / scale)
        )
        self._norm = float(np.prod(per_axis))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=1)
        r2 = np.sum((x - self.center) ** 2, axis=1)
        return np.where(inside, np.exp(-r2 / (2.0 * self.sigma ** 2)) / self._norm, 0.0)

    @property
    def peak(self) -> float:
        nearest = np.clip(self.center, self.lower, self.upper)
        return float(self.evaluate(nearest[None, :])[0])

    def to_dict(self) -> dict:
        return {
            "type": "gaussian",
            "center": self.center.tolist(),
            "sigma": self.sigma,
            "box": [self.lower.tolist(), self.upper.tolist()],
        }


def sample_atoms(density: Density, n: int, seed: int) -> np.ndarray:
    """
    ``n`` positions by rejection sampling against the bounding box.

    Deterministic for a fixed seed. Candidates within 1e-12 of an accepted
    atom are rejected.

    Raises:
        SamplingError: Acceptance rate below 1e-4 after at least 10⁴ proposals
    """
    if n < 1:
        raise ValueError(f"need at least one atom, got {n}")
    rng = np.random.default_rng(seed)
    accepted = np.empty((0, 3))
    proposals = 0
    while accepted.shape[0] < n:
        if proposals >= MIN_PROPOSALS and accepted.shape[0] / proposals < MIN_ACCEPTANCE:
            raise SamplingError(
                f"acceptance rate {accepted.shape[0] / proposals:.2e} after {proposals} proposals; "
                "use a tighter bounding box or a wider density"
            )
        candidates = density.lower + (density.upper - density.lower) * rng.random((BATCH, 3))
        keep = rng.random(BATCH) * density.peak < density.evaluate(candidates)
        proposals += BATCH
        for x in candidates[keep]:
            if accepted.shape[0] and np.min(np.linalg.norm(accepted - x, axis=1)) <= DUPLICATE_TOL:
                continue
            accepted = np.vstack([accepted, x])
            if accepted.shape[0] == n:
                break
    logger.debug(f"Sampled {n} atoms from {proposals} proposals")
    return accepted


@dataclass
class ContinuumRecord:
    """Observables of one finite-N instance."""
    n_atoms: int
    g: float
    bound_quantity: float
    times: np.ndarray
    mean_amplitude: np.ndarray
    resonance: list[complex]
    oscillatory: list[float]

    def to_dict(self) -> dict:
        return {
            "n": self.n_atoms,
            "g": self.g,
            "bound_quantity": self.bound_quantity,
            "times": self.times.tolist(),
            "m_re": self.mean_amplitude.real.tolist(),
            "m_im": self.mean_amplitude.imag.tolist(),
            "resonance": [[z.real, z.imag] for z in self.resonance],
            "oscillatory": list(self.oscillatory),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "ContinuumRecord":
        return cls(
            n_atoms=int(record["n"]),
            g=float(record["g"]),
            bound_quantity=float(record["bound_quantity"]),
            times=np.asarray(record["times"], dtype=float),
            mean_amplitude=np.asarray(record["m_re"]) + 1j * np.asarray(record["m_im"]),
            resonance=[complex(re, im) for re, im in record["resonance"]],
            oscillatory=[float(p) for p in record["oscillatory"]],
        )


def continuum_observables(
    g_tilde: float,
    density: Density,
    n: int,
    seed: int,
    horizon: float,
    base: ModelParams,
    samples: int = 64,
    spec: Optional[QuadratureSpec] = None,
    threads: Optional[int] = None,
) -> ContinuumRecord:
    """
    Poles and the mean amplitude m(t) = (1/N) Σ_j β_j(t) for β(0) = (1, ..., 1).

    Atoms are drawn from ``density``; R, c and Ω come from ``base`` and
    g = g̃/√N. The dynamics are linear, so the run uses the normalised state
    (1, ..., 1)/√N and rescales.
    """
    positions = sample_atoms(density, n, seed)
    params = ModelParams(
        g=g_tilde / math.sqrt(n), R=base.R, c=base.c, omega=base.omega, positions=positions
    )
    validate(params)
    spectral = compute_spectral_data(params, spec, threads=threads)
    initial = InitialState(np.full(n, 1.0 / math.sqrt(n), dtype=complex))
    grid = TimeGrid.covering(horizon, horizon / samples)
    series = evolve_contour(params, initial, grid, spectral=spectral, spec=spec, threads=threads)
    mean = series.values.sum(axis=1) / math.sqrt(n)

    for pole in spectral.resonance:
        if pole.location.imag >= 0:
            logger.warning(f"N={n}: resonance pole {pole.location:.9g} is not below the real axis")
    logger.info(f"N={n}: {len(spectral.resonance)} resonance and {len(spectral.oscillatory)} oscillatory poles")
    return ContinuumRecord(
        n_atoms=n,
        g=params.g,
        bound_quantity=n * params.g ** 2 / (params.c * params.omega * params.R ** 2),
        times=series.times,
        mean_amplitude=mean,
        resonance=[complex(pole.location) for pole in spectral.resonance],
        oscillatory=[float(pole.location.real) for pole in spectral.oscillatory],
    )


@dataclass
class ContinuumRun:
    """Sequence of finite-N instances sharing g̃, density and seed."""
    g_tilde: float
    n_list: list[int]
    seed: int
    density: Density
    horizon: float
    samples: int = 64
    records: dict[int, ContinuumRecord] = field(default_factory=dict)

    def __post_init__(self):
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError(f"N list must be strictly increasing, got {self.n_list}")
        if any(n < 1 for n in self.n_list):
            raise ValueError(f"N values must be positive, got {self.n_list}")

    def successive_differences(self) -> list[np.ndarray]:
        """|m_{N_i}(t) - m_{N_{i+1}}(t)| for consecutive recorded N."""
        recorded = [n for n in self.n_list if n in self.records]
        return [
            np.abs(self.records[a].mean_amplitude - self.records[b].mean_amplitude)
            for a, b in zip(recorded, recorded[1:])
        ]

    def differences_decreasing(self) -> bool:
        differences = self.successive_differences()
        # m(0) = 1 for every N, so exact ties at zero count as decreasing
        return all(
            np.all((later < earlier) | ((earlier < 1e-14) & (later < 1e-14)))
            for earlier, later in zip(differences, differences[1:])
        )
