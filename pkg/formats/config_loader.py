"""Problem-instance ingestion from JSON documents."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from core.model import InitialState, ModelParams, ModelValidationError, validate
from core.quadrature import QuadratureSpec
from solvers.continuum import Density

logger = logging.getLogger(__name__)

MODEL_KEYS = {"g", "R", "c", "omega", "positions", "beta0"}
KNOWN_KEYS = MODEL_KEYS | {
    "name", "quadrature", "grid", "output",
    "density", "g_tilde", "n_list", "seed", "horizon", "samples",
}
QUADRATURE_KEYS = {"rel_tol", "abs_tol", "panel_order", "max_panels"}
GRID_KEYS = {"step", "horizon", "t0", "samples"}


class ConfigError(Exception):
    """Malformed problem-instance document."""
    pass


@dataclass
class GridOverrides:
    """Optional time-grid settings of a run."""
    step: Optional[float] = None
    horizon: Optional[float] = None
    t0: Optional[float] = None
    samples: Optional[int] = None


@dataclass
class ContinuumConfig:
    """Density and N sequence of a continuum run."""
    density: Density
    g_tilde: float
    n_list: list[int]
    seed: int
    horizon: float
    samples: int = 64


@dataclass
class RunConfig:
    """Model, initial state and overrides of one run."""
    name: str
    params: ModelParams
    initial: InitialState
    quadrature: dict[str, Any] = field(default_factory=dict)
    grid: GridOverrides = field(default_factory=GridOverrides)
    output: Optional[Path] = None
    continuum: Optional[ContinuumConfig] = None

    def quadrature_spec(self, rel_tol: Optional[float] = None) -> QuadratureSpec:
        """Settings defaults, then the document's overrides, then ``rel_tol``."""
        return QuadratureSpec().with_overrides(**self.quadrature).with_overrides(rel_tol=rel_tol)

    def nondimensional(self) -> "RunConfig":
        """Copy rescaled to c = Ω = 1; grid times are converted to units of 1/Ω."""
        omega = self.params.omega
        grid = GridOverrides(
            step=self.grid.step * omega if self.grid.step is not None else None,
            horizon=self.grid.horizon * omega if self.grid.horizon is not None else None,
            t0=self.grid.t0 * omega if self.grid.t0 is not None else None,
            samples=self.grid.samples,
        )
        return RunConfig(
            name=self.name,
            params=self.params.nondimensional(),
            initial=self.initial,
            quadrature=dict(self.quadrature),
            grid=grid,
            output=self.output,
            continuum=self.continuum,
        )


def _number(document: dict, key: str) -> float:
    try:
        value = document[key]
    except KeyError:
        raise ConfigError(f"missing key: {key}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _beta0(document: dict, n_atoms: int) -> InitialState:
    raw = document.get("beta0")
    if raw is None:
        return InitialState.ground_first(n_atoms)
    try:
        pairs = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"beta0 must be a list of [re, im] pairs: {e}") from e
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ConfigError(f"beta0 must be a list of [re, im] pairs, got shape {pairs.shape}")
    if pairs.shape[0] != n_atoms:
        raise ConfigError(f"beta0 has {pairs.shape[0]} entries for {n_atoms} atoms")
    return InitialState(pairs[:, 0] + 1j * pairs[:, 1])


def _section(document: dict, key: str, allowed: set[str]) -> dict:
    section = document.get(key) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"{key} must be an object")
    unknown = set(section) - allowed
    if unknown:
        logger.warning(f"Ignoring unknown {key} keys: {', '.join(sorted(unknown))}")
    return {k: v for k, v in section.items() if k in allowed}


def _continuum(document: dict) -> Optional[ContinuumConfig]:
    if "density" not in document:
        return None
    try:
        density = Density.from_dict(document["density"])
        n_list = [int(n) for n in document["n_list"]]
        return ContinuumConfig(
            density=density,
            g_tilde=_number(document, "g_tilde"),
            n_list=n_list,
            seed=int(document.get("seed", 0)),
            horizon=_number(document, "horizon"),
            samples=int(document.get("samples", 64)),
        )
    except KeyError as e:
        raise ConfigError(f"continuum config missing key: {e.args[0]}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid continuum config: {e}") from e


def parse_run_config(document: Any, name: str = "run") -> RunConfig:
    """
    Build a RunConfig from a decoded JSON document.

    Continuum documents may omit ``positions``; the model then carries a
    single atom at the origin and only supplies R, c, Ω.

    Raises:
        ConfigError: Missing keys or wrong types
        ModelValidationError: Coincident positions or invalid constants
    """
    if not isinstance(document, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(document) - KNOWN_KEYS
    if unknown:
        logger.warning(f"Ignoring unknown config keys: {', '.join(sorted(unknown))}")

    continuum = _continuum(document)
    g = _number(document, "g") if continuum is None or "g" in document else 0.0
    if "positions" in document:
        positions = document["positions"]
    elif continuum is not None:
        positions = [[0.0, 0.0, 0.0]]
    else:
        raise ConfigError("missing key: positions")
    try:
        params = ModelParams(
            g=g,
            R=_number(document, "R"),
            c=_number(document, "c"),
            omega=_number(document, "omega"),
            positions=np.asarray(positions, dtype=float),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"positions must be a list of [x, y, z] points: {e}") from e

    initial = _beta0(document, params.n_atoms)
    report = validate(params, initial)
    if not report.passed:
        raise ModelValidationError(f"invalid model: {', '.join(report.failures())}")

    grid = _section(document, "grid", GRID_KEYS)
    output = document.get("output")
    return RunConfig(
        name=str(document.get("name", name)),
        params=params,
        initial=initial,
        quadrature=_section(document, "quadrature", QUADRATURE_KEYS),
        grid=GridOverrides(**grid),
        output=Path(output) if output else None,
        continuum=continuum,
    )


def load_run_config(path: Path) -> RunConfig:
    """
    Read and parse a JSON instance file.

    Raises:
        ConfigError: Unreadable file or malformed JSON
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from e
    config = parse_run_config(document, name=path.stem)
    logger.info(f"Loaded {config.name}: {config.params.n_atoms} atoms, g={config.params.g:g}")
    return config
