"""Configuration settings loaded from environment variables."""

import os
from dataclasses import dataclass, field
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()


@dataclass
class QuadratureSettings:
    """Default policy for semi-infinite and principal-value integrals."""
    rel_tol: float = field(default_factory=lambda: float(os.getenv("QUAD_REL_TOL", "1e-10")))
    abs_tol: float = field(default_factory=lambda: float(os.getenv("QUAD_ABS_TOL", "1e-13")))
    panel_order: int = field(default_factory=lambda: int(os.getenv("QUAD_PANEL_ORDER", "16")))
    max_panels: int = field(default_factory=lambda: int(os.getenv("QUAD_MAX_PANELS", "16384")))


@dataclass
class SolverSettings:
    """Time-domain solver settings."""
    step_scale: float = field(default_factory=lambda: float(os.getenv("SOLVER_STEP_SCALE", "0.05")))
    kernel_chunk: int = field(default_factory=lambda: int(os.getenv("SOLVER_KERNEL_CHUNK", "128")))


@dataclass
class SpectralSettings:
    """Pole search settings."""
    newton_max_iter: int = field(default_factory=lambda: int(os.getenv("SPECTRAL_NEWTON_MAX_ITER", "50")))
    newton_tol: float = field(default_factory=lambda: float(os.getenv("SPECTRAL_NEWTON_TOL", "1e-12")))
    dedup_tol: float = field(default_factory=lambda: float(os.getenv("SPECTRAL_DEDUP_TOL", "1e-9")))
    cluster_tol: float = field(default_factory=lambda: float(os.getenv("SPECTRAL_CLUSTER_TOL", "1e-6")))
    branch_overlap: float = field(default_factory=lambda: float(os.getenv("SPECTRAL_BRANCH_OVERLAP", "0.7")))
    branch_refinements: int = field(default_factory=lambda: int(os.getenv("SPECTRAL_BRANCH_REFINEMENTS", "6")))
    expansion_points: int = field(default_factory=lambda: int(os.getenv("SPECTRAL_EXPANSION_POINTS", "48")))
    direct_max_atoms: int = field(default_factory=lambda: int(os.getenv("SPECTRAL_DIRECT_MAX_ATOMS", "8")))
    determinant_max_atoms: int = field(default_factory=lambda: int(os.getenv("SPECTRAL_DETERMINANT_MAX_ATOMS", "8")))


@dataclass
class PathSettings:
    """File path settings."""
    output_dir: Path = field(default_factory=lambda: Path(os.getenv("OUTPUT_DIR", "./output")))
    state_dir: Path = field(default_factory=lambda: Path(os.getenv("STATE_DIR", "./state")))
    logs_dir: Path = field(default_factory=lambda: Path(os.getenv("LOGS_DIR", "./logs")))
    instances_dir: Path = field(default_factory=lambda: Path(
        os.getenv("INSTANCES_DIR", str(Path(__file__).parent / "instances"))
    ))

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        self.state_dir = Path(self.state_dir)
        self.logs_dir = Path(self.logs_dir)
        self.instances_dir = Path(self.instances_dir)


@dataclass
class Settings:
    """Main settings container."""
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    spectral: SpectralSettings = field(default_factory=SpectralSettings)
    paths: PathSettings = field(default_factory=PathSettings)

    threads: int = field(default_factory=lambda: int(os.getenv("THREADS", "1")))


settings = Settings()
