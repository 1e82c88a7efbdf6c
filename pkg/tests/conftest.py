"""Shared fixtures: the shipped problem instances."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config.settings import settings
from core.quadrature import QuadratureSpec
from formats.config_loader import load_run_config

INSTANCES = settings.paths.instances_dir


def _instance(name: str):
    return load_run_config(INSTANCES / f"{name}.json")


@pytest.fixture(scope="session")
def n1_config():
    return _instance("n1_small")


@pytest.fixture(scope="session")
def n2_config():
    return _instance("n2_small")


@pytest.fixture(scope="session")
def n3_config():
    return _instance("n3_small")


@pytest.fixture(scope="session")
def strong_config():
    return _instance("n1_strong")


@pytest.fixture(scope="session")
def n1_params(n1_config):
    return n1_config.params


@pytest.fixture(scope="session")
def n2_params(n2_config):
    return n2_config.params


@pytest.fixture(scope="session")
def n3_params(n3_config):
    return n3_config.params


@pytest.fixture(scope="session")
def strong_params(strong_config):
    return strong_config.params


@pytest.fixture(scope="session")
def quad_spec():
    return QuadratureSpec(rel_tol=1e-10, abs_tol=1e-13)


@pytest.fixture
def instance_path():
    def path(name: str) -> Path:
        return INSTANCES / f"{name}.json"
    return path
