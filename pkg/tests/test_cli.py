import io
import json
import math

import pandas as pd
import pytest
from click.testing import CliRunner

from main import cli, exit_code_for
from core.quadrature import QuadratureError
from formats.config_loader import ConfigError
from solvers.spectral import SpectralConvergenceError

QUIET = ["--no-log-file", "--no-progress"]


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, [*QUIET, *args])


def write_config(tmp_path, **overrides):
    doc = {"g": 0.25, "R": 1.0, "c": 1.0, "omega": 1.0, "positions": [[0, 0, 0]]}
    doc.update(overrides)
    path = tmp_path / "instance.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_exit_code_contract():
    assert exit_code_for(ConfigError("x")) == 2
    assert exit_code_for(QuadratureError("x")) == 3
    assert exit_code_for(SpectralConvergenceError("x")) == 4
    assert exit_code_for(RuntimeError("x")) == 1


def test_kernel_at_zero_lag(runner, instance_path):
    result = invoke(runner, "--config", str(instance_path("n2_small")), "kernel", "--u", "0")
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(io.StringIO(result.stdout))
    assert list(frame.columns) == ["u", "re_K_1_1", "im_K_1_1", "re_K_1_2", "im_K_1_2", "re_K_2_2", "im_K_2_2"]
    assert frame["re_K_1_1"][0] == pytest.approx(math.pi ** 1.5, rel=1e-9)
    assert frame["re_K_1_2"][0] == pytest.approx(math.pi ** 1.5 * math.exp(-0.25), rel=1e-9)


def test_kernel_single_atom_columns(runner, instance_path):
    result = invoke(runner, "--config", str(instance_path("n1_small")), "kernel", "--u", "0", "--u", "0.5")
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(io.StringIO(result.stdout))
    assert list(frame.columns) == ["u", "re_K_1_1", "im_K_1_1"]
    assert len(frame) == 2


def test_kernel_without_lags_is_usage_error(runner, instance_path):
    result = invoke(runner, "--config", str(instance_path("n1_small")), "kernel")
    assert result.exit_code == 2


def test_missing_config_is_usage_error(runner):
    assert invoke(runner, "poles").exit_code == 2


def test_malformed_config_exit_code(runner, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{]", encoding="utf-8")
    result = invoke(runner, "--config", str(path), "poles")
    assert result.exit_code == 2


def test_solve_zero_coupling_constant(runner, tmp_path):
    config = write_config(tmp_path, g=0.0, positions=[[0, 0, 0], [1, 0, 0]], beta0=[[0.6, 0], [0, 0.8]])
    out = tmp_path / "series.csv"
    result = invoke(runner, "--config", str(config), "--out", str(out), "solve", "--horizon", "2", "--step", "0.5")
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert len(frame) == 5
    assert (frame["re_beta_1"] == 0.6).all() and (frame["im_beta_2"] == 0.8).all()


def test_solve_direct_with_start_time(runner, tmp_path):
    config = write_config(tmp_path, g=0.0)
    result = invoke(runner, "--config", str(config), "solve", "--horizon", "2", "--step", "0.5", "--t0", "1")
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(io.StringIO(result.stdout))
    assert frame["t"].tolist() == [1.0, 1.5, 2.0]


def test_asymptotic_at_zero_is_solver_error(runner, instance_path):
    result = invoke(
        runner, "--config", str(instance_path("n1_small")),
        "solve", "--method", "asymptotic", "--t0", "0", "--horizon", "1", "--step", "0.5",
    )
    assert result.exit_code == 3
    assert "tail undefined at t=0" in result.output


def test_poles_report(runner, instance_path):
    result = invoke(runner, "--config", str(instance_path("n2_small")), "poles")
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert report["oscillatory"] == []
    assert len(report["resonance"]) == 2
    assert report["bound"]["certifies_no_oscillatory_poles"] is True
    assert report["timing"]["seconds"] > 0


def test_strong_coupling_reports_oscillatory_pole(runner, instance_path, tmp_path):
    out = tmp_path / "poles.json"
    result = invoke(runner, "--config", str(instance_path("n1_strong")), "--out", str(out), "poles")
    assert result.exit_code in (0, 4), result.output
    if result.exit_code == 0:
        assert len(json.loads(out.read_text(encoding="utf-8"))["oscillatory"]) == 1


def test_compare_identical_files(runner, tmp_path):
    config = write_config(tmp_path, g=0.0)
    series = tmp_path / "a.csv"
    invoke(runner, "--config", str(config), "--out", str(series), "solve", "--horizon", "1", "--step", "0.25")
    result = invoke(runner, "compare", str(series), str(series))
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert report["max_abs"] == 0.0
    assert report["warnings"] == []


def test_compare_rejects_non_series(runner, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n", encoding="utf-8")
    assert invoke(runner, "compare", str(path), str(path)).exit_code == 2


def test_validate_command(runner, instance_path):
    result = invoke(runner, "--config", str(instance_path("n3_small")), "validate")
    assert result.exit_code == 0
    report = json.loads(result.stdout)
    assert report["passed"] and report["n_atoms"] == 3


def test_continuum_requires_density(runner, instance_path):
    result = invoke(runner, "--config", str(instance_path("n1_small")), "continuum")
    assert result.exit_code == 2
