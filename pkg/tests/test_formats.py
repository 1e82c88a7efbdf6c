import numpy as np
import pytest

from core.model import ModelValidationError
from formats.config_loader import ConfigError, load_run_config, parse_run_config
from formats.series_io import SeriesFormatError, frame_to_csv, read_series_csv, series_frame
from solvers.continuum import UniformBall
from solvers.direct_solver import Provenance, TimeGrid, TimeSeries


def document(**overrides):
    base = {"g": 0.25, "R": 1.0, "c": 1.0, "omega": 1.0, "positions": [[0, 0, 0], [1, 0, 0]]}
    base.update(overrides)
    return base


def test_defaults_excite_first_atom():
    config = parse_run_config(document())
    np.testing.assert_array_equal(config.initial.beta0, [1.0, 0.0])
    assert config.params.n_atoms == 2


def test_beta0_pairs():
    config = parse_run_config(document(beta0=[[0.6, 0.0], [0.0, 0.8]]))
    np.testing.assert_allclose(config.initial.beta0, [0.6, 0.8j])


@pytest.mark.parametrize("bad", [
    {"g": "strong"},
    {"beta0": [[1.0, 0.0]]},
    {"grid": [1, 2]},
])
def test_malformed_values(bad):
    with pytest.raises(ConfigError):
        parse_run_config(document(**bad))


def test_missing_positions():
    doc = document()
    del doc["positions"]
    with pytest.raises(ConfigError, match="positions"):
        parse_run_config(doc)


def test_invalid_model_rejected():
    with pytest.raises(ModelValidationError):
        parse_run_config(document(omega=-1.0))
    with pytest.raises(ModelValidationError):
        parse_run_config(document(positions=[[0, 0, 0], [0, 0, 0]]))


def test_unknown_keys_warn(caplog):
    with caplog.at_level("WARNING", logger="formats.config_loader"):
        parse_run_config(document(colour="blue"))
    assert "colour" in caplog.text


def test_overrides_and_nondimensional():
    config = parse_run_config(document(
        c=2.0, omega=4.0, quadrature={"rel_tol": 1e-8}, grid={"step": 0.1, "horizon": 3.0}
    ))
    assert config.quadrature_spec().rel_tol == 1e-8
    assert config.quadrature_spec(rel_tol=1e-6).rel_tol == 1e-6
    scaled = config.nondimensional()
    assert scaled.params.omega == 1.0 and scaled.params.c == 1.0
    assert scaled.grid.step == pytest.approx(0.4)
    assert scaled.grid.horizon == pytest.approx(12.0)


def test_continuum_document(instance_path):
    config = load_run_config(instance_path("continuum_ball"))
    assert isinstance(config.continuum.density, UniformBall)
    assert config.continuum.n_list == [50, 100, 200]


def test_malformed_json_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_series_csv_round_trip(tmp_path):
    grid = TimeGrid(0.25, 4)
    values = np.column_stack([np.exp(-1j * grid.nodes), 0.1 * grid.nodes])
    series = TimeSeries(grid=grid, values=values, provenance=Provenance.DIRECT)
    text = frame_to_csv(series_frame(series))
    assert text.splitlines()[0] == "t,re_beta_1,im_beta_1,re_beta_2,im_beta_2"
    assert "\r" not in text
    path = tmp_path / "series.csv"
    path.write_text(text, encoding="utf-8")
    restored = read_series_csv(path)
    np.testing.assert_array_equal(restored.values, series.values)
    assert restored.grid.steps == 4


def test_breakdown_columns():
    grid = TimeGrid(1.0, 1, start=1.0)
    series = TimeSeries(
        grid=grid, values=np.ones((2, 1)), provenance=Provenance.ASYMPTOTIC,
        components={"pole_1": np.ones((2, 1))},
    )
    assert "re_pole_1_1" in series_frame(series, breakdown=True).columns
    assert "re_pole_1_1" not in series_frame(series).columns


def test_series_csv_rejects_bad_files(tmp_path):
    uneven = tmp_path / "uneven.csv"
    uneven.write_text("t,re_beta_1,im_beta_1\n0,1,0\n0.1,1,0\n0.3,1,0\n", encoding="utf-8")
    with pytest.raises(SeriesFormatError):
        read_series_csv(uneven)
    missing = tmp_path / "missing.csv"
    missing.write_text("t,re_beta_1\n0,1\n1,1\n", encoding="utf-8")
    with pytest.raises(SeriesFormatError):
        read_series_csv(missing)
