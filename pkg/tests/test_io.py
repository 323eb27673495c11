import json

import numpy as np
import pandas as pd
import pytest
from numpy import testing as npt

from metasdf.config import ExperimentConfig
from metasdf.data.data_loader import load_checkpoint, load_grid, load_manifest, validate_dataset_dir
from metasdf.data.data_saver import save_checkpoint, save_grid, save_json, save_manifest
from metasdf.errors import CheckpointError, ConfigError, SdfDataError
from metasdf.parsers.config_parser import parse_experiment_config
from metasdf.parsers.context_parser import context_to_frame, load_context_csv
from metasdf.utils import logging_utils


def test_grid_file_layout(tmp_path, circle_grid):
    path = str(tmp_path / "circle.sdfg")
    save_grid(circle_grid, path)
    blob = open(path, "rb").read()
    assert blob[:4] == b"SDFG"
    assert len(blob) == 16 + 4 * circle_grid.size
    loaded = load_grid(path)
    assert loaded.resolution == (32, 32)
    npt.assert_allclose(loaded.values, circle_grid.values, atol=1e-7)


def test_3d_grid_file(tmp_path, sphere_grid):
    path = str(tmp_path / "sphere.sdfg")
    save_grid(sphere_grid, path)
    assert load_grid(path).resolution == (16, 16, 16)


def test_truncated_grid_file(tmp_path, circle_grid):
    path = tmp_path / "bad.sdfg"
    save_grid(circle_grid, str(path))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(SdfDataError):
        load_grid(str(path))


def test_checkpoint_container_keeps_f64(tmp_path):
    path = str(tmp_path / "x.ckpt")
    buffers = {"theta": np.array([1.0 / 3.0, np.pi]), "alpha.0": np.full((2, 2), 1e-300)}
    save_checkpoint({"method": "metasdf", "step": 3}, buffers, path)
    header, loaded = load_checkpoint(path)
    assert header["step"] == 3
    assert [b["name"] for b in header["buffers"]] == ["alpha.0", "theta"]
    for name, array in buffers.items():
        npt.assert_array_equal(loaded[name], array)


@pytest.mark.parametrize("blob", [b"", b"NOTACKPT" + b"\x00" * 8, b"MSDFCKPT" + b"\x05" + b"\x00" * 7 + b"{{{{{"])
def test_bad_checkpoint_files(tmp_path, blob):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(blob)
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "nope.ckpt"))


def test_manifest_schema_version(tmp_path):
    save_manifest({"dim": 2, "shapes": []}, str(tmp_path))
    assert load_manifest(str(tmp_path))["schema_version"] == 1
    save_json({"dim": 2, "shapes": [], "schema_version": 99}, str(tmp_path / "manifest.json"))
    with pytest.raises(SdfDataError):
        load_manifest(str(tmp_path))


def test_validate_dataset_dir(tmp_path, blob_dataset):
    assert validate_dataset_dir(blob_dataset)
    assert not validate_dataset_dir(str(tmp_path / "missing"))


def test_save_json_handles_numpy(tmp_path):
    path = tmp_path / "x.json"
    save_json({"a": np.float64(1.5), "b": np.arange(3), "c": np.int64(2)}, str(path))
    assert json.loads(path.read_text()) == {"a": 1.5, "b": [0, 1, 2], "c": 2}


def test_context_csv(tmp_path):
    path = tmp_path / "context.csv"
    coords = np.array([[0.1, -0.2], [0.3, 0.4]])
    context_to_frame(coords, np.array([0.05, -0.01])).to_csv(path, index=False)
    loaded_coords, loaded_values = load_context_csv(str(path))
    npt.assert_allclose(loaded_coords, coords)
    npt.assert_allclose(loaded_values, [0.05, -0.01])


def test_context_csv_without_sdf_is_level_set(tmp_path):
    path = tmp_path / "levelset.csv"
    pd.DataFrame({"x0": [0.5, 0.0], "x1": [0.0, 0.5], "x2": [0.0, 0.0]}).to_csv(path, index=False)
    coords, values = load_context_csv(str(path))
    assert coords.shape == (2, 3)
    npt.assert_array_equal(values, [0.0, 0.0])


@pytest.mark.parametrize("text", ["a,b\n1,2\n", "x0,x1,sdf\n", "x0,x1,sdf\n0.1,nan,0.0\n"])
def test_bad_context_files(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(SdfDataError):
        load_context_csv(str(path))


def test_config_file_with_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"method": "cnp", "inner_steps": 3, "lr": 0.001}))
    cfg = parse_experiment_config(str(path), {"inner_steps": 7, "seed": None})
    assert cfg.method == "cnp"
    assert cfg.inner_steps == 7
    assert cfg.seed == 0


@pytest.mark.parametrize("values", [
    {"method": "siren"},
    {"mystery": 1},
    {"inner_loss": "clamped"},
    {"loss": "composite", "inner_loss": "l1"},
    {"num_layers": 1},
    {"lr": 0.0},
])
def test_invalid_configs(values):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(values)


def test_clamped_inner_loss_needs_opt_in():
    cfg = ExperimentConfig.from_dict({"inner_loss": "clamped", "allow_clamped_inner": True})
    assert cfg.resolve(2).inner_loss == "clamped"


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_experiment_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        parse_experiment_config(str(bad))


@pytest.mark.parametrize("dim, hidden, loss, per_step", [(2, 256, "l1", False), (3, 512, "composite", True)])
def test_resolve_dimension_defaults(dim, hidden, loss, per_step):
    cfg = ExperimentConfig().resolve(dim)
    assert cfg.hidden_dim == hidden
    assert cfg.loss == loss
    assert cfg.inner_loss == loss
    assert cfg.per_step_alpha is per_step
    assert cfg.out_dim == (2 if loss == "composite" else 1)


def test_problem_log_is_flushed_to_the_run_directory(tmp_path):
    logging_utils.log_problem("shape_00001: no zero crossing")
    logging_utils.save_problem_cases(str(tmp_path))
    assert (tmp_path / "problem_cases.txt").read_text() == "shape_00001: no zero crossing\n"
    logging_utils.save_debug_log(str(tmp_path))
    assert not (tmp_path / "debug_log.txt").exists()
