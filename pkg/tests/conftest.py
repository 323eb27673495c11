"""
Shared fixtures: tiny networks, analytic grids and a small corpus on disk
"""
import numpy as np
import pytest

from metasdf.config import ExperimentConfig
from metasdf.data.corpus import CorpusSpec, build_corpus
from metasdf.data.sdf_grid import grid_from_function
from metasdf.nets.parameters import MlpConfig
from metasdf.utils import logging_utils


def circle_sdf(points, radius=0.5, center=(0.0, 0.0)):
    return np.linalg.norm(np.asarray(points) - np.asarray(center), axis=1) - radius


def sphere_sdf(points, radius=0.5):
    return np.linalg.norm(np.asarray(points), axis=1) - radius


@pytest.fixture(autouse=True)
def _quiet_logs():
    logging_utils.clear_logs()
    yield
    logging_utils.clear_logs()


@pytest.fixture
def tiny_net():
    """2 -> 8 -> 8 -> 1 relu network (105 parameters)"""
    return MlpConfig(in_dim=2, hidden_dim=8, num_layers=3, out_dim=1)


@pytest.fixture
def small_net():
    return MlpConfig(in_dim=2, hidden_dim=16, num_layers=3, out_dim=1)


@pytest.fixture
def circle_grid():
    return grid_from_function(circle_sdf, (32, 32))


@pytest.fixture
def sphere_grid():
    return grid_from_function(sphere_sdf, (16, 16, 16))


@pytest.fixture
def small_config():
    """Resolved 2-D config sized for tests"""
    cfg = ExperimentConfig(
        method="metasdf", hidden_dim=16, num_layers=3, latent_dim=8, inner_steps=3,
        batch_tasks=4, epochs=1, context_n=64, target_n=64, val_count=2,
        lr=1e-3, code_steps=20, code_lr=1e-2, encoder_layers=2,
    )
    return cfg.resolve(2)


@pytest.fixture
def blob_dataset(tmp_path):
    """12 blob shapes at 24^2: 9 train, 1 val, 2 test"""
    dataset_dir = str(tmp_path / "blobs")
    spec = CorpusSpec(kind="blobs", count=12, resolution=24, seed=3, val_count=2, test_fraction=0.2)
    build_corpus(spec, dataset_dir)
    return dataset_dir
