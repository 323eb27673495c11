"""
Desk-scale benchmarks, deselected by default (run with -m slow)
"""
import dataclasses

import numpy as np
import pytest

from metasdf import config
from metasdf.config import ExperimentConfig
from metasdf.data.corpus import CorpusSpec, build_corpus
from metasdf.data.data_loader import load_dataset
from metasdf.data.sampling import make_task
from metasdf.training import autodecoder
from metasdf.training.meta_learner import MetaConfig, init_meta_model, net_config, specialize, train_meta

pytestmark = pytest.mark.slow


def test_specialization_is_an_order_of_magnitude_faster_than_code_search(circle_grid):
    cfg = ExperimentConfig(method="autodec-concat", hidden_dim=64, num_layers=4, latent_dim=64,
                           context_n=512).resolve(2)
    net = net_config(cfg, 2)
    meta = init_meta_model(net, MetaConfig.from_experiment(cfg), seed=0)
    decoder = autodecoder.init_autodecoder("concat", net, cfg, ["a"], seed=0)
    task = make_task(circle_grid, "dense", 512, 1, seed=0)

    meta_ms, search_ms = [], []
    for _ in range(3):
        meta_ms.append(specialize(meta, task.context_coords, task.context_values).wallclock_ms)
        search = autodecoder.test_time_optimize_code(decoder, task.context_coords, task.context_values,
                                                     patience=config.CODE_SEARCH_STEPS)
        assert search.steps == config.CODE_SEARCH_STEPS
        search_ms.append(search.wallclock_ms)
    print(f"specialize {np.median(meta_ms):.1f} ms, code search {np.median(search_ms):.1f} ms")
    assert np.median(meta_ms) <= 0.1 * np.median(search_ms)


def test_composite_loss_training_converges_in_3d(tmp_path):
    dataset_dir = str(tmp_path / "solids")
    build_corpus(CorpusSpec(kind="shapes3d", count=16, resolution=16, seed=0, val_count=2,
                            test_fraction=0.0), dataset_dir)
    train = load_dataset(dataset_dir, "train")
    cfg = ExperimentConfig(hidden_dim=32, num_layers=3, inner_steps=3, batch_tasks=4, epochs=10,
                           context_n=256, target_n=256, val_count=2, lr=1e-3).resolve(3)
    assert cfg.loss == "composite"
    for seed in range(3):
        model, metrics = train_meta(train.records, dataclasses.replace(cfg, seed=seed))
        losses = metrics["outer_loss"].to_numpy()
        assert np.all(np.isfinite(losses))
        assert losses[-4:].mean() < losses[:4].mean()
        assert np.any(model.loss_state != 0.0)
