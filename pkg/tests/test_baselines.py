import dataclasses

import numpy as np
import pytest
from numpy import testing as npt

from metasdf.data.sampling import make_task
from metasdf.errors import CheckpointError, ConfigError, SdfDataError
from metasdf.nets.parameters import MlpConfig
from metasdf.training import autodecoder, cnp
from metasdf.training.inference import (
    AutoDecoderPredictor, CnpPredictor, MetaPredictor, OraclePredictor, load_model,
)
from metasdf.training.meta_learner import MetaConfig, init_meta_model, net_config, save_meta_checkpoint
from metasdf.training.optimizer import Adam


@pytest.fixture
def autodec_config(small_config):
    return dataclasses.replace(small_config, method="autodec-concat")


@pytest.fixture
def cnp_config(small_config):
    return dataclasses.replace(small_config, method="cnp")


def decoder_net(cfg):
    return MlpConfig(in_dim=2, hidden_dim=cfg.hidden_dim, num_layers=cfg.num_layers, out_dim=cfg.out_dim)


@pytest.mark.parametrize("mode", ["concat", "hyper"])
def test_codes_start_small_and_seeded(autodec_config, mode):
    ids = ["shape_00000", "shape_00001", "shape_00002"]
    a = autodecoder.init_autodecoder(mode, decoder_net(autodec_config), autodec_config, ids, seed=0)
    b = autodecoder.init_autodecoder(mode, decoder_net(autodec_config), autodec_config, ids, seed=0)
    assert sorted(a.codes) == ids
    assert a.method == f"autodec-{mode}"
    for sid in ids:
        npt.assert_array_equal(a.codes[sid].z, b.codes[sid].z)
        assert np.all(np.abs(a.codes[sid].z) < 0.1)
    assert a.decoder.checksum() == b.decoder.checksum()


def test_unknown_autodecoder_mode(autodec_config):
    with pytest.raises(ConfigError):
        autodecoder.init_autodecoder("film", decoder_net(autodec_config), autodec_config, ["s"], seed=0)


def test_step_touches_only_the_batch_codes(circle_grid, autodec_config):
    model = autodecoder.init_autodecoder("concat", decoder_net(autodec_config), autodec_config,
                                         ["a", "b"], seed=0)
    before_a = model.codes["a"].z.copy()
    before_b = model.codes["b"].z.copy()
    before_decoder = model.decoder.checksum()
    task = make_task(circle_grid, "dense", 64, 64, seed=0, shape_id="a")
    loss = autodecoder.autodecoder_step(model, [task], Adam(lr=1e-3))
    assert np.isfinite(loss)
    assert not np.array_equal(model.codes["a"].z, before_a)
    npt.assert_array_equal(model.codes["b"].z, before_b)
    assert model.decoder.checksum() != before_decoder


@pytest.mark.parametrize("mode", ["concat", "hyper"])
def test_code_search_keeps_the_decoder_frozen(circle_grid, autodec_config, mode):
    model = autodecoder.init_autodecoder(mode, decoder_net(autodec_config), autodec_config, ["a"], seed=1)
    decoder = model.decoder.checksum()
    code = model.codes["a"].z.copy()
    task = make_task(circle_grid, "dense", 64, 8, seed=0)
    search = autodecoder.test_time_optimize_code(model, task.context_coords, task.context_values,
                                                 steps=10, lr=1e-2, patience=100)
    assert model.decoder.checksum() == decoder
    npt.assert_array_equal(model.codes["a"].z, code)
    assert search.steps == 10
    assert len(search.losses) == 11
    assert search.code.dim == autodec_config.latent_dim


def test_code_search_starts_from_zero(circle_grid, autodec_config):
    model = autodecoder.init_autodecoder("concat", decoder_net(autodec_config), autodec_config, ["a"], seed=1)
    task = make_task(circle_grid, "dense", 32, 8, seed=0)
    search = autodecoder.test_time_optimize_code(model, task.context_coords, task.context_values, steps=0)
    npt.assert_array_equal(search.code.z, np.zeros(autodec_config.latent_dim))
    assert search.steps == 0
    zero_pred = model.sdf(np.zeros(autodec_config.latent_dim), task.context_coords)
    assert search.losses[0] == pytest.approx(np.mean(np.abs(zero_pred - task.context_values)))


def test_code_search_early_stop(circle_grid, autodec_config):
    model = autodecoder.init_autodecoder("concat", decoder_net(autodec_config), autodec_config, ["a"], seed=1)
    task = make_task(circle_grid, "dense", 32, 8, seed=0)
    search = autodecoder.test_time_optimize_code(model, task.context_coords, task.context_values,
                                                 steps=50, patience=1, min_delta=1e9)
    assert search.steps == 2
    assert len(search.losses) == 3


def test_code_search_needs_context(autodec_config):
    model = autodecoder.init_autodecoder("concat", decoder_net(autodec_config), autodec_config, ["a"], seed=1)
    with pytest.raises(SdfDataError):
        autodecoder.test_time_optimize_code(model, np.zeros((0, 2)), np.zeros(0))


def test_cnp_code_ignores_context_order(circle_grid, cnp_config):
    model = cnp.init_cnp(decoder_net(cnp_config), cnp_config, seed=0)
    task = make_task(circle_grid, "dense", 50, 20, seed=0)
    perm = np.random.default_rng(1).permutation(50)
    a = cnp.cnp_infer(model, task.context_coords, task.context_values, task.target_coords)
    b = cnp.cnp_infer(model, task.context_coords[perm], task.context_values[perm], task.target_coords)
    npt.assert_array_equal(a.code, b.code)
    npt.assert_array_equal(a.values, b.values)
    npt.assert_array_equal(cnp.decode_code(model, a.code, task.target_coords), a.values)


def test_cnp_needs_context(cnp_config):
    model = cnp.init_cnp(decoder_net(cnp_config), cnp_config, seed=0)
    with pytest.raises(SdfDataError):
        cnp.cnp_infer(model, np.zeros((0, 2)), np.zeros(0), np.zeros((3, 2)))


def test_cnp_steps_reduce_loss(circle_grid, cnp_config):
    model = cnp.init_cnp(decoder_net(cnp_config), cnp_config, seed=0)
    task = make_task(circle_grid, "dense", 64, 64, seed=0)
    optimizer = Adam(lr=1e-2)
    losses = [cnp.cnp_step(model, [task], optimizer) for _ in range(30)]
    assert losses[-1] < losses[0]


def test_checkpoints_load_as_predictors(tmp_path, circle_grid, small_config, autodec_config, cnp_config):
    meta_path = str(tmp_path / "meta.ckpt")
    meta = init_meta_model(net_config(small_config, 2), MetaConfig.from_experiment(small_config), seed=0)
    save_meta_checkpoint(meta_path, meta, small_config)
    ad_path = str(tmp_path / "autodec.ckpt")
    ad = autodecoder.init_autodecoder("concat", decoder_net(autodec_config), autodec_config, ["a"], seed=0)
    autodecoder.save_autodecoder_checkpoint(ad_path, ad, autodec_config)
    cnp_path = str(tmp_path / "cnp.ckpt")
    cnp.save_cnp_checkpoint(cnp_path, cnp.init_cnp(decoder_net(cnp_config), cnp_config, seed=0), cnp_config)

    task = make_task(circle_grid, "dense", 64, 16, seed=0)
    expected = {meta_path: MetaPredictor, ad_path: AutoDecoderPredictor, cnp_path: CnpPredictor}
    for path, kind in expected.items():
        predictor = load_model(path)
        assert isinstance(predictor, kind)
        fit = predictor.fit(task.context_coords, task.context_values)
        assert fit.predict(task.target_coords).shape == (16,)
        assert fit.wallclock_ms >= 0.0

    with pytest.raises(CheckpointError):
        autodecoder.load_autodecoder_checkpoint(meta_path)


def test_oracle_interpolates_the_grid(circle_grid):
    predictor = load_model("oracle")
    assert isinstance(predictor, OraclePredictor)
    fit = predictor.fit(np.zeros((1, 2)), np.zeros(1), grid=circle_grid)
    coords = circle_grid.coords()
    npt.assert_allclose(fit.predict(coords), circle_grid.values.reshape(-1), atol=1e-12)
    with pytest.raises(SdfDataError):
        predictor.fit(np.zeros((1, 2)), np.zeros(1))
