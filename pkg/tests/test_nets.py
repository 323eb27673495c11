import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy import testing as npt

from metasdf.autodiff import Tensor, grad, ops
from metasdf.errors import ConfigError, ShapeMismatchError
from metasdf.nets.hypernet import (
    HypernetConfig, build_bias_only_hypernet, hyper_decode, hypernet_forward, init_hypernet,
    linear_hypernet_forward,
)
from metasdf.nets.mlp import concat_forward, init_concat_mlp, init_mlp, mlp_forward
from metasdf.nets.parameters import LatentCode, MlpConfig
from metasdf.nets.set_encoder import encoder_config, set_encode


def test_parameter_count(tiny_net):
    # (2*8 + 8) + (8*8 + 8) + (8*1 + 1)
    assert len(init_mlp(tiny_net, 0)) == 105


def test_init_is_deterministic_per_seed(tiny_net):
    a, b, c = init_mlp(tiny_net, 4), init_mlp(tiny_net, 4), init_mlp(tiny_net, 5)
    assert a.checksum() == b.checksum()
    assert a.checksum() != c.checksum()
    npt.assert_array_equal(a.get("layer0.bias"), np.zeros(8))


def test_mlp_forward_shape_and_coords_check(tiny_net):
    params = init_mlp(tiny_net, 0)
    out = mlp_forward(params, tiny_net, np.zeros((7, 2)))
    assert out.shape == (7, 1)
    with pytest.raises(ShapeMismatchError):
        mlp_forward(params, tiny_net, np.zeros((7, 3)))


def test_mlp_config_rejects_single_layer():
    with pytest.raises(ConfigError):
        MlpConfig(num_layers=1)


def test_flat_tensor_matches_parameter_vector(tiny_net):
    params = init_mlp(tiny_net, 2)
    coords = np.random.default_rng(0).uniform(-1, 1, size=(5, 2))
    npt.assert_array_equal(mlp_forward(params, tiny_net, coords).data,
                           mlp_forward(params.as_tensor(), tiny_net, coords).data)


def test_concat_decoder_equals_bias_only_hypernetwork(tiny_net):
    latent_dim = 3
    params = init_concat_mlp(tiny_net, latent_dim, 1)
    hyper = build_bias_only_hypernet(params, tiny_net, latent_dim)
    rng = np.random.default_rng(2)
    coords = rng.uniform(-1, 1, size=(20, 2))
    for _ in range(3):
        z = rng.normal(size=latent_dim)
        via_concat = concat_forward(params, z, coords, tiny_net).data
        via_hyper = mlp_forward(linear_hypernet_forward(hyper, z, tiny_net), tiny_net, coords).data
        npt.assert_allclose(via_concat, via_hyper, atol=1e-12)


def test_hypernetwork_output_layout(tiny_net):
    hconfig = HypernetConfig(target=tiny_net, latent_dim=4, hidden_dim=8)
    hparams = init_hypernet(hconfig, 0)
    flat = hypernet_forward(hparams, LatentCode(np.zeros(4)), hconfig)
    assert flat.shape == (hconfig.target_size,)
    out = hyper_decode(hparams, np.zeros(4), np.zeros((6, 2)), hconfig)
    assert out.shape == (6, 1)


def test_hypernetwork_at_zero_code_is_its_head_bias(tiny_net):
    hconfig = HypernetConfig(target=tiny_net, latent_dim=4, hidden_dim=8)
    hparams = init_hypernet(hconfig, 0)
    flat = hypernet_forward(hparams, np.zeros(4), hconfig)
    # relu(0 @ W + 0) = 0 in every hidden layer, so only the head bias remains
    npt.assert_allclose(flat.data, hparams.get(f"layer{hconfig.num_layers - 1}.bias"))


def test_hypernetwork_gradient_reaches_code(tiny_net):
    hconfig = HypernetConfig(target=tiny_net, latent_dim=4, hidden_dim=8)
    hparams = init_hypernet(hconfig, 0)
    z = Tensor(np.full(4, 0.3), requires_grad=True)
    loss = ops.sum(hyper_decode(hparams, z, np.ones((3, 2)) * 0.2, hconfig))
    (g,) = grad(loss, [z])
    assert np.abs(g.data).sum() > 0


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(12))), st.sampled_from(["mean", "max"]))
def test_set_encoder_is_permutation_invariant(order, pooling):
    enet = encoder_config(2, 8, 3, 5)
    eparams = init_mlp(enet, 7)
    rng = np.random.default_rng(11)
    coords = rng.uniform(-1, 1, size=(12, 2))
    values = rng.normal(size=12)
    base = set_encode(eparams, coords, values, enet, pooling).data
    permuted = set_encode(eparams, coords[list(order)], values[list(order)], enet, pooling).data
    npt.assert_array_equal(base, permuted)


def test_set_encoder_rejects_empty_context():
    enet = encoder_config(2, 8, 3, 5)
    with pytest.raises(ShapeMismatchError):
        set_encode(init_mlp(enet, 0), np.zeros((0, 2)), np.zeros(0), enet)


@pytest.mark.parametrize("pooling", ["sum", "MEAN", ""])
def test_set_encoder_rejects_unknown_pooling(pooling):
    enet = encoder_config(2, 8, 3, 5)
    with pytest.raises(ConfigError, match="pooling"):
        set_encode(init_mlp(enet, 0), np.zeros((4, 2)), np.zeros(4), enet, pooling)
