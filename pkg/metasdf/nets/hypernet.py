"""
Hypernetwork decoding: latent code -> all weights and biases of Phi
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from metasdf import config as cfg
from metasdf.autodiff import Tensor, as_tensor, ops
from metasdf.errors import ShapeMismatchError
from metasdf.nets.mlp import init_mlp, mlp_forward
from metasdf.nets.parameters import (
    LatentCode, MlpConfig, ParameterVector, ParamsLike, concat_injection_layers, concat_layout,
    layout_size, make_layout, mlp_layout,
)


@dataclass(frozen=True)
class HypernetConfig:
    """A relu MLP from latent codes to the flat parameters of `target`"""
    target: MlpConfig
    latent_dim: int = cfg.LATENT_DIM
    hidden_dim: int = 256
    num_layers: int = cfg.HYPERNET_LAYERS

    @property
    def target_size(self) -> int:
        return layout_size(mlp_layout(self.target))

    def mlp_config(self) -> MlpConfig:
        return MlpConfig(in_dim=self.latent_dim, hidden_dim=self.hidden_dim,
                         num_layers=self.num_layers, out_dim=self.target_size)


def init_hypernet(hconfig: HypernetConfig, seed: Optional[int] = 0,
                  head_scale: float = cfg.HYPERNET_HEAD_SCALE) -> ParameterVector:
    """
    Initialize the hypernetwork

    The head weights are scaled down and the head bias is a freshly initialized
    flat Phi, so at z ~ 0 the generated network looks like a normal init.
    """
    params = init_mlp(hconfig.mlp_config(), seed)
    last = hconfig.num_layers - 1
    params.set(f"layer{last}.weight", params.get(f"layer{last}.weight") * head_scale)
    phi0 = init_mlp(hconfig.target, None if seed is None else seed + 1)
    params.set(f"layer{last}.bias", phi0.data)
    return params


def hypernet_forward(hparams: ParamsLike, z, hconfig: HypernetConfig) -> Tensor:
    """
    Generate the parameters of Phi from a latent code

    Args:
        hparams: Hypernetwork parameters
        z: Latent code
        hconfig: Hypernetwork topology

    Returns:
        Flat tensor laid out by mlp_layout(hconfig.target); differentiable
        w.r.t. hparams and z
    """
    z = as_tensor(z.z if isinstance(z, LatentCode) else z)
    if z.size != hconfig.latent_dim:
        raise ShapeMismatchError("hypernet_forward", [z.shape, (hconfig.latent_dim,)], "latent dim")
    out = mlp_forward(hparams, hconfig.mlp_config(), ops.reshape(z, (1, z.size)))
    return ops.reshape(out, (hconfig.target_size,))


def hyper_decode(hparams: ParamsLike, z, coords, hconfig: HypernetConfig) -> Tensor:
    """Phi(coords; hypernet(z))"""
    return mlp_forward(hypernet_forward(hparams, z, hconfig), hconfig.target, coords)


def linear_hypernet_layout(config: MlpConfig, latent_dim: int):
    size = layout_size(mlp_layout(config))
    return make_layout([("weight", (latent_dim, size)), ("bias", (size,))])


def linear_hypernet_forward(hparams: ParamsLike, z, config: MlpConfig) -> Tensor:
    """Single linear layer z @ W + b producing a flat Phi"""
    z = as_tensor(z.z if isinstance(z, LatentCode) else z)
    layout = linear_hypernet_layout(config, z.size)
    if isinstance(hparams, ParameterVector):
        if hparams.layout != layout:
            raise ShapeMismatchError("linear_hypernet_forward", [(len(hparams),), (layout_size(layout),)])
        views = hparams.views()
    else:
        views = ParameterVector(layout).views(hparams)
    out = ops.add(ops.matmul(ops.reshape(z, (1, z.size)), views["weight"]), views["bias"])
    return ops.reshape(out, (layout_size(mlp_layout(config)),))


def build_bias_only_hypernet(concat_params: ParameterVector, config: MlpConfig,
                             latent_dim: int) -> ParameterVector:
    """
    Rewrite a concatenation-conditioned decoder as a linear hypernetwork

    The coordinate part of every weight matrix becomes a constant in the
    hypernetwork bias. The latent part of each injected layer, z @ W_z, only
    shifts that layer's bias, so it becomes hypernetwork weights that write
    into the bias segment and nowhere else.

    Args:
        concat_params: Decoder parameters laid out by concat_layout(config, latent_dim)
        config: Topology of the unconditioned network
        latent_dim: Latent code size

    Returns:
        Linear hypernetwork parameters for linear_hypernet_forward
    """
    if concat_params.layout != concat_layout(config, latent_dim):
        raise ShapeMismatchError("build_bias_only_hypernet", [(len(concat_params),)],
                                 "not a concat decoder for this config")
    plain = ParameterVector(mlp_layout(config))
    hyper = ParameterVector(linear_hypernet_layout(config, latent_dim))
    weight = np.zeros((latent_dim, len(plain)))
    bias = np.zeros(len(plain))
    inject = concat_injection_layers(config)
    for i, (fan_in, _) in enumerate(config.layer_dims()):
        w = concat_params.get(f"layer{i}.weight")
        b = concat_params.get(f"layer{i}.bias")
        wseg = plain.segment(f"layer{i}.weight")
        bseg = plain.segment(f"layer{i}.bias")
        bias[wseg.offset:wseg.stop] = w[:fan_in].reshape(-1)
        bias[bseg.offset:bseg.stop] = b
        if i in inject:
            weight[:, bseg.offset:bseg.stop] = w[fan_in:]
    hyper.set("weight", weight)
    hyper.set("bias", bias)
    return hyper
