"""
The implicit network: plain and concatenation-conditioned relu MLPs
"""
from typing import Optional, Union

import numpy as np

from metasdf.autodiff import Tensor, as_tensor, ops
from metasdf.errors import ShapeMismatchError
from metasdf.nets.parameters import (
    LatentCode, Layout, MlpConfig, ParameterVector, ParamsLike, concat_injection_layers,
    concat_layout, mlp_layout,
)


def init_params(layout: Layout, seed: Optional[int]) -> ParameterVector:
    """
    Kaiming-uniform weights (bound sqrt(6 / fan_in)) and zero biases

    Args:
        layout: Segment table; weights are the 2-D segments
        seed: RNG seed, same seed gives the same buffer

    Returns:
        Initialized ParameterVector
    """
    rng = np.random.default_rng(seed)
    params = ParameterVector(layout)
    for seg in layout:
        if len(seg.shape) == 2:
            bound = np.sqrt(6.0 / seg.shape[0])
            params.set(seg.name, rng.uniform(-bound, bound, size=seg.shape))
    return params


def init_mlp(config: MlpConfig, seed: Optional[int] = 0) -> ParameterVector:
    return init_params(mlp_layout(config), seed)


def init_concat_mlp(config: MlpConfig, latent_dim: int, seed: Optional[int] = 0) -> ParameterVector:
    return init_params(concat_layout(config, latent_dim), seed)


def _segment_views(params: ParamsLike, layout: Layout):
    if isinstance(params, ParameterVector):
        if params.layout != layout:
            raise ShapeMismatchError("mlp_forward", [(len(params),), (layout[-1].stop,)],
                                     "parameter layout does not match the network")
        return params.views()
    return ParameterVector(layout).views(params)


def _check_coords(coords, in_dim: int, op: str) -> Tensor:
    coords = as_tensor(coords)
    if coords.ndim != 2 or coords.shape[1] != in_dim:
        raise ShapeMismatchError(op, [coords.shape, (-1, in_dim)], "coords must be (n, in_dim)")
    return coords


def mlp_forward(params: ParamsLike, config: MlpConfig, coords) -> Tensor:
    """
    Evaluate Phi(coords; params)

    Args:
        params: ParameterVector or flat tensor laid out by mlp_layout(config)
        config: Network topology
        coords: (n, in_dim) points

    Returns:
        (n, out_dim) tensor, differentiable w.r.t. params and coords
    """
    coords = _check_coords(coords, config.in_dim, "mlp_forward")
    w = _segment_views(params, mlp_layout(config))
    h = coords
    for i in range(config.num_layers):
        h = ops.add(ops.matmul(h, w[f"layer{i}.weight"]), w[f"layer{i}.bias"])
        if i < config.num_layers - 1:
            h = ops.relu(h)
    return h


def tile_latent(z: Union[LatentCode, Tensor, np.ndarray], n: int) -> Tensor:
    """Repeat a latent code along a new leading axis of length n"""
    if isinstance(z, LatentCode):
        z = z.z
    z = as_tensor(z)
    return ops.broadcast_to(ops.reshape(z, (1, z.size)), (n, z.size))


def concat_forward(params: ParamsLike, z, coords, config: MlpConfig) -> Tensor:
    """
    Concatenation-conditioned Phi

    The latent code is appended to the input and again to the input of the
    third linear layer.

    Args:
        params: Parameters laid out by concat_layout(config, latent_dim)
        z: Latent code (LatentCode, array or tensor)
        coords: (n, in_dim) points
        config: Topology of the unconditioned network

    Returns:
        (n, out_dim) tensor, differentiable w.r.t. params, z and coords
    """
    coords = _check_coords(coords, config.in_dim, "concat_forward")
    latent_dim = z.dim if isinstance(z, LatentCode) else as_tensor(z).size
    layout = concat_layout(config, latent_dim)
    if isinstance(params, ParameterVector) and params.layout != layout:
        raise ShapeMismatchError("concat_forward", [(len(params),), (layout[-1].stop,)],
                                 f"decoder not built for latent dim {latent_dim}")
    w = _segment_views(params, layout)
    zt = tile_latent(z, coords.shape[0])
    inject = concat_injection_layers(config)
    h = coords
    for i in range(config.num_layers):
        if i in inject:
            h = ops.concat([h, zt], axis=-1)
        h = ops.add(ops.matmul(h, w[f"layer{i}.weight"]), w[f"layer{i}.bias"])
        if i < config.num_layers - 1:
            h = ops.relu(h)
    return h
