"""
Permutation-invariant set encoder (per-point relu MLP + pooling)
"""
import numpy as np

from metasdf.autodiff import Tensor, ops
from metasdf.config import POOLINGS
from metasdf.errors import ConfigError, ShapeMismatchError
from metasdf.nets.mlp import mlp_forward
from metasdf.nets.parameters import MlpConfig, ParamsLike


def encoder_config(dim: int, hidden_dim: int, num_layers: int, latent_dim: int) -> MlpConfig:
    """Per-point network: (coord, sdf) -> feature of size latent_dim"""
    return MlpConfig(in_dim=dim + 1, hidden_dim=hidden_dim, num_layers=num_layers, out_dim=latent_dim)


def canonical_order(coords: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Index order sorting points by (value, last coord, ..., first coord)"""
    keys = [coords[:, j] for j in range(coords.shape[1])] + [values]
    return np.lexsort(keys)


def set_encode(eparams: ParamsLike, coords: np.ndarray, values: np.ndarray,
               config: MlpConfig, pooling: str = "mean") -> Tensor:
    """
    Encode a context set into a latent code

    Points are put into a canonical order before encoding, so any permutation
    of the same set gives a bit-identical code.

    Args:
        eparams: Encoder parameters laid out by mlp_layout(config)
        coords: (n, d) context coordinates
        values: (n,) context sdf values (zeros for level-set context)
        config: Encoder topology from encoder_config
        pooling: 'mean' or 'max'

    Returns:
        (latent_dim,) tensor
    """
    if pooling not in POOLINGS:
        raise ConfigError(f"Unknown pooling '{pooling}' (choose from {', '.join(POOLINGS)})")
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise ShapeMismatchError("set_encode", [coords.shape], "empty context")
    if values.shape[0] != coords.shape[0]:
        raise ShapeMismatchError("set_encode", [coords.shape, values.shape], "coords/values length")
    order = canonical_order(coords, values)
    points = np.concatenate([coords[order], values[order, None]], axis=1)
    features = mlp_forward(eparams, config, points)
    if pooling == "mean":
        return ops.mean(features, axis=0)
    return ops.max(features, axis=0)
