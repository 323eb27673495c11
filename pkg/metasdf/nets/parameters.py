"""
Flat parameter storage for networks

A ParameterVector is one f64 buffer with an ordered table of named segments.
Meta-learning treats the whole buffer as a single vector (theta, alpha and the
specialized phi all share a layout), while the forward passes read it back as
per-layer weight matrices and bias vectors.
"""
import hashlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from metasdf.autodiff import Tensor, ops
from metasdf.errors import ConfigError, ShapeMismatchError


@dataclass(frozen=True)
class MlpConfig:
    """Topology of a fully connected relu network (no normalization layers)"""
    in_dim: int = 2
    hidden_dim: int = 256
    num_layers: int = 4
    out_dim: int = 1
    nonlinearity: str = "relu"

    def __post_init__(self):
        if self.num_layers < 2:
            raise ConfigError(f"MlpConfig: num_layers must be >= 2, got {self.num_layers}")
        for name in ("in_dim", "hidden_dim", "out_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"MlpConfig: {name} must be >= 1")
        if self.nonlinearity != "relu":
            raise ConfigError(f"MlpConfig: unsupported nonlinearity '{self.nonlinearity}'")

    def layer_dims(self) -> List[Tuple[int, int]]:
        """(fan_in, fan_out) per linear layer"""
        dims = [self.in_dim] + [self.hidden_dim] * (self.num_layers - 1) + [self.out_dim]
        return list(zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class Segment:
    name: str
    shape: Tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def stop(self) -> int:
        return self.offset + self.size


Layout = Tuple[Segment, ...]


def make_layout(entries: Sequence[Tuple[str, Tuple[int, ...]]]) -> Layout:
    """Assign consecutive offsets so segments tile the buffer"""
    segments = []
    offset = 0
    for name, shape in entries:
        seg = Segment(name, tuple(int(s) for s in shape), offset)
        segments.append(seg)
        offset = seg.stop
    return tuple(segments)


def mlp_layout(config: MlpConfig, widen: Optional[Dict[int, int]] = None) -> Layout:
    """
    Segment table for an MLP

    Args:
        config: Network topology
        widen: Extra input width per layer index (concat conditioning)

    Returns:
        Layout with 'layer{i}.weight' (fan_in, fan_out) and 'layer{i}.bias' (fan_out,)
    """
    widen = widen or {}
    entries = []
    for i, (fan_in, fan_out) in enumerate(config.layer_dims()):
        entries.append((f"layer{i}.weight", (fan_in + widen.get(i, 0), fan_out)))
        entries.append((f"layer{i}.bias", (fan_out,)))
    return make_layout(entries)


def concat_injection_layers(config: MlpConfig) -> Tuple[int, ...]:
    """Layers that receive the latent code: the input layer and the third layer"""
    return (0, 2) if config.num_layers > 2 else (0,)


def concat_layout(config: MlpConfig, latent_dim: int) -> Layout:
    return mlp_layout(config, widen={i: latent_dim for i in concat_injection_layers(config)})


def layout_size(layout: Layout) -> int:
    return layout[-1].stop if layout else 0


class ParameterVector:
    """
    Named segments over one flat float64 buffer

    The buffer is owned by the vector; views handed out by `views()` are
    tensors over slices of a flat tensor so they stay on the graph.
    """

    def __init__(self, layout: Layout, data: Optional[np.ndarray] = None):
        self.layout = tuple(layout)
        size = layout_size(self.layout)
        if data is None:
            data = np.zeros(size, dtype=np.float64)
        data = np.asarray(data, dtype=np.float64).reshape(-1)
        if data.size != size:
            raise ShapeMismatchError("ParameterVector", [data.shape, (size,)], "buffer does not match layout")
        self.data = data.copy()

    def __len__(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"ParameterVector({len(self.layout)} segments, {len(self)} values)"

    @property
    def names(self) -> List[str]:
        return [seg.name for seg in self.layout]

    def segment(self, name: str) -> Segment:
        for seg in self.layout:
            if seg.name == name:
                return seg
        raise KeyError(name)

    def get(self, name: str) -> np.ndarray:
        seg = self.segment(name)
        return self.data[seg.offset:seg.stop].reshape(seg.shape)

    def set(self, name: str, value) -> None:
        seg = self.segment(name)
        value = np.asarray(value, dtype=np.float64)
        if value.shape != seg.shape:
            raise ShapeMismatchError(f"set {name}", [value.shape, seg.shape])
        self.data[seg.offset:seg.stop] = value.reshape(-1)

    def as_tensor(self, requires_grad: bool = False) -> Tensor:
        return Tensor(self.data.copy(), requires_grad=requires_grad)

    def views(self, flat: Optional[Tensor] = None) -> Dict[str, Tensor]:
        """Per-segment tensors sliced (differentiably) from a flat tensor"""
        flat = self.as_tensor() if flat is None else flat
        if flat.shape != (len(self),):
            raise ShapeMismatchError("views", [flat.shape, (len(self),)])
        return {seg.name: ops.reshape(flat[seg.offset:seg.stop], seg.shape) for seg in self.layout}

    def flatten(self) -> np.ndarray:
        return self.data.copy()

    def unflatten(self, flat) -> "ParameterVector":
        """New vector with this layout and the given values"""
        values = flat.data if isinstance(flat, Tensor) else flat
        return ParameterVector(self.layout, values)

    def to_dict(self) -> Dict[str, np.ndarray]:
        return {seg.name: self.get(seg.name).copy() for seg in self.layout}

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.layout, self.data)

    def zeros_like(self) -> "ParameterVector":
        return ParameterVector(self.layout)

    def full_like(self, value: float) -> "ParameterVector":
        return ParameterVector(self.layout, np.full(len(self), float(value)))

    def checksum(self) -> str:
        """sha256 over the little-endian buffer"""
        return hashlib.sha256(self.data.astype("<f8").tobytes()).hexdigest()

    def same_layout(self, other: "ParameterVector") -> bool:
        return self.layout == other.layout


@dataclass
class LatentCode:
    """Per-shape embedding z"""
    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64).reshape(-1)
        if not np.isfinite(self.z).all():
            raise ConfigError("LatentCode has non-finite entries")

    @classmethod
    def zeros(cls, dim: int) -> "LatentCode":
        return cls(np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.z.size


ParamsLike = Union[ParameterVector, Tensor]
