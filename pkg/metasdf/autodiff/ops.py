"""
Differentiable operations over Tensor

Each op computes its value with numpy and records a backward closure that is
expressed with the same ops, which is what makes second-order gradients work.
"""
import builtins
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from metasdf.autodiff.tensor import Tensor, as_tensor, current_graph, is_grad_enabled
from metasdf.errors import ShapeMismatchError

Backward = Callable[[Tensor], Sequence[Optional[Tensor]]]


def _make(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward: Backward) -> Tensor:
    if is_grad_enabled() and builtins.any(t.tracked for t in inputs):
        return Tensor(data, node=current_graph().record(op, inputs, backward))
    return Tensor(data)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, [a.shape, b.shape], "not broadcastable") from None


def _reduce_to_shape(data: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so data ends up with the given shape"""
    if data.shape == tuple(shape):
        return data
    extra = data.ndim - len(shape)
    if extra < 0:
        raise ShapeMismatchError("sum_to", [data.shape, shape])
    if extra:
        data = data.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and data.shape[i] != 1)
    if axes:
        data = data.sum(axis=axes, keepdims=True)
    if data.shape != tuple(shape):
        raise ShapeMismatchError("sum_to", [data.shape, shape])
    return data


# ---------------------------------------------------------------- shape plumbing

def sum_to(a, shape: Tuple[int, ...]) -> Tensor:
    """Reduce a broadcast result back to `shape` (adjoint of broadcast_to)"""
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    data = _reduce_to_shape(a.data, shape)
    return _make("sum_to", data, (a,), lambda g: (broadcast_to(g, a.shape),))


def broadcast_to(a, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeMismatchError("broadcast_to", [a.shape, shape]) from None
    return _make("broadcast_to", data, (a,), lambda g: (sum_to(g, a.shape),))


def reshape(a, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", [a.shape, tuple(shape)]) from None
    return _make("reshape", data, (a,), lambda g: (reshape(g, a.shape),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatchError("transpose", [a.shape], "expected a matrix")
    return _make("transpose", a.data.T.copy(), (a,), lambda g: (transpose(g),))


def take(a, key) -> Tensor:
    """Basic (slice/integer) indexing; the adjoint is untake"""
    a = as_tensor(a)
    try:
        data = np.array(a.data[key], dtype=np.float64)
    except IndexError:
        raise ShapeMismatchError("take", [a.shape], f"bad index {key!r}") from None
    return _make("take", data, (a,), lambda g: (untake(g, key, a.shape),))


def untake(g, key, shape: Tuple[int, ...]) -> Tensor:
    """Place g into a zero tensor of `shape` at `key`"""
    g = as_tensor(g)
    data = np.zeros(shape, dtype=np.float64)
    data[key] = g.data
    return _make("untake", data, (g,), lambda h: (take(h, key),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    """Concatenate along an axis (the last one by default)"""
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeMismatchError("concat", [], "nothing to concatenate")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", [t.shape for t in tensors]) from None
    ndim = data.ndim
    axis = axis % ndim
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g: Tensor):
        grads = []
        for t, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
            if not t.tracked:
                grads.append(None)
                continue
            key = tuple(slice(None) if i != axis else slice(int(start), int(stop)) for i in range(ndim))
            grads.append(take(g, key))
        return grads

    return _make("concat", data, tensors, backward)


def stack(vectors: Sequence) -> Tensor:
    """Rows of equal-length flat vectors as a matrix"""
    rows = [reshape(v, (1, -1)) for v in (as_tensor(v) for v in vectors)]
    return concat(rows, axis=0)


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _make("add", a.data + b.data, (a, b), lambda g: (
        sum_to(g, a.shape) if a.tracked else None,
        sum_to(g, b.shape) if b.tracked else None,
    ))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("subtract", a, b)
    return _make("subtract", a.data - b.data, (a, b), lambda g: (
        sum_to(g, a.shape) if a.tracked else None,
        neg(sum_to(g, b.shape)) if b.tracked else None,
    ))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("multiply", a, b)
    return _make("multiply", a.data * b.data, (a, b), lambda g: (
        sum_to(mul(g, b), a.shape) if a.tracked else None,
        sum_to(mul(g, a), b.shape) if b.tracked else None,
    ))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("divide", a, b)
    return _make("divide", a.data / b.data, (a, b), lambda g: (
        sum_to(div(g, b), a.shape) if a.tracked else None,
        sum_to(neg(div(mul(g, a), mul(b, b))), b.shape) if b.tracked else None,
    ))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make("negate", -a.data, (a,), lambda g: (neg(g),))


def scale(a, factor: float) -> Tensor:
    """Multiply by a python scalar"""
    return mul(a, Tensor(float(factor)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", [a.shape, b.shape])
    return _make("matmul", a.data @ b.data, (a, b), lambda g: (
        matmul(g, transpose(b)) if a.tracked else None,
        matmul(transpose(a), g) if b.tracked else None,
    ))


# ---------------------------------------------------------------- pointwise

def relu(a) -> Tensor:
    a = as_tensor(a)
    # Subgradient 0 at exactly 0
    mask = a.data > 0
    data = np.where(mask, a.data, 0.0)
    return _make("relu", data, (a,), lambda g: (mul(g, Tensor(mask.astype(np.float64))),))


def _sigmoid_data(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)

    def backward(g: Tensor):
        s = sigmoid(a)
        return (mul(g, mul(s, sub(1.0, s))),)

    return _make("sigmoid", _sigmoid_data(a.data), (a,), backward)


def softplus(a) -> Tensor:
    """log(1 + exp(a)), computed without overflow"""
    a = as_tensor(a)
    return _make("softplus", np.logaddexp(0.0, a.data), (a,), lambda g: (mul(g, sigmoid(a)),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    return _make("exp", np.exp(a.data), (a,), lambda g: (mul(g, exp(a)),))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make("log", np.log(a.data), (a,), lambda g: (div(g, a),))


def abs(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _make("abs", np.abs(a.data), (a,), lambda g: (mul(g, Tensor(sign)),))


def clip(a, low: float, high: float) -> Tensor:
    a = as_tensor(a)
    inside = ((a.data > low) & (a.data < high)).astype(np.float64)
    return _make("clip", np.clip(a.data, low, high), (a,), lambda g: (mul(g, Tensor(inside)),))


# ---------------------------------------------------------------- reductions

def _normalize_axis(axis, ndim: int):
    if axis is None:
        return None
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def _keepdims_shape(shape: Tuple[int, ...], axes) -> Tuple[int, ...]:
    if axes is None:
        return tuple(1 for _ in shape)
    return tuple(1 if i in axes else size for i, size in enumerate(shape))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axis(axis, builtins.max(a.ndim, 1))
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: Tensor):
        if not keepdims:
            g = reshape(g, _keepdims_shape(a.shape, axes))
        return (broadcast_to(g, a.shape),)

    return _make("sum", np.asarray(data, dtype=np.float64), (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axis(axis, builtins.max(a.ndim, 1))
    if axes is None:
        count = a.size
    else:
        count = int(np.prod([a.shape[ax] for ax in axes]))
    if count == 0:
        raise ShapeMismatchError("mean", [a.shape], "mean of an empty tensor")
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def max(a, axis: int = 0, keepdims: bool = False) -> Tensor:
    """Maximum along one axis; ties send the gradient to the first maximum"""
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ShapeMismatchError("max", [a.shape], "max over an empty axis")
    axis = axis % a.ndim
    idx = np.argmax(a.data, axis=axis)
    mask = np.zeros_like(a.data)
    np.put_along_axis(mask, np.expand_dims(idx, axis), 1.0, axis=axis)
    data = a.data.max(axis=axis, keepdims=keepdims)

    def backward(g: Tensor):
        if not keepdims:
            g = reshape(g, _keepdims_shape(a.shape, (axis,)))
        return (mul(broadcast_to(g, a.shape), Tensor(mask)),)

    return _make("max", data, (a,), backward)
