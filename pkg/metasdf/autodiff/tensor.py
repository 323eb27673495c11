"""
Dense f64 tensors recorded on a dynamic graph

Every differentiable op appends a Node that remembers its inputs and a
backward closure. Backward closures are themselves written with tensor ops,
so running them while recording yields a graph that can be differentiated
again (second-order gradients through unrolled inner loops).
"""
import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

_node_counter = itertools.count()
_generation_counter = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether ops on the current thread are being recorded"""
    return getattr(_state, "grad_enabled", True)


@contextmanager
def set_grad_enabled(mode: bool) -> Iterator[None]:
    previous = is_grad_enabled()
    _state.grad_enabled = mode
    try:
        yield
    finally:
        _state.grad_enabled = previous


def no_grad():
    """Context manager that stops recording on the current thread"""
    return set_grad_enabled(False)


def enable_grad():
    """Context manager that (re)starts recording on the current thread"""
    return set_grad_enabled(True)


class Node:
    """One recorded op: inputs, the closure mapping output grad to input grads"""
    __slots__ = ("op", "inputs", "backward", "index", "generation")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...],
                 backward: Callable[["Tensor"], Sequence[Optional["Tensor"]]], generation: int):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        # Monotone across the process, so sorting by index is a topological order
        self.index = next(_node_counter)
        self.generation = generation


class Graph:
    """
    Append-only record of ops for one worker.

    Nodes link to their inputs, so the record is the chain of parent links
    reachable from a loss; it is released as soon as the caller drops the
    tensors. The generation counter tells graphs apart in diagnostics.
    """

    def __init__(self):
        self.generation = next(_generation_counter)
        self.size = 0

    def record(self, op: str, inputs: Tuple["Tensor", ...],
               backward: Callable[["Tensor"], Sequence[Optional["Tensor"]]]) -> Node:
        self.size += 1
        return Node(op, inputs, backward, self.generation)


def current_graph() -> Graph:
    graph = getattr(_state, "graph", None)
    if graph is None:
        graph = Graph()
        _state.graph = graph
    return graph


@contextmanager
def graph_scope() -> Iterator[Graph]:
    """Record into a fresh graph for the duration of the block (one task adaptation)"""
    previous = getattr(_state, "graph", None)
    graph = Graph()
    _state.graph = graph
    try:
        yield graph
    finally:
        _state.graph = previous


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


class Tensor:
    """
    Dense float64 array with an optional graph node.

    Leaves are created with requires_grad=True; results of ops on tracked
    tensors carry the Node that produced them. Untracked tensors behave as
    constants and receive no gradient.
    """
    __slots__ = ("data", "requires_grad", "node", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, node: Optional[Node] = None,
                 name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node = node
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def tracked(self) -> bool:
        return self.requires_grad or self.node is not None

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        origin = f", op={self.node.op}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{origin}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # Arithmetic sugar; the ops module does the work
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, key):
        return ops.take(self, key)

    @property
    def T(self) -> "Tensor":
        return ops.transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(value: ArrayLike) -> Tensor:
    """Wrap arrays and scalars as constant tensors; tensors pass through"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


from metasdf.autodiff import ops  # noqa: E402  (ops needs Tensor defined)
