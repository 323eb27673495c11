"""
Higher-order reverse-mode differentiation over numpy arrays
"""
from metasdf.autodiff.tensor import (
    Graph, Tensor, as_tensor, current_graph, enable_grad, graph_scope, is_grad_enabled,
    no_grad, set_grad_enabled,
)
from metasdf.autodiff import ops
from metasdf.autodiff.gradients import GradientCheck, check_gradient, grad

__all__ = [
    "Graph", "Tensor", "as_tensor", "current_graph", "enable_grad", "graph_scope",
    "is_grad_enabled", "no_grad", "set_grad_enabled", "ops", "GradientCheck",
    "check_gradient", "grad",
]
