"""
Reverse-mode gradients and a finite-difference gradient checker
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from metasdf.autodiff import ops
from metasdf.autodiff.tensor import Tensor, set_grad_enabled
from metasdf.errors import AutodiffError, NonFiniteError
from metasdf.utils.logging_utils import log_debug, log_problem


def _collect_nodes(loss: Tensor) -> List[Tensor]:
    """All non-leaf tensors reachable from loss, latest op first"""
    seen = set()
    found = []
    stack = [loss]
    while stack:
        t = stack.pop()
        if t.node is None or id(t) in seen:
            continue
        seen.add(id(t))
        found.append(t)
        stack.extend(t.node.inputs)
    found.sort(key=lambda t: t.node.index, reverse=True)
    return found


def grad(loss: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> List[Tensor]:
    """
    Gradients of a scalar loss with respect to a list of tensors

    Args:
        loss: Scalar tensor produced by recorded ops
        wrt: Tensors to differentiate against (leaves or intermediate results)
        create_graph: Record the backward pass so the gradients can be differentiated again

    Returns:
        One gradient tensor per entry of wrt, shaped like it. Targets the loss
        does not depend on get zeros and a problem-log entry.
    """
    if loss.size != 1:
        raise AutodiffError(f"grad needs a scalar loss, got shape {loss.shape}")
    wrt = list(wrt)
    grads: Dict[int, Tensor] = {id(loss): Tensor(np.ones_like(loss.data))}
    targets = {id(t) for t in wrt}
    nodes = _collect_nodes(loss)

    # Only ops with a target somewhere upstream need a backward call
    relevant = set(targets)
    for t in reversed(nodes):
        if any(id(p) in relevant for p in t.node.inputs):
            relevant.add(id(t))

    with set_grad_enabled(create_graph):
        for t in nodes:
            g = grads.get(id(t))
            if g is None or id(t) not in relevant:
                continue
            if id(t) not in targets:
                # Intermediate gradients are no longer needed once propagated
                del grads[id(t)]
            if not any(id(p) in relevant for p in t.node.inputs):
                continue
            input_grads = t.node.backward(g)
            for parent, pg in zip(t.node.inputs, input_grads):
                key = id(parent)
                if pg is None or key not in relevant:
                    continue
                grads[key] = pg if key not in grads else ops.add(grads[key], pg)

    result = []
    for i, t in enumerate(wrt):
        g = grads.get(id(t))
        if g is None:
            log_problem(f"grad: target {i} ({t.name or 'unnamed'}) is not reachable from the loss; returning zeros")
            g = Tensor(np.zeros_like(t.data))
        elif not create_graph:
            g = g.detach()
        result.append(g)
    return result


def _central_difference(value: Callable[[np.ndarray], float], base: np.ndarray, i: int, h: float,
                        f0: float, kink_tol: float):
    """
    Central difference along coordinate i, or None when the step straddles a kink

    One-sided slopes of a smooth function differ by about |f''| h. A large gap
    is re-measured at h/2 and h/4 and must halve both times; a kink inside the
    window keeps the gap roughly constant or makes it vanish once the window
    no longer reaches it.
    """
    def one_sided(step: float):
        plus = base.copy()
        minus = base.copy()
        plus[i] += step
        minus[i] -= step
        fp, fm = value(plus), value(minus)
        return abs((fp - f0) - (f0 - fm)) / step, (fp - fm) / (2.0 * step), max(abs(fp - f0), abs(f0 - fm)) / step

    gap, numeric, slope = one_sided(h)
    if gap <= kink_tol * max(slope, 1.0):
        return numeric
    for step in (h / 2.0, h / 4.0):
        smaller, _, _ = one_sided(step)
        if not 0.4 * gap <= smaller <= 0.6 * gap:
            return None
        gap = smaller
    return numeric


@dataclass
class GradientCheck:
    """Outcome of a finite-difference comparison"""
    max_rel_error: float
    checked: int
    excluded: List[int] = field(default_factory=list)


def check_gradient(f: Callable[[Tensor], Tensor], params: np.ndarray, h: float = 1e-5,
                   floor: float = 1e-8, kink_tol: float = 1e-3) -> GradientCheck:
    """
    Compare grad against central differences coordinate by coordinate

    Args:
        f: Maps a flat parameter tensor to a scalar loss tensor
        params: Flat parameter values (or a ParameterVector)
        h: Finite-difference step
        floor: Absolute floor in the relative-error denominator
        kink_tol: One-sided differences disagreeing by more than this (relative)
            are re-measured at smaller steps; coordinates whose gap does not
            shrink in proportion are treated as straddling a kink and excluded

    Returns:
        GradientCheck with the worst relative error over the checked coordinates
    """
    if h <= 0:
        raise AutodiffError("check_gradient needs h > 0")
    base = np.array(getattr(params, "data", params), dtype=np.float64).reshape(-1)

    def value(x: np.ndarray) -> float:
        with set_grad_enabled(False):
            out = f(Tensor(x))
        v = float(out.data.reshape(-1)[0])
        if not np.isfinite(v):
            raise NonFiniteError("check_gradient: f returned a non-finite value")
        return v

    x = Tensor(base.copy(), requires_grad=True)
    loss = f(x)
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("check_gradient: f returned a non-finite value")
    analytic = grad(loss, [x])[0].data.reshape(-1)

    f0 = value(base)
    worst = 0.0
    excluded = []
    for i in range(base.size):
        numeric = _central_difference(value, base, i, h, f0, kink_tol)
        if numeric is None:
            excluded.append(i)
            continue
        err = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), floor)
        worst = max(worst, err)

    if excluded:
        log_problem(f"check_gradient: {len(excluded)} coordinate(s) near a kink excluded")
    log_debug(f"check_gradient: {base.size - len(excluded)} coordinates, max rel error {worst:.3e}")
    return GradientCheck(max_rel_error=worst, checked=base.size - len(excluded), excluded=excluded)
