"""
Loss functions for SDF regression
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from metasdf import config
from metasdf.autodiff import Tensor, as_tensor, ops
from metasdf.errors import LossError


def _flat(pred, target) -> Tuple[Tensor, Tensor]:
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.size == 0:
        raise LossError("loss of an empty batch")
    pred = ops.reshape(pred, (pred.size,))
    target = ops.reshape(target, (target.size,))
    if pred.size != target.size:
        raise LossError(f"prediction/target length mismatch: {pred.size} vs {target.size}")
    return pred, target


def l1_loss(pred, target) -> Tensor:
    """Mean absolute error"""
    pred, target = _flat(pred, target)
    return ops.mean(ops.abs(ops.sub(pred, target)))


def clamped_l1(pred, target, delta: float = config.CLAMP_DELTA) -> Tensor:
    """Mean |clamp(pred, +-delta) - clamp(target, +-delta)|"""
    if delta <= 0:
        raise LossError(f"clamp delta must be positive, got {delta}")
    pred, target = _flat(pred, target)
    return ops.mean(ops.abs(ops.sub(ops.clip(pred, -delta, delta), ops.clip(target, -delta, delta))))


@dataclass
class CompositeLossState:
    """Learned log-variances (a for the distance term, b for the sign term)"""
    log_var_sdf: float = 0.0
    log_var_sign: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([self.log_var_sdf, self.log_var_sign], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "CompositeLossState":
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size != 2 or not np.isfinite(values).all():
            raise LossError(f"invalid composite loss state {values}")
        return cls(float(values[0]), float(values[1]))


def sign_targets(target: np.ndarray) -> np.ndarray:
    """1 for outside (s >= 0, boundary points count as outside), else 0"""
    return (np.asarray(target) >= 0.0).astype(np.float64)


def composite_terms(pred, target, state) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Uncertainty-weighted distance + sign loss

    Args:
        pred: (n, 2) predictions: signed distance and sign logit
        target: (n,) true signed distances
        state: Tensor [a, b] of log-variances, or a CompositeLossState

    Returns:
        (total, unweighted l1 term, unweighted BCE term)
        total = exp(-a) * l1 + a + exp(-b) * bce + b
    """
    pred = as_tensor(pred)
    target_data = np.asarray(getattr(target, "data", target), dtype=np.float64).reshape(-1)
    if pred.ndim != 2 or pred.shape[1] != 2:
        raise LossError(f"composite loss needs (n, 2) predictions, got {pred.shape}")
    if pred.shape[0] != target_data.size:
        raise LossError(f"prediction/target length mismatch: {pred.shape[0]} vs {target_data.size}")
    if isinstance(state, CompositeLossState):
        state = Tensor(state.to_array())
    distance = pred[:, 0]
    logit = pred[:, 1]
    l1_term = l1_loss(distance, target_data)
    y = Tensor(sign_targets(target_data))
    bce_term = ops.mean(ops.sub(ops.softplus(logit), ops.mul(logit, y)))
    a = state[0]
    b = state[1]
    total = ops.add(ops.add(ops.mul(ops.exp(ops.neg(a)), l1_term), a),
                    ops.add(ops.mul(ops.exp(ops.neg(b)), bce_term), b))
    return total, l1_term, bce_term


def composite_loss(pred, target, state) -> Tensor:
    return composite_terms(pred, target, state)[0]


def combine_outputs(distance, sign_logit) -> np.ndarray:
    """Test-time SDF: |distance| with the sign of the classifier (logit >= 0 is outside)"""
    distance = np.asarray(distance, dtype=np.float64)
    sign = np.where(np.asarray(sign_logit) >= 0.0, 1.0, -1.0)
    return np.abs(distance) * sign


def compute_loss(name: str, pred, target, state=None, delta: float = config.CLAMP_DELTA) -> Tensor:
    """
    Dispatch on a loss name

    Args:
        name: 'l1', 'clamped' or 'composite'
        pred: Network output, (n, 1) or (n, 2)
        target: (n,) signed distances
        state: Composite-loss log-variances (composite only)
        delta: Clamp for 'clamped'
    """
    if name == "composite":
        if state is None:
            raise LossError("composite loss needs a loss state")
        return composite_loss(pred, target, state)
    pred = as_tensor(pred)
    if pred.ndim == 2 and pred.shape[1] == 2:
        pred = pred[:, 0]
    if name == "l1":
        return l1_loss(pred, target)
    if name == "clamped":
        return clamped_l1(pred, target, delta)
    raise LossError(f"unknown loss '{name}'")


def predictions_to_sdf(outputs: np.ndarray) -> np.ndarray:
    """Network outputs (n, 1) or (n, 2) -> (n,) signed distances"""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim == 2 and outputs.shape[1] == 2:
        return combine_outputs(outputs[:, 0], outputs[:, 1])
    return outputs.reshape(-1)


def scalar(loss: Optional[Tensor]) -> float:
    return float("nan") if loss is None else float(loss.data.reshape(-1)[0])
