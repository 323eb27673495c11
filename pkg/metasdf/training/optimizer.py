"""
ADAM over named numpy arrays
"""
from typing import Dict, Tuple

import numpy as np

from metasdf.errors import CheckpointError


class Adam:
    """
    ADAM with per-entry moment buffers and step counts

    Entries that receive no gradient in a step keep their moments and step
    count untouched (sparse updates for per-shape latent codes).
    """

    def __init__(self, lr: float = 1e-4, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t: Dict[str, int] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """
        Update params in place

        Args:
            params: Named parameter arrays (modified in place)
            grads: Gradients for some or all of the names
        """
        for name in sorted(grads):
            g = np.asarray(grads[name], dtype=np.float64)
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
                self.t[name] = 0
            self.t[name] += 1
            t = self.t[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1 ** t)
            v_hat = self.v[name] / (1.0 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_buffers(self, prefix: str = "adam") -> Dict[str, np.ndarray]:
        buffers = {}
        for name in self.m:
            buffers[f"{prefix}.m.{name}"] = self.m[name]
            buffers[f"{prefix}.v.{name}"] = self.v[name]
        return buffers

    def state_header(self) -> Dict[str, object]:
        return {"lr": self.lr, "betas": [self.beta1, self.beta2], "eps": self.eps, "steps": dict(self.t)}

    def load_state(self, header: Dict[str, object], buffers: Dict[str, np.ndarray], prefix: str = "adam") -> None:
        """Restore moments and step counts written by state_header/state_buffers"""
        steps = header.get("steps", {})
        for name, t in steps.items():
            try:
                self.m[name] = buffers[f"{prefix}.m.{name}"].copy()
                self.v[name] = buffers[f"{prefix}.v.{name}"].copy()
            except KeyError as e:
                raise CheckpointError(f"Optimizer state for '{name}' missing from checkpoint") from e
            self.t[name] = int(t)
