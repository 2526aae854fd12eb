"""Adam optimizer over tape Tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from augflow.backend import kernels as K
from augflow.tensor import Tensor


@dataclass
class AdamState:
    """Bias-corrected Adam (update = lr * m_hat / (sqrt(v_hat) + eps)).

    Holds first/second moment buffers for a fixed parameter list; `lr` may be
    adjusted between steps (e.g. for schedules).
    """

    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    _m: list[np.ndarray] = field(default_factory=list)
    _v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]


def adam_step(state: AdamState) -> None:
    """Apply one update in place from each parameter's accumulated .grad.

    Parameters whose grad is None are treated as having zero gradient (their
    moments still decay, matching a zero-gradient step).
    """
    state.t += 1
    for p, m, v in zip(state.params, state._m, state._v):
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        K.adam_step(
            p.data.reshape(-1),
            np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
            m.reshape(-1),
            v.reshape(-1),
            state.t,
            state.lr,
            state.beta1,
            state.beta2,
            state.eps,
        )


def zero_grad(state: AdamState) -> None:
    for p in state.params:
        p.grad = None
