"""Central finite-difference gradient checking against the tape."""

from __future__ import annotations

from typing import Callable

import numpy as np

from augflow import tensor as T
from augflow.tensor import Tensor


def autodiff_grads(loss_fn: Callable[[], Tensor], params: list[Tensor]) -> list[np.ndarray]:
    T.zero_grads(params)
    loss = loss_fn()
    T.backward(loss)
    return [
        np.zeros_like(p.data) if p.grad is None else np.array(p.grad, copy=True)
        for p in params
    ]


def finite_diff_grads(
    loss_fn: Callable[[], Tensor], params: list[Tensor], h: float = 1e-5
) -> list[np.ndarray]:
    """Central differences, perturbing every coordinate of every parameter."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            dn = float(loss_fn().data)
            flat[i] = orig
            gflat[i] = (up - dn) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(
    loss_fn: Callable[[], Tensor],
    params: list[Tensor],
    h: float = 1e-5,
    floor: float = 1e-4,
) -> float:
    """max_i |ad_i - fd_i| / max(|ad_i|, |fd_i|, floor) over all coordinates.

    The floor turns the comparison into an absolute tolerance where both
    gradients are tiny, which keeps finite-difference roundoff from
    dominating.
    """
    ad = autodiff_grads(loss_fn, params)
    fd = finite_diff_grads(loss_fn, params, h=h)
    worst = 0.0
    for a, f in zip(ad, fd):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float((np.abs(a - f) / denom).max()))
    return worst
