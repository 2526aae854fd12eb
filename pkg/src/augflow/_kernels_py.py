"""NumPy implementations of the hot training kernels.

This module is both the import-time fallback and the semantic reference for
the compiled backend (``augflow._kernels_c``), which mirrors every signature
here. Matrix multiplication itself is deliberately *not* part of this layer:
both backends route GEMM through NumPy/BLAS, where it already runs at native
speed. What lives here are the memory-bound fused passes around the GEMMs.

Conventions: float64 arrays, C-contiguous; index arrays are int64; masks are
uint8 (0/1). Forward kernels allocate fresh outputs; backward kernels never
alias their inputs.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def bias_leaky_fwd(xw: np.ndarray, b: np.ndarray, slope: float) -> np.ndarray:
    """out = leaky(xw + b), leaky(t) = t if t > 0 else slope * t."""
    t = xw + b
    return np.where(t > 0.0, t, slope * t)


def bias_leaky_bwd(out: np.ndarray, gout: np.ndarray, slope: float):
    """Returns (grad_xw, grad_b). Uses sign(out), valid since leaky is monotone."""
    gxw = gout * np.where(out > 0.0, 1.0, slope)
    return gxw, gxw.sum(axis=0)


def bias_add_fwd(xw: np.ndarray, b: np.ndarray) -> np.ndarray:
    return xw + b


def bias_add_bwd(gout: np.ndarray):
    return gout, gout.sum(axis=0)


def leaky_fwd(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def leaky_bwd(out: np.ndarray, gout: np.ndarray, slope: float) -> np.ndarray:
    return gout * np.where(out > 0.0, 1.0, slope)


def adam_step(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """One bias-corrected Adam update, in place on p/m/v (flat views)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def masked_log_softmax_fwd(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax restricted to mask==1 entries; masked outputs are -inf.

    Every row must have at least one valid entry.
    """
    ml = np.where(mask != 0, logits, -np.inf)
    mx = ml.max(axis=1, keepdims=True)
    z = np.exp(ml - mx)
    s = z.sum(axis=1, keepdims=True)
    return ml - mx - np.log(s)


def masked_log_softmax_bwd(
    lsm: np.ndarray, mask: np.ndarray, gout: np.ndarray
) -> np.ndarray:
    rs = gout.sum(axis=1, keepdims=True)
    return np.where(mask != 0, gout - np.exp(lsm) * rs, 0.0)


def segment_sum_fwd(x: np.ndarray, seg: np.ndarray, nseg: int) -> np.ndarray:
    return np.bincount(seg, weights=x, minlength=nseg)


def segment_sum_bwd(gout: np.ndarray, seg: np.ndarray) -> np.ndarray:
    return gout[seg]


def gather_rows_fwd(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return x[idx]


def scatter_add_rows(gout: np.ndarray, idx: np.ndarray, nrows: int) -> np.ndarray:
    out = np.zeros((nrows,) + gout.shape[1:], dtype=np.float64)
    np.add.at(out, idx, gout)
    return out


def take_pairs_fwd(x: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return x[rows, cols]


def scatter_add_pairs(
    gout: np.ndarray, rows: np.ndarray, cols: np.ndarray, nrows: int, ncols: int
) -> np.ndarray:
    out = np.zeros((nrows, ncols), dtype=np.float64)
    np.add.at(out, (rows, cols), gout)
    return out


def one_hot_pairs(coords: np.ndarray, side: int) -> np.ndarray:
    """Per-coordinate one-hot featurization: [N, D] int64 -> [N, D*side] float64."""
    n, d = coords.shape
    out = np.zeros((n, d * side), dtype=np.float64)
    cols = coords + np.arange(d, dtype=np.int64) * side
    out[np.arange(n)[:, None], cols] = 1.0
    return out


def rollout_steps(
    cum: np.ndarray, strides: np.ndarray, stop_action: int, u: np.ndarray
):
    """Lockstep trajectory sampling over a precomputed cumulative-probability
    table (one row per cell). u[k, b] is the uniform draw for rollout b at
    step k; every active rollout consumes its draw each step, so the stream
    layout is backend-independent. Returns (actions [B, S], lengths [B])."""
    max_steps, batch = u.shape
    d = strides.shape[0]
    coords = np.zeros((batch, d), dtype=np.int64)
    active = np.ones(batch, dtype=bool)
    actions = np.full((batch, max_steps), -1, dtype=np.int64)
    lengths = np.zeros(batch, dtype=np.int64)
    for k in range(max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        rows = cum[coords[idx] @ strides]
        choice = np.minimum(
            (rows <= u[k, idx][:, None]).sum(axis=1), stop_action
        ).astype(np.int64)
        actions[idx, k] = choice
        lengths[idx] = k + 1
        stopped = choice == stop_action
        active[idx[stopped]] = False
        move = idx[~stopped]
        coords[move, choice[~stopped]] += 1
    if active.any():
        raise ValueError("rollout exceeded the step budget")
    return actions, lengths
