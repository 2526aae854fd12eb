"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a NumPy array plus an optional backward closure; building an
expression records a single-use tape, and ``backward`` on a scalar loss walks
it in reverse topological order, accumulating gradients into every
requires_grad leaf. The op set is exactly what the flow objectives need:
elementwise arithmetic, matmul, leaky rectifier, log/exp/sqrt/square,
reductions, log-sum-exp, masked log-softmax, gathers and segment sums.

Graphs are single-use: after ``backward`` the tape is released and a new
forward pass must rebuild it. Index arrays and masks are plain NumPy
constants, never Tensors.
"""

from __future__ import annotations

import numpy as np

from augflow.backend import kernels as K


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._bwd = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def is_leaf(self) -> bool:
        return self._bwd is None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _node(data, parents, bwd) -> Tensor:
    """Internal node; prunes the tape when no parent needs gradients."""
    tracked = tuple(p for p in parents if p.requires_grad)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if tracked:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    else:
        out.requires_grad = False
        out._parents = ()
        out._bwd = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, undoing NumPy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    The loss must be a scalar with a finite value. The traversed tape is
    released afterwards, so each graph supports exactly one backward pass.
    """
    if loss.data.shape != ():
        raise ValueError("backward requires a scalar loss")
    if not np.isfinite(loss.data):
        raise FloatingPointError("non-finite loss; forward pass diverged")
    if not loss.requires_grad:
        return

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._bwd is None:
            continue
        node._bwd(node.grad)
        node._bwd = None
        node._parents = ()
        node.grad = None


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), bwd)


def add_scalar(a: Tensor, c: float) -> Tensor:
    data = a.data + c

    def bwd(g):
        _accumulate(a, g)

    return _node(data, (a,), bwd)


def mul_scalar(a: Tensor, c: float) -> Tensor:
    data = a.data * c

    def bwd(g):
        _accumulate(a, g * c)

    return _node(data, (a,), bwd)


def mul_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Elementwise product with a constant array (no gradient into c)."""
    data = a.data * c

    def bwd(g):
        _accumulate(a, _unbroadcast(g * c, a.data.shape))

    return _node(data, (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra and activations

def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data @ b.data

    def bwd(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(data, (a, b), bwd)


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    data = K.leaky_fwd(x.data, slope)

    def bwd(g):
        _accumulate(x, K.leaky_bwd(data, g, slope))

    return _node(data, (x,), bwd)


def bias_leaky(xw: Tensor, b: Tensor, slope: float) -> Tensor:
    """Fused leaky(xw + b) for [N, K] activations and a [K] bias."""
    data = K.bias_leaky_fwd(xw.data, b.data, slope)

    def bwd(g):
        gxw, gb = K.bias_leaky_bwd(data, g, slope)
        _accumulate(xw, gxw)
        _accumulate(b, gb)

    return _node(data, (xw, b), bwd)


def bias_add(xw: Tensor, b: Tensor) -> Tensor:
    data = K.bias_add_fwd(xw.data, b.data)

    def bwd(g):
        gxw, gb = K.bias_add_bwd(g)
        _accumulate(xw, gxw)
        _accumulate(b, gb)

    return _node(data, (xw, b), bwd)


# ---------------------------------------------------------------------------
# nonlinear scalar maps

def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise ValueError("log of non-positive value")
    data = np.log(x.data)

    def bwd(g):
        _accumulate(x, g / x.data)

    return _node(data, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)

    def bwd(g):
        _accumulate(x, g * data)

    return _node(data, (x,), bwd)


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0.0):
        raise ValueError("sqrt of negative value")
    data = np.sqrt(x.data)

    def bwd(g):
        _accumulate(x, g * (0.5 / data))

    return _node(data, (x,), bwd)


def square(x: Tensor) -> Tensor:
    data = x.data * x.data

    def bwd(g):
        _accumulate(x, g * (2.0 * x.data))

    return _node(data, (x,), bwd)


def maximum_scalar(x: Tensor, c: float) -> Tensor:
    """Elementwise max(x, c); subgradient passes where x >= c."""
    data = np.maximum(x.data, c)

    def bwd(g):
        _accumulate(x, g * (x.data >= c))

    return _node(data, (x,), bwd)


# ---------------------------------------------------------------------------
# reductions

def sum_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum())

    def bwd(g):
        _accumulate(x, np.broadcast_to(g, x.data.shape).copy())

    return _node(data, (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    data = np.asarray(x.data.sum() / n)

    def bwd(g):
        _accumulate(x, np.broadcast_to(g / n, x.data.shape).copy())

    return _node(data, (x,), bwd)


def sum_axis(x: Tensor, axis: int) -> Tensor:
    data = x.data.sum(axis=axis)

    def bwd(g):
        _accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    return _node(data, (x,), bwd)


def logsumexp(x: Tensor, axis: int | None = None) -> Tensor:
    """Stable log-sum-exp over an axis (or all elements when axis is None)."""
    if axis is None:
        mx = np.asarray(x.data.max())
        data = np.asarray(np.log(np.exp(x.data - mx).sum()) + mx)

        def bwd(g):
            _accumulate(x, g * np.exp(x.data - data))

        return _node(data, (x,), bwd)

    mxk = x.data.max(axis=axis, keepdims=True)
    data = np.log(np.exp(x.data - mxk).sum(axis=axis)) + np.squeeze(mxk, axis=axis)

    def bwd(g):
        w = np.exp(x.data - np.expand_dims(data, axis))
        _accumulate(x, np.expand_dims(g, axis) * w)

    return _node(data, (x,), bwd)


def masked_log_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise log-softmax over mask==1 entries; masked positions yield -inf.

    The mask is a constant uint8/bool array of the same shape; gradients never
    flow to masked positions.
    """
    m8 = np.ascontiguousarray(mask, dtype=np.uint8)
    data = K.masked_log_softmax_fwd(np.ascontiguousarray(logits.data), m8)

    def bwd(g):
        _accumulate(logits, K.masked_log_softmax_bwd(data, m8, g))

    return _node(data, (logits,), bwd)


# ---------------------------------------------------------------------------
# indexing and segments (index arrays are constants)

def slice_cols(x: Tensor, j0: int, j1: int) -> Tensor:
    data = np.ascontiguousarray(x.data[:, j0:j1])

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[:, j0:j1] = g
        _accumulate(x, gx)

    return _node(data, (x,), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = x.data.reshape(shape)

    def bwd(g):
        _accumulate(x, g.reshape(x.data.shape))

    return _node(data, (x,), bwd)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """out[i] = x[idx[i]]; works for 1-D and 2-D x."""
    ix = np.ascontiguousarray(idx, dtype=np.int64)
    nrows = x.data.shape[0]
    data = K.gather_rows_fwd(x.data, ix)

    def bwd(g):
        _accumulate(x, K.scatter_add_rows(np.ascontiguousarray(g), ix, nrows))

    return _node(data, (x,), bwd)


def take_pairs(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """out[i] = x[rows[i], cols[i]] for a 2-D x."""
    r = np.ascontiguousarray(rows, dtype=np.int64)
    c = np.ascontiguousarray(cols, dtype=np.int64)
    nr, nc = x.data.shape
    data = K.take_pairs_fwd(x.data, r, c)

    def bwd(g):
        _accumulate(x, K.scatter_add_pairs(np.ascontiguousarray(g), r, c, nr, nc))

    return _node(data, (x,), bwd)


def segment_sum(x: Tensor, seg: np.ndarray, nseg: int) -> Tensor:
    """out[k] = sum of x[i] where seg[i] == k, for a 1-D x."""
    s = np.ascontiguousarray(seg, dtype=np.int64)
    data = K.segment_sum_fwd(np.ascontiguousarray(x.data), s, nseg)

    def bwd(g):
        _accumulate(x, K.segment_sum_bwd(np.ascontiguousarray(g), s))

    return _node(data, (x,), bwd)
