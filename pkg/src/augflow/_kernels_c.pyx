# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend; mirrors augflow._kernels_py exactly.

Fused single-pass loops over the memory-bound pieces of each training update
(activations, optimizer step, masked softmax, gathers/segments). GEMM stays
in NumPy/BLAS. Results may differ from the NumPy backend in the last ulp of
reductions; determinism within a backend is exact.
"""

import numpy as np

from libc.math cimport exp, log, sqrt, INFINITY

BACKEND_NAME = "compiled"


def bias_leaky_fwd(double[:, ::1] xw, double[::1] b, double slope):
    cdef Py_ssize_t n = xw.shape[0], k = xw.shape[1], i, j
    cdef double t
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(k):
            t = xw[i, j] + b[j]
            out[i, j] = t if t > 0.0 else slope * t
    return out_arr


def bias_leaky_bwd(double[:, ::1] out, double[:, ::1] gout, double slope):
    cdef Py_ssize_t n = out.shape[0], k = out.shape[1], i, j
    cdef double g
    gxw_arr = np.empty((n, k), dtype=np.float64)
    gb_arr = np.zeros(k, dtype=np.float64)
    cdef double[:, ::1] gxw = gxw_arr
    cdef double[::1] gb = gb_arr
    for i in range(n):
        for j in range(k):
            g = gout[i, j] if out[i, j] > 0.0 else gout[i, j] * slope
            gxw[i, j] = g
            gb[j] += g
    return gxw_arr, gb_arr


def bias_add_fwd(xw, b):
    return xw + b


def bias_add_bwd(gout):
    return gout, gout.sum(axis=0)


def leaky_fwd(x, double slope):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    flat = x_arr.reshape(-1)
    cdef double[::1] xin = flat
    cdef Py_ssize_t i, n = xin.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[i] = xin[i] if xin[i] > 0.0 else slope * xin[i]
    return out_arr.reshape(x_arr.shape)


def leaky_bwd(out, gout, double slope):
    out_arr = np.ascontiguousarray(out, dtype=np.float64).reshape(-1)
    g_arr = np.ascontiguousarray(gout, dtype=np.float64).reshape(-1)
    cdef double[::1] o = out_arr
    cdef double[::1] g = g_arr
    cdef Py_ssize_t i, n = o.shape[0]
    res_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] res = res_arr
    for i in range(n):
        res[i] = g[i] if o[i] > 0.0 else g[i] * slope
    return res_arr.reshape(np.shape(gout))


def adam_step(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
              long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef double gi
    for i in range(n):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        p[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)


def masked_log_softmax_fwd(double[:, ::1] logits, unsigned char[:, ::1] mask):
    cdef Py_ssize_t n = logits.shape[0], k = logits.shape[1], i, j
    cdef double mx, s
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        mx = -INFINITY
        for j in range(k):
            if mask[i, j] and logits[i, j] > mx:
                mx = logits[i, j]
        s = 0.0
        for j in range(k):
            if mask[i, j]:
                s += exp(logits[i, j] - mx)
        s = log(s)
        for j in range(k):
            out[i, j] = logits[i, j] - mx - s if mask[i, j] else -INFINITY
    return out_arr


def masked_log_softmax_bwd(double[:, ::1] lsm, unsigned char[:, ::1] mask,
                           double[:, ::1] gout):
    cdef Py_ssize_t n = lsm.shape[0], k = lsm.shape[1], i, j
    cdef double rs
    g_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] g = g_arr
    for i in range(n):
        rs = 0.0
        for j in range(k):
            rs += gout[i, j]
        for j in range(k):
            g[i, j] = gout[i, j] - exp(lsm[i, j]) * rs if mask[i, j] else 0.0
    return g_arr


def segment_sum_fwd(double[::1] x, long[::1] seg, long nseg):
    cdef Py_ssize_t i, n = x.shape[0]
    out_arr = np.zeros(nseg, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[seg[i]] += x[i]
    return out_arr


def segment_sum_bwd(double[::1] gout, long[::1] seg):
    cdef Py_ssize_t i, n = seg.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[i] = gout[seg[i]]
    return out_arr


def gather_rows_fwd(x, long[::1] idx):
    cdef Py_ssize_t n = idx.shape[0], i, j, k
    if x.ndim == 1:
        return _gather_1d(np.ascontiguousarray(x, dtype=np.float64), idx)
    cdef double[:, ::1] x2 = np.ascontiguousarray(x, dtype=np.float64)
    k = x2.shape[1]
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(k):
            out[i, j] = x2[idx[i], j]
    return out_arr


def _gather_1d(double[::1] x, long[::1] idx):
    cdef Py_ssize_t i, n = idx.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[i] = x[idx[i]]
    return out_arr


def scatter_add_rows(gout, long[::1] idx, long nrows):
    cdef Py_ssize_t n = idx.shape[0], i, j, k
    if gout.ndim == 1:
        return _scatter_add_1d(np.ascontiguousarray(gout, dtype=np.float64), idx, nrows)
    cdef double[:, ::1] g2 = np.ascontiguousarray(gout, dtype=np.float64)
    k = g2.shape[1]
    out_arr = np.zeros((nrows, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(k):
            out[idx[i], j] += g2[i, j]
    return out_arr


def _scatter_add_1d(double[::1] g, long[::1] idx, long nrows):
    cdef Py_ssize_t i, n = idx.shape[0]
    out_arr = np.zeros(nrows, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[idx[i]] += g[i]
    return out_arr


def take_pairs_fwd(double[:, ::1] x, long[::1] rows, long[::1] cols):
    cdef Py_ssize_t i, n = rows.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[i] = x[rows[i], cols[i]]
    return out_arr


def scatter_add_pairs(double[::1] gout, long[::1] rows, long[::1] cols,
                      long nrows, long ncols):
    cdef Py_ssize_t i, n = rows.shape[0]
    out_arr = np.zeros((nrows, ncols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        out[rows[i], cols[i]] += gout[i]
    return out_arr


def one_hot_pairs(long[:, ::1] coords, long side):
    cdef Py_ssize_t n = coords.shape[0], d = coords.shape[1], i, j
    out_arr = np.zeros((n, d * side), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(d):
            out[i, j * side + coords[i, j]] = 1.0
    return out_arr


def rollout_steps(double[:, ::1] cum, long[::1] strides, long stop_action,
                  double[:, ::1] u):
    """See the NumPy reference; same uniform-consumption layout."""
    cdef Py_ssize_t max_steps = u.shape[0], batch = u.shape[1]
    cdef Py_ssize_t d = strides.shape[0], n_act = cum.shape[1]
    cdef Py_ssize_t k, b, j, choice, flat, n_active
    cdef double uv
    actions_arr = np.full((batch, max_steps), -1, dtype=np.int64)
    lengths_arr = np.zeros(batch, dtype=np.int64)
    coords_arr = np.zeros((batch, d), dtype=np.int64)
    active_arr = np.ones(batch, dtype=np.uint8)
    cdef long[:, ::1] actions = actions_arr
    cdef long[::1] lengths = lengths_arr
    cdef long[:, ::1] coords = coords_arr
    cdef unsigned char[::1] active = active_arr
    n_active = batch
    for k in range(max_steps):
        if n_active == 0:
            break
        for b in range(batch):
            if not active[b]:
                continue
            uv = u[k, b]
            flat = 0
            for j in range(d):
                flat += coords[b, j] * strides[j]
            choice = 0
            for j in range(n_act):
                if cum[flat, j] <= uv:
                    choice += 1
            if choice > stop_action:
                choice = stop_action
            actions[b, k] = choice
            lengths[b] = k + 1
            if choice == stop_action:
                active[b] = 0
                n_active -= 1
            else:
                coords[b, choice] += 1
    if n_active > 0:
        raise ValueError("rollout exceeded the step budget")
    return actions_arr, lengths_arr
