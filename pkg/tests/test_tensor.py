"""Autodiff op semantics and gradient correctness."""

import numpy as np
import pytest

from augflow import tensor as T
from augflow.fdcheck import max_relative_error


def test_log_exp_identity():
    x = T.Tensor(3.0, requires_grad=True)
    y = T.log(T.exp(x))
    assert y.data == pytest.approx(3.0, abs=1e-12)
    T.backward(y)
    assert x.grad == pytest.approx(1.0, abs=1e-12)


def test_logsumexp_analytic():
    x = T.Tensor([0.0, 0.0])
    assert float(T.logsumexp(x).data) == pytest.approx(np.log(2.0), abs=1e-12)


def test_square_gradient():
    x = T.Tensor(3.0, requires_grad=True)
    T.backward(T.square(x))
    assert x.grad == pytest.approx(6.0, abs=1e-12)


def test_sum_of_params_grad_ones():
    p = T.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    T.backward(T.sum_all(p))
    assert np.array_equal(p.grad, np.ones((2, 3)))


def test_zero_times_params_grad_zeros():
    p = T.Tensor(np.arange(4.0), requires_grad=True)
    T.backward(T.sum_all(T.mul_scalar(p, 0.0)))
    assert np.array_equal(p.grad, np.zeros(4))


def test_logsumexp_shift_invariance():
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = rng.uniform(-4, 4, size=9)
        c = float(rng.uniform(-60, 60))
        lse = float(T.logsumexp(T.Tensor(v)).data)
        shifted = float(T.logsumexp(T.Tensor(v + c)).data)
        assert shifted == pytest.approx(lse + c, rel=1e-12, abs=1e-12)


def test_log_of_nonpositive_raises():
    with pytest.raises(ValueError):
        T.log(T.Tensor([1.0, 0.0]))
    with pytest.raises(ValueError):
        T.log(T.Tensor(-2.0))


def test_backward_requires_scalar():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        T.backward(T.exp(x))


def test_backward_rejects_nonfinite():
    x = T.Tensor(1000.0, requires_grad=True)
    with np.errstate(over="ignore"):
        y = T.exp(x)  # overflows to inf
    with pytest.raises(FloatingPointError):
        T.backward(y)


def test_matmul_shape_mismatch():
    a = T.Tensor(np.ones((2, 3)))
    b = T.Tensor(np.ones((2, 3)))
    with pytest.raises(ValueError):
        T.matmul(a, b)


def test_broadcast_add_bias_grad():
    rng = np.random.default_rng(0)
    x = T.Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    b = T.Tensor(rng.normal(size=3), requires_grad=True)
    T.backward(T.sum_all(T.square(T.add(x, b))))
    expect_b = (2 * (x.data + b.data)).sum(axis=0)
    assert np.allclose(b.grad, expect_b, atol=1e-12)


def test_masked_log_softmax_normalizes_and_masks():
    rng = np.random.default_rng(3)
    logits = T.Tensor(rng.normal(size=(6, 4)))
    mask = rng.integers(0, 2, size=(6, 4)).astype(np.uint8)
    mask[:, 0] = 1  # at least one valid per row
    lsm = T.masked_log_softmax(logits, mask).data
    assert np.all(np.isneginf(lsm[mask == 0]))
    sums = np.exp(lsm[mask == 1])
    row_tot = np.zeros(6)
    rows = np.nonzero(mask)[0]
    np.add.at(row_tot, rows, sums)
    assert np.allclose(row_tot, 1.0, atol=1e-12)


def test_segment_and_gather_match_numpy():
    rng = np.random.default_rng(11)
    x = rng.normal(size=12)
    seg = rng.integers(0, 4, size=12)
    got = T.segment_sum(T.Tensor(x), seg, 4).data
    want = np.array([x[seg == k].sum() for k in range(4)])
    assert np.allclose(got, want, atol=1e-12)

    m = rng.normal(size=(5, 3))
    rows = rng.integers(0, 5, size=7)
    cols = rng.integers(0, 3, size=7)
    assert np.array_equal(T.take_pairs(T.Tensor(m), rows, cols).data, m[rows, cols])
    assert np.array_equal(T.gather_rows(T.Tensor(m), rows).data, m[rows])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_composite_expression_matches_finite_differences(seed):
    """Exercises every op family the objectives use in one expression."""
    rng = np.random.default_rng(seed)
    w = T.Tensor(rng.uniform(-1, 1, size=(4, 5)), requires_grad=True)
    b = T.Tensor(rng.uniform(-1, 1, size=5), requires_grad=True)
    v = T.Tensor(rng.uniform(-1, 1, size=(6, 4)), requires_grad=True)
    mask = rng.integers(0, 2, size=(6, 3)).astype(np.uint8)
    mask[:, 1] = 1
    rows = rng.integers(0, 6, size=8)
    cols = np.where(mask[rows, 0] == 1, 0, 1)
    seg = np.sort(rng.integers(0, 3, size=8))

    def loss():
        h = T.bias_leaky(T.matmul(v, w), b, 0.1)
        lsm = T.masked_log_softmax(T.slice_cols(h, 0, 3), mask)
        picked = T.take_pairs(lsm, rows, cols)
        per = T.segment_sum(picked, seg, 3)
        extra = T.logsumexp(T.reshape(T.slice_cols(h, 3, 5), (12,)))
        bracket = T.log(
            T.maximum_scalar(
                T.add(T.exp(per), T.constant(np.array([0.0, 0.5, 1.5]))), 1e-38
            )
        )
        z = T.add(
            T.sum_all(T.square(bracket)),
            T.mean_all(T.sqrt(T.add_scalar(T.square(T.mul_scalar(extra, 0.5)), 1.0))),
        )
        return z

    assert max_relative_error(loss, [w, b, v]) < 1e-6


def test_determinism_same_seed_identical():
    def run():
        rng = np.random.default_rng(42)
        x = T.Tensor(rng.normal(size=(8, 8)), requires_grad=True)
        y = T.Tensor(rng.normal(size=(8, 8)))
        loss = T.sum_all(T.square(T.leaky_relu(T.matmul(x, y), 0.01)))
        T.backward(loss)
        return float(loss.data), x.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    assert np.array_equal(g1, g2)
