"""Adam update against a hand-computed oracle."""

import numpy as np
import pytest

from augflow import optim
from augflow.tensor import Tensor


def hand_adam(p, g_seq, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Straight transcription of bias-corrected Adam, one scalar at a time."""
    p = np.array(p, dtype=float)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(g_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
    return p


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    st = optim.AdamState([p], lr=0.05)
    p.grad = np.zeros(3)
    before = p.data.copy()
    optim.adam_step(st)
    assert np.array_equal(p.data, before)
    assert st.t == 1


def test_first_step_magnitude_is_learning_rate():
    p = Tensor(np.array([0.5]), requires_grad=True)
    st = optim.AdamState([p], lr=1e-3)
    p.grad = np.array([0.37])
    optim.adam_step(st)
    delta = 0.5 - p.data[0]
    # bias correction makes the first step lr * g / (|g| + eps) ~ lr
    assert delta == pytest.approx(1e-3, rel=1e-4)


def test_two_identical_gradient_steps_match_hand_oracle():
    g = np.array([0.3, -1.2, 0.01])
    p0 = np.array([1.0, 2.0, 3.0])
    p = Tensor(p0.copy(), requires_grad=True)
    st = optim.AdamState([p], lr=0.01)
    for _ in range(2):
        p.grad = g.copy()
        optim.adam_step(st)
    assert np.allclose(p.data, hand_adam(p0, [g, g], lr=0.01), atol=1e-15)


def test_many_random_steps_match_hand_oracle():
    rng = np.random.default_rng(5)
    p0 = rng.normal(size=(4, 3))
    gs = [rng.normal(size=(4, 3)) for _ in range(25)]
    p = Tensor(p0.copy(), requires_grad=True)
    st = optim.AdamState([p], lr=0.007)
    for g in gs:
        p.grad = g.copy()
        optim.adam_step(st)
    assert np.allclose(p.data, hand_adam(p0, gs, lr=0.007), atol=1e-13)


def test_rejects_nonpositive_lr():
    with pytest.raises(ValueError):
        optim.AdamState([Tensor(1.0, requires_grad=True)], lr=0.0)
