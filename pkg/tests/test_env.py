"""Grid environment semantics, path-counting oracle, and config round-trips."""

from math import comb

import numpy as np
import pytest

from augflow import env as E
from augflow.env import GridConfig, GridState, make_grid


def test_initial_state():
    for side in (8, 128):
        s = E.initial_state(make_grid(side))
        assert s.coords == (0, 0) and not s.stopped
    assert len(E.valid_actions(make_grid(8), E.initial_state(make_grid(8)))) == 3


def test_valid_actions_masking():
    g = make_grid(8)
    assert E.valid_actions(g, GridState((7, 7))) == [g.stop_action]
    assert E.valid_actions(g, GridState((0, 0))) == [0, 1, g.stop_action]
    assert E.valid_actions(g, GridState((7, 3))) == [1, g.stop_action]
    with pytest.raises(ValueError, match="terminal state has no actions"):
        E.valid_actions(g, GridState((1, 1), stopped=True))


def test_step_semantics():
    g = make_grid(8)
    assert E.step(g, GridState((0, 0)), 0) == GridState((1, 0))
    assert E.step(g, GridState((3, 5)), g.stop_action) == GridState((3, 5), stopped=True)
    s = E.initial_state(g)
    for a in (0, 1, 0, g.stop_action):
        s = E.step(g, s, a)
    assert s == GridState((2, 1), stopped=True)
    with pytest.raises(ValueError):
        E.step(g, GridState((7, 0)), 0)
    with pytest.raises(ValueError):
        E.step(g, GridState((0, 0), stopped=True), g.stop_action)


def test_parents():
    g = make_grid(8)
    got = E.parents(g, GridState((1, 1)))
    assert {(p.coords, a) for p, a in got} == {((0, 1), 0), ((1, 0), 1)}
    got = E.parents(g, GridState((3, 5), stopped=True))
    assert got == [(GridState((3, 5)), g.stop_action)]
    assert E.parents(g, E.initial_state(g)) == []


def test_path_count_oracle():
    """DP over parents must reproduce the closed form C(a+b, a)."""
    g = make_grid(13)
    counts = {(0, 0): 1}
    for ssum in range(1, 13):
        for a in range(ssum + 1):
            b = ssum - a
            if a >= 13 or b >= 13:
                continue
            counts[(a, b)] = sum(
                counts[p.coords] for p, _ in E.parents(g, GridState((a, b)))
            )
    for (a, b), n in counts.items():
        assert n == comb(a + b, a)


def test_parent_child_duality_exhaustive():
    g = make_grid(8)
    for row in E.enumerate_cells(g):
        s = GridState(tuple(int(c) for c in row))
        for a in E.valid_actions(g, s):
            child = E.step(g, s, a)
            assert (s, a) in [(p, pa) for p, pa in E.parents(g, child)]
        for p, pa in E.parents(g, s):
            assert E.step(g, p, pa) == s


def test_acyclicity_along_random_walks():
    g = make_grid(6)
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = E.initial_state(g)
        seen = {s}
        key = sum(s.coords)
        while not s.stopped:
            a = int(rng.choice(E.valid_actions(g, s)))
            s = E.step(g, s, a)
            assert s not in seen
            seen.add(s)
            assert sum(s.coords) > key or s.stopped
            key = sum(s.coords)


def test_reward():
    g = make_grid(8, reward_floor=1e-6)
    assert E.reward(g, GridState((0, 7), stopped=True)) == 1.0
    assert E.reward(g, GridState((3, 3), stopped=True)) == 1e-6
    with pytest.raises(ValueError):
        E.reward(g, GridState((3, 3)))
    # corner-goal layout from the original task description
    corner = GridConfig(
        side=8, goal_cells=frozenset({(7, 7), (0, 7), (7, 0)}), reward_floor=1e-6
    )
    assert E.reward(corner, GridState((7, 7), stopped=True)) == 1.0


def test_total_reward_enumeration():
    g = make_grid(8, reward_floor=1e-6)
    z = sum(E.reward(g, x) for x in E.enumerate_terminal_states(g))
    assert z == pytest.approx(3 * 1.0 + (64 - 3) * 1e-6, rel=1e-12)


def test_featurize():
    g = make_grid(4)
    assert np.array_equal(
        E.featurize(g, GridState((0, 0))), [1, 0, 0, 0, 1, 0, 0, 0]
    )
    assert np.array_equal(
        E.featurize(g, GridState((2, 1))), [0, 0, 1, 0, 0, 1, 0, 0]
    )
    rng = np.random.default_rng(1)
    for _ in range(10):
        c = tuple(rng.integers(0, 4, size=2))
        f = E.featurize(g, GridState(c))
        assert f.sum() == g.num_dims
        assert np.array_equal(f, E.featurize(g, GridState(c, stopped=True)))


def test_enumerate_terminal_states():
    assert len(E.enumerate_terminal_states(make_grid(2))) == 4
    assert len(E.enumerate_terminal_states(make_grid(8))) == 64
    assert len(E.enumerate_terminal_states(make_grid(128))) == 16384
    first = E.enumerate_terminal_states(make_grid(3))[:4]
    assert [s.coords for s in first] == [(0, 0), (0, 1), (0, 2), (1, 0)]
    assert all(s.stopped for s in first)
    with pytest.raises(ValueError):
        E.enumerate_terminal_states(GridConfig(side=300, goal_cells=frozenset({(0, 1)})))


def test_config_invariants():
    with pytest.raises(ValueError):
        make_grid(1)
    with pytest.raises(ValueError):
        GridConfig(side=4, goal_cells=frozenset({(0, 0)}))
    with pytest.raises(ValueError):
        GridConfig(side=4, goal_cells=frozenset({(0, 5)}))
    with pytest.raises(ValueError):
        make_grid(4, reward_floor=2.0)
    with pytest.raises(ValueError):
        make_grid(4, reward_floor=-0.1)


def test_grid_text_roundtrip():
    g = make_grid(16, reward_floor=1e-5)
    text = E.grid_to_text(g)
    items = dict(
        line.split("=", 1) for line in text.strip().splitlines() if line
    )
    g2 = E.grid_from_items(items)
    assert g2 == g
    with pytest.raises(ValueError, match="missing grid key"):
        E.grid_from_items({"num_dims": "2"})


def test_positive_rewards_everywhere_with_positive_floor():
    g = make_grid(5, reward_floor=1e-8)
    assert all(E.reward(g, x) > 0 for x in E.enumerate_terminal_states(g))
