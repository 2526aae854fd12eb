"""Quick oracle and property suite behind the `verify` CLI subcommand.

A fast cross-check of the numerical core: exact DP vs brute-force
enumeration, finite-difference gradients for every loss kind, the
zero-intrinsic reduction identities, and the telescoping consistency of the
augmented balance equations on a hand-solved flow. Prints one line per check.
"""

from __future__ import annotations

import numpy as np

from augflow import env as E
from augflow import model as M
from augflow import objectives as O
from augflow import oracle as OR
from augflow.env import GridState, make_grid
from augflow.fdcheck import max_relative_error


def _model(grid, seed, **kw):
    return M.init_flow_model(grid, np.random.default_rng(seed), hidden=(12,), **kw)


def check_oracle_agreement() -> tuple[bool, str]:
    worst = 0.0
    for side in (2, 3):
        grid = make_grid(side, reward_floor=0.05)
        for seed in range(3):
            params = _model(grid, seed)
            dp = OR.exact_policy_marginals(params, grid)
            bf = OR.brute_force_enumeration(params, grid)
            worst = max(worst, float(np.max(np.abs(dp.probs - bf.probs))))
    return worst < 1e-10, f"max |DP - enumeration| = {worst:.2e}"


def check_gradients() -> tuple[bool, str]:
    grid = make_grid(3, reward_floor=0.2)
    worst = 0.0
    for kind in O.LOSS_KINDS:
        params = _model(grid, 7, sample_from_edge_flows=kind in O.FM_FAMILY)
        trajs = M.rollout_batch(params, grid, 1.0, np.random.default_rng(8), 2)
        rng = np.random.default_rng(9)
        for tr in trajs:
            tr.edge_intrinsic = rng.uniform(0, 0.4, size=tr.n_transitions)
            tr.terminal_intrinsic = float(rng.uniform(0, 0.4))
        nov = (lambda c: np.full(c.shape[0], 0.2)) if kind in O.FM_FAMILY else None
        err = max_relative_error(
            lambda: O.batch_loss(kind, params, grid, trajs, novelty_fn=nov),
            params.parameters(),
        )
        worst = max(worst, err)
    return worst < 1e-4, f"max relative gradient error = {worst:.2e}"


def check_reductions() -> tuple[bool, str]:
    grid = make_grid(3, reward_floor=0.2)
    params = _model(grid, 11)
    fm_params = _model(grid, 11, sample_from_edge_flows=True)
    trajs = M.rollout_batch(params, grid, 1.0, np.random.default_rng(12), 10)
    zero = lambda c: np.zeros(c.shape[0])
    worst = 0.0
    for aug, plain, p, nov in (
        ("tb_edge_aug", "tb", params, None),
        ("tb_state_aug", "tb", params, None),
        ("tb_joint", "tb", params, None),
        ("db_edge_aug", "db", params, None),
        ("fm_edge_aug", "fm", fm_params, zero),
    ):
        a = float(O.batch_loss(aug, p, grid, trajs, novelty_fn=nov).data)
        b = float(O.batch_loss(plain, p, grid, trajs).data)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    return worst < 1e-12, f"max reduction mismatch = {worst:.2e}"


def check_telescoping() -> tuple[bool, str]:
    grid = make_grid(3, reward_floor=0.2)
    rng = np.random.default_rng(13)
    cells = sorted(
        (tuple(int(v) for v in row) for row in E.enumerate_cells(grid)),
        key=lambda c: -sum(c),
    )
    flows, intr, state_flow = {}, {}, {}
    for c in cells:
        s = GridState(c)
        acts = E.valid_actions(grid, s)
        for a in acts:
            intr[(c, a)] = float(rng.uniform(0.01, 0.2))
        flows[(c, grid.stop_action)] = E.reward(grid, GridState(c, stopped=True))
        total = sum(flows[(c, a)] + intr[(c, a)] for a in acts)
        state_flow[c] = total
        parents = E.parents(grid, s)
        if parents:
            w = rng.uniform(0.2, 1.0, size=len(parents))
            w /= w.sum()
            for (p, a), wi in zip(parents, w):
                flows[(p.coords, a)] = total * wi

    residual = OR.verify_flow_consistency(flows, grid, intr)
    z_aug = state_flow[(0, 0)]
    worst = residual
    for tr in OR.all_trajectories(grid):
        lhs = np.log(z_aug)
        rhs = np.log(tr.terminal_reward)
        for t in range(tr.n_transitions):
            c, a = tr.states[t].coords, tr.actions[t]
            child = tr.states[t + 1]
            child_flow = (
                E.reward(grid, child) if child.stopped else state_flow[child.coords]
            )
            lhs += np.log((flows[(c, a)] + intr[(c, a)]) / state_flow[c])
            rhs += np.log(flows[(c, a)] / child_flow + intr[(c, a)] / child_flow)
        worst = max(worst, abs(lhs - rhs))
    return worst < 1e-10, f"max telescoping residual = {worst:.2e}"


CHECKS = (
    ("oracle-agreement", check_oracle_agreement),
    ("gradient-suite", check_gradients),
    ("reduction-identities", check_reductions),
    ("telescoping", check_telescoping),
)


def run_verification(emit=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        passed, detail = fn()
        ok &= passed
        emit(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return ok
