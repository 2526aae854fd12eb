"""Exact ground-truth machinery.

The learned sampler's terminal distribution is computed by exact dynamic
programming over the DAG (probability mass propagated in coordinate-sum
order), independently validated by brute-force trajectory enumeration on tiny
grids. The target distribution, the L1 metric, flow-consistency residuals and
top-k batch reward live here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from augflow import env as E
from augflow.env import GridConfig, GridState
from augflow.model import FlowNetParams, Trajectory, forward_logprob_matrix

BRUTE_FORCE_MAX_SIDE = 5


@dataclass
class TerminalDistribution:
    """Probability over terminal cells, row-major flat order."""

    grid: GridConfig
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (self.grid.num_cells,):
            raise ValueError("probability vector does not match the grid")
        if np.any(self.probs < -1e-12):
            raise ValueError("negative probability")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}, not 1")

    def prob(self, coords) -> float:
        return float(self.probs[E.cell_index(self.grid, coords)])

    def to_csv(self) -> str:
        cells = E.enumerate_cells(self.grid)
        header = ",".join(f"x{d}" for d in range(self.grid.num_dims)) + ",probability"
        lines = [header]
        for row, p in zip(cells, self.probs):
            lines.append(",".join(str(int(c)) for c in row) + f",{float(p)!r}")
        return "\n".join(lines) + "\n"


def _cell_probs(params: FlowNetParams, grid: GridConfig, cells: np.ndarray) -> np.ndarray:
    """exp of the masked forward log-policy for every cell; invalid actions 0."""
    return np.exp(forward_logprob_matrix(params, grid, cells))


def exact_policy_marginals(params: FlowNetParams, grid: GridConfig) -> TerminalDistribution:
    """Terminal distribution of the current forward policy by exact DP.

    Mass flows from the start cell in ascending coordinate-sum order; the
    mass routed through each cell's stop action is its terminal probability.
    """
    cells = E.enumerate_cells(grid)
    n = cells.shape[0]
    probs = _cell_probs(params, grid, cells)
    order = np.argsort(cells.sum(axis=1), kind="stable")

    # child flat index per (cell, increment); -1 where the move is invalid
    child = np.full((n, grid.num_dims), -1, dtype=np.int64)
    stride = np.array(
        [grid.side ** (grid.num_dims - 1 - d) for d in range(grid.num_dims)],
        dtype=np.int64,
    )
    flat = cells @ stride
    for d in range(grid.num_dims):
        ok = cells[:, d] < grid.side - 1
        child[ok, d] = flat[ok] + stride[d]

    mass = np.zeros(n)
    mass[E.cell_index(grid, (0,) * grid.num_dims)] = 1.0
    terminal = np.zeros(n)
    stop = grid.stop_action
    for i in order:
        m = mass[i]
        if m == 0.0:
            continue
        terminal[i] += m * probs[i, stop]
        for d in range(grid.num_dims):
            j = child[i, d]
            if j >= 0:
                mass[j] += m * probs[i, d]
    return TerminalDistribution(grid, terminal)


def brute_force_enumeration(params: FlowNetParams, grid: GridConfig) -> TerminalDistribution:
    """Terminal distribution by summing the policy product over every
    trajectory; exponential, so guarded to tiny grids."""
    if grid.side > BRUTE_FORCE_MAX_SIDE:
        raise ValueError(
            f"brute force is limited to side <= {BRUTE_FORCE_MAX_SIDE}"
        )
    cells = E.enumerate_cells(grid)
    probs = _cell_probs(params, grid, cells)
    terminal = np.zeros(cells.shape[0])
    stop = grid.stop_action

    def recurse(idx: int, coords: tuple[int, ...], p: float) -> None:
        terminal[idx] += p * probs[idx, stop]
        for d in range(grid.num_dims):
            if coords[d] < grid.side - 1:
                nxt = list(coords)
                nxt[d] += 1
                recurse(E.cell_index(grid, nxt), tuple(nxt), p * probs[idx, d])

    recurse(0, (0,) * grid.num_dims, 1.0)
    return TerminalDistribution(grid, terminal)


def target_distribution(grid: GridConfig) -> TerminalDistribution:
    """p(x) proportional to the terminal reward (floor included)."""
    r = E.all_rewards(grid)
    return TerminalDistribution(grid, r / r.sum())


def l1_error(
    pi: TerminalDistribution, p: TerminalDistribution, total_variation: bool = False
) -> float:
    """Mean absolute difference over all terminal cells.

    With total_variation=True returns 0.5 * sum |pi - p| instead (the two
    differ only by the support-size scaling).
    """
    if pi.grid.side != p.grid.side or pi.grid.num_dims != p.grid.num_dims:
        raise ValueError("distributions live on different grids")
    diff = np.abs(pi.probs - p.probs)
    return float(0.5 * diff.sum()) if total_variation else float(diff.mean())


def verify_flow_consistency(
    flows: dict[tuple[tuple[int, ...], int], float],
    grid: GridConfig,
    intrinsic: dict[tuple[tuple[int, ...], int], float] | None = None,
) -> float:
    """Max over interior cells of |sum-in flow - sum-out (flow + intrinsic)|.

    `flows` maps (cell, action) to edge flow; missing edges count as zero.
    Interior cells are all non-stopped cells except the start cell (the start
    has no incoming flow and stopped cells match rewards instead).
    """
    intrinsic = intrinsic or {}
    worst = 0.0
    for row in E.enumerate_cells(grid):
        coords = tuple(int(c) for c in row)
        if sum(coords) == 0:
            continue
        state = GridState(coords=coords)
        inflow = sum(
            flows.get((p.coords, a), 0.0) for p, a in E.parents(grid, state)
        )
        outflow = 0.0
        for a in E.valid_actions(grid, state):
            outflow += flows.get((coords, a), 0.0) + intrinsic.get((coords, a), 0.0)
        worst = max(worst, abs(inflow - outflow))
    return worst


def topk_reward(rewards, k: int) -> float:
    """Mean of the k largest rewards in a batch."""
    r = np.asarray(rewards, dtype=np.float64)
    if k < 1 or k > r.size:
        raise ValueError(f"k={k} out of range for a batch of {r.size}")
    return float(np.sort(r)[-k:].mean())


def all_trajectories(grid: GridConfig) -> list[Trajectory]:
    """Every trajectory of the DAG as a Trajectory with its terminal reward.

    Exponential in the grid size, so guarded like brute-force enumeration.
    """
    if grid.side > BRUTE_FORCE_MAX_SIDE:
        raise ValueError(
            f"trajectory enumeration is limited to side <= {BRUTE_FORCE_MAX_SIDE}"
        )
    out: list[Trajectory] = []

    def recurse(states: list[GridState], actions: list[int]) -> None:
        s = states[-1]
        for a in E.valid_actions(grid, s):
            nxt = E.step(grid, s, a)
            if a == grid.stop_action:
                out.append(
                    Trajectory(
                        states=states + [nxt],
                        actions=actions + [a],
                        terminal_reward=E.reward(grid, nxt),
                    )
                )
            else:
                recurse(states + [nxt], actions + [a])

    recurse([E.initial_state(grid)], [])
    return out
