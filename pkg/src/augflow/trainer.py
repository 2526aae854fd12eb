"""End-to-end training loop.

Each update collects a batch of rollouts with the exploration-mixed policy,
annotates intrinsic rewards with the predictor state *before* this
iteration's predictor step, takes one optimizer step on the selected flow
objective, then one step on the predictor. Trajectories are consumed once
(on-policy). Metrics are recorded every `eval_every` updates with the exact
DP oracle standing in for sampled visitation estimates.

Everything is deterministic given the seed: the model init, the RND nets and
the rollout stream all derive from one SeedSequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from augflow import env as E
from augflow import intrinsic as I
from augflow import objectives as O
from augflow import optim
from augflow import tensor as T
from augflow.env import GridConfig
from augflow.intrinsic import IntrinsicConfig, RndPair
from augflow.model import FlowNetParams, Trajectory, init_flow_model, rollout_batch
from augflow.oracle import (
    exact_policy_marginals,
    l1_error,
    target_distribution,
    topk_reward,
)

EXACT_EVAL_MAX_SIDE = 128


class NonFiniteLossError(RuntimeError):
    """Training diverged; carries a diagnostic snapshot."""

    def __init__(self, update: int, params: FlowNetParams, recent_losses: list[float]):
        super().__init__(
            f"non-finite loss at update {update}; "
            f"last finite losses: {recent_losses[-5:]}"
        )
        self.update = update
        self.params = params
        self.recent_losses = recent_losses


@dataclass(frozen=True)
class TrainerConfig:
    total_updates: int
    batch_size: int = 16
    objective: str = "tb"
    epsilon: float = 0.01
    lr_model: float = 1e-3
    lr_logz: float = 0.1
    lr_predictor: float = 1e-3
    intrinsic: IntrinsicConfig = field(default_factory=IntrinsicConfig)
    seed: int = 0
    eval_every: int = 50
    hidden: tuple[int, ...] = (256, 256)
    uniform_pb: bool = False
    topk: int | None = None  # resolved to min(5, batch_size)

    def __post_init__(self):
        if self.topk is None:
            object.__setattr__(self, "topk", min(5, self.batch_size))
        if self.objective not in O.LOSS_KINDS:
            raise ValueError(f"unknown objective {self.objective!r}")
        need = O.required_mode(self.objective)
        if self.intrinsic.mode != need:
            raise ValueError(
                f"objective {self.objective!r} needs augmentation mode {need!r}, "
                f"got {self.intrinsic.mode!r}"
            )
        if need == "none" and self.intrinsic.kind != "none":
            raise ValueError("unaugmented objectives take no intrinsic rewards")
        if need != "none" and self.intrinsic.kind == "none":
            raise ValueError("augmented objectives need an intrinsic kind")
        if self.total_updates < 0:
            raise ValueError("total_updates must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if min(self.lr_model, self.lr_logz, self.lr_predictor) <= 0:
            raise ValueError("learning rates must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if not 1 <= self.topk <= self.batch_size:
            raise ValueError("topk must be in [1, batch_size]")


@dataclass
class EvalRow:
    update: int
    l1_error: float
    modes: int
    loss: float
    mean_intrinsic: float
    topk_reward: float


CSV_HEADER = "update,l1_error,modes,loss,mean_intrinsic,topk_reward"


@dataclass
class RunRecord:
    grid: GridConfig
    rows: list[EvalRow] = field(default_factory=list)
    visit_counts: np.ndarray = None  # type: ignore[assignment]
    final_params: FlowNetParams | None = None

    def __post_init__(self):
        if self.visit_counts is None:
            self.visit_counts = np.zeros(self.grid.num_cells, dtype=np.int64)

    def rows_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.update},{float(r.l1_error)!r},{r.modes},{float(r.loss)!r},"
                f"{float(r.mean_intrinsic)!r},{float(r.topk_reward)!r}"
            )
        return "\n".join(lines) + "\n"

    def visits_csv(self) -> str:
        """Visit counts as a matrix (2-D grids) or a flat row otherwise."""
        if self.grid.num_dims == 2:
            mat = self.visit_counts.reshape(self.grid.side, self.grid.side)
            return "\n".join(",".join(str(int(v)) for v in row) for row in mat) + "\n"
        return ",".join(str(int(v)) for v in self.visit_counts) + "\n"


def modes_discovered(visit_counts: np.ndarray, grid: GridConfig) -> int:
    """Number of goal cells terminated in at least once."""
    return sum(
        1 for cell in grid.goal_cells if visit_counts[E.cell_index(grid, cell)] > 0
    )


def _scatter_intrinsic(batch: list[Trajectory], mode: str, nov: np.ndarray) -> None:
    k = 0
    for tr in batch:
        n = tr.n_transitions
        tr.edge_intrinsic[:] = nov[k : k + n]
        tr.terminal_intrinsic = float(nov[k + n - 1]) if mode == "joint" else 0.0
        k += n


def _dest_unique(batch: list[Trajectory], grid: GridConfig):
    dest = np.concatenate([tr.coords_matrix()[1:] for tr in batch], axis=0)
    return O._unique_cells(grid, dest)


def _visited_unique(batch: list[Trajectory], grid: GridConfig) -> np.ndarray:
    cells = np.concatenate([tr.coords_matrix() for tr in batch], axis=0)
    return O._unique_cells(grid, cells)[0]


def annotate_intrinsic(
    batch: list[Trajectory],
    cfg: IntrinsicConfig,
    pair: RndPair | None,
    grid: GridConfig,
) -> None:
    """Fill per-edge and terminal intrinsic rewards in place.

    Edge rewards are the novelty of each transition's destination; the
    terminal bonus (joint mode only) is the novelty of the stopped final
    state, which shares its cell's features.
    """
    if cfg.kind == "none":
        for tr in batch:
            tr.edge_intrinsic[:] = 0.0
            tr.terminal_intrinsic = 0.0
        return
    if cfg.kind == "constant":
        for tr in batch:
            tr.edge_intrinsic[:] = cfg.alpha
            tr.terminal_intrinsic = cfg.alpha if cfg.mode == "joint" else 0.0
        return
    # rnd: one deduplicated predictor/target evaluation for the whole batch
    assert pair is not None
    uniq, inv = _dest_unique(batch, grid)
    _scatter_intrinsic(batch, cfg.mode, I.novelty_batch(pair, grid, uniq)[inv])


def _novelty_fn(cfg: IntrinsicConfig, pair: RndPair | None, grid: GridConfig):
    """Destination-novelty lookup for flow-matching augmentation."""
    if cfg.kind == "rnd":
        assert pair is not None
        return lambda coords: I.novelty_batch(pair, grid, coords)
    if cfg.kind == "constant":
        return lambda coords: np.full(coords.shape[0], cfg.alpha)
    return None


def train(cfg: TrainerConfig, grid: GridConfig) -> RunRecord:
    """Run the full loop; returns the metric record (with final parameters
    attached for further evaluation)."""
    ss = np.random.SeedSequence(cfg.seed)
    s_model, s_rnd, s_roll = ss.spawn(3)
    params = init_flow_model(
        grid,
        np.random.default_rng(s_model),
        hidden=cfg.hidden,
        uniform_pb=cfg.uniform_pb,
        sample_from_edge_flows=cfg.objective in O.FM_FAMILY,
    )
    pair = None
    opt_pred = None
    if cfg.intrinsic.kind == "rnd":
        pair = I.init_rnd(grid, cfg.intrinsic, np.random.default_rng(s_rnd))
        opt_pred = optim.AdamState(pair.predictor_parameters(), lr=cfg.lr_predictor)
    opt_model = optim.AdamState(params.model_parameters(), lr=cfg.lr_model)
    opt_z = optim.AdamState([params.log_z], lr=cfg.lr_logz)
    roll_rng = np.random.default_rng(s_roll)
    novelty_fn = _novelty_fn(cfg.intrinsic, pair, grid)
    fm_mode = cfg.objective in O.FM_FAMILY

    record = RunRecord(grid=grid)

    def evaluate(update: int, losses, intrinsics, topks) -> None:
        if grid.side <= EXACT_EVAL_MAX_SIDE:
            l1 = l1_error(exact_policy_marginals(params, grid), target_distribution(grid))
        else:
            l1 = float("nan")
        record.rows.append(
            EvalRow(
                update=update,
                l1_error=l1,
                modes=modes_discovered(record.visit_counts, grid),
                loss=float(np.mean(losses)) if losses else float("nan"),
                mean_intrinsic=float(np.mean(intrinsics)) if intrinsics else float("nan"),
                topk_reward=float(np.mean(topks)) if topks else float("nan"),
            )
        )

    evaluate(0, [], [], [])
    win_losses: list[float] = []
    win_intr: list[float] = []
    win_topk: list[float] = []
    recent: list[float] = []

    warm: np.ndarray | None = None
    # tiny grids: evaluate the whole policy table once per update and step in
    # the compiled kernel; larger grids: warm the cell cache with the cells
    # the previous batch visited
    full_table = grid.num_cells <= 256
    for t in range(1, cfg.total_updates + 1):
        batch = rollout_batch(
            params,
            grid,
            cfg.epsilon,
            roll_rng,
            cfg.batch_size,
            warm_cells=warm,
            full_table=full_table,
        )
        if not full_table:
            warm = _visited_unique(batch, grid)
        predictor_step = None
        if pair is not None:
            # score destinations with the pre-update predictor and reuse the
            # same forward pass for its (deferred) training step
            uniq, inv = _dest_unique(batch, grid)
            nov, predictor_step = I.prepare_rnd_step(pair, grid, uniq)
            _scatter_intrinsic(batch, cfg.intrinsic.mode, nov[inv])
        else:
            annotate_intrinsic(batch, cfg.intrinsic, None, grid)
        loss = O.batch_loss(
            cfg.objective,
            params,
            grid,
            batch,
            novelty_fn=novelty_fn if fm_mode else None,
        )
        if not np.isfinite(loss.data):
            raise NonFiniteLossError(t, params, recent)
        T.zero_grads(params.parameters())
        T.backward(loss)
        optim.adam_step(opt_model)
        optim.adam_step(opt_z)
        if predictor_step is not None:
            predictor_step(opt_pred)

        for tr in batch:
            record.visit_counts[E.cell_index(grid, tr.terminal.coords)] += 1
        win_losses.append(float(loss.data))
        recent.append(float(loss.data))
        if len(recent) > 16:
            del recent[0]
        win_intr.extend(tr.edge_intrinsic.mean() for tr in batch)
        win_topk.append(topk_reward([tr.terminal_reward for tr in batch], cfg.topk))

        if t % cfg.eval_every == 0 or t == cfg.total_updates:
            evaluate(t, win_losses, win_intr, win_topk)
            win_losses, win_intr, win_topk = [], [], []

    record.final_params = params
    return record
