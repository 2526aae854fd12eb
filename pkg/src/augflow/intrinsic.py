"""Intrinsic rewards: random-network distillation and a constant bonus.

Novelty of a state is the scaled Euclidean distance between a fixed random
encoder's embedding and a trained predictor's embedding of its features. The
predictor is trained to shrink that distance on visited states, so novelty
decays on familiar ground. Edge rewards are the novelty of the *reached*
state (RND scores states, not transitions, so the destination's score is
lifted onto the edge; note this makes the reward independent of which parent
the edge comes from). Intrinsic values enter the flow objectives as
constants: no gradient flows from a flow loss into the predictor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from augflow import env as E
from augflow import nn
from augflow import optim
from augflow import tensor as T
from augflow.env import GridConfig, GridState

KINDS = ("rnd", "constant", "none")
MODES = ("edge", "state", "joint", "none")


@dataclass(frozen=True)
class IntrinsicConfig:
    kind: str = "none"
    alpha: float = 0.0
    mode: str = "none"
    embed_dim: int = 64
    hidden: tuple[int, ...] = (256, 256)
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown intrinsic kind {self.kind!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown augmentation mode {self.mode!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.kind == "none" and self.mode != "none":
            raise ValueError("augmentation mode requires an intrinsic kind")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be positive")


@dataclass
class RndPair:
    """Fixed random target encoder plus trainable predictor."""

    target: nn.Mlp
    predictor: nn.Mlp
    alpha: float
    normalize: bool = False
    _running_sq: float = 1.0  # running mean of squared novelty when normalizing

    def predictor_parameters(self) -> list[T.Tensor]:
        return self.predictor.parameters()


def init_rnd(grid: GridConfig, cfg: IntrinsicConfig, rng: np.random.Generator) -> RndPair:
    spec = nn.MlpSpec((grid.feature_width, *cfg.hidden, cfg.embed_dim))
    target = nn.gaussian_init(rng, spec, requires_grad=False)
    predictor = nn.gaussian_init(rng, spec, requires_grad=True)
    return RndPair(
        target=target, predictor=predictor, alpha=cfg.alpha, normalize=cfg.normalize
    )


def novelty_batch(pair: RndPair, grid: GridConfig, coords: np.ndarray) -> np.ndarray:
    """alpha * ||predictor(s) - target(s)||_2 per row of an [N, D] batch."""
    feats = E.featurize_coords(grid, coords)
    diff = nn.mlp_apply(pair.predictor, feats) - nn.mlp_apply(pair.target, feats)
    nov = pair.alpha * np.sqrt((diff * diff).sum(axis=1))
    if pair.normalize:
        nov = nov / max(np.sqrt(pair._running_sq), 1e-12)
    return nov


def novelty(pair: RndPair, grid: GridConfig, s: GridState) -> float:
    return float(novelty_batch(pair, grid, np.asarray([s.coords], dtype=np.int64))[0])


def edge_intrinsic(pair: RndPair, grid: GridConfig, s: GridState, s_next: GridState) -> float:
    """Intrinsic reward of the transition s -> s_next: novelty of s_next."""
    ok = (
        not s.stopped
        and (
            (s_next.stopped and s_next.coords == s.coords)
            or (
                not s_next.stopped
                and sum(s_next.coords) == sum(s.coords) + 1
                and all(b - a in (0, 1) for a, b in zip(s.coords, s_next.coords))
            )
        )
    )
    if not ok:
        raise ValueError(f"{s} -> {s_next} is not an edge")
    return novelty(pair, grid, s_next)


def constant_intrinsic(cfg: IntrinsicConfig) -> float:
    """The constant bonus assigned to every state and edge."""
    if cfg.kind != "constant":
        raise ValueError("constant_intrinsic requires kind='constant'")
    return cfg.alpha


def prepare_rnd_step(pair: RndPair, grid: GridConfig, coords: np.ndarray):
    """Novelty of each row plus a deferred predictor step on the same batch.

    Shares one tape forward between scoring and training: the returned
    `step(opt)` closure must run before the predictor changes by other means
    (in the training loop nothing else touches it). Returns
    (novelty array, step closure); the closure returns the pre-step loss.
    """
    if coords.shape[0] == 0:
        raise ValueError("predictor update needs a non-empty batch")
    feats = E.featurize_coords(grid, coords)
    target_out = nn.mlp_apply(pair.target, feats)
    pred_out = nn.mlp_forward(pair.predictor, T.constant(feats))
    diff = T.sub(T.constant(target_out), pred_out)
    norms = T.sqrt(T.sum_axis(T.square(diff), axis=1))
    nov = pair.alpha * norms.data
    if pair.normalize:
        nov = nov / max(np.sqrt(pair._running_sq), 1e-12)

    done = []

    def step(opt: optim.AdamState) -> float:
        if done:
            raise RuntimeError("predictor step already taken for this batch")
        done.append(True)
        loss = T.mean_all(norms)
        optim.zero_grad(opt)
        T.backward(loss)
        optim.adam_step(opt)
        if pair.normalize:
            sq = float(np.mean((pair.alpha * norms.data) ** 2))
            pair._running_sq = 0.99 * pair._running_sq + 0.01 * max(sq, 1e-24)
        return float(loss.data)

    return nov, step


def update_predictor(
    pair: RndPair,
    grid: GridConfig,
    coords: np.ndarray,
    opt: optim.AdamState,
) -> float:
    """One optimizer step on mean_i ||target(s_i) - predictor(s_i)||_2.

    The target never changes. Returns the pre-step loss. When normalization is
    on, the running novelty scale is refreshed from this batch.
    """
    _, step = prepare_rnd_step(pair, grid, coords)
    return step(opt)
