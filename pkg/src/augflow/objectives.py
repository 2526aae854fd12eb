"""Training criteria for the flow network.

Classical flow matching (fm), detailed balance (db) and trajectory balance
(tb), plus the intrinsic-reward augmented variants:

    fm_edge_aug:  in-flow(s)                  = sum_out [F(s->s') + r(s->s')]
    db_edge_aug:  F(s) P_F(s'|s)              = F(s') P_B(s|s') + r(s->s')
    tb_edge_aug:  Z prod P_F                  = R(x) prod [P_B + r/F(s_t+1)]
    tb_state_aug: Z prod P_F                  = [R(x) + sum_t r_t] prod P_B
    tb_joint:     Z prod P_F                  = [R(x) + r(s_n)] prod [P_B + r/F(s_t+1)]

Every loss is the squared difference of the logs of the two sides, built as a
differentiable scalar on the tape. Intrinsic rewards enter as constants.
Linear-space sums such as P_B + r/F are evaluated with a constant max-shift
and a tiny positive floor before the log, which keeps them stable and makes
each augmented loss reduce *exactly* to its unaugmented counterpart when all
intrinsic rewards are zero.

Batch losses average over trajectories (tb family), over transitions (db
family), or over visited states (fm family). The single-item operations are
the same graphs with a batch of one.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from augflow import env as E
from augflow import nn
from augflow import tensor as T
from augflow.env import GridConfig, GridState
from augflow.model import FlowNetParams, Trajectory

LOSS_KINDS = (
    "fm",
    "db",
    "tb",
    "fm_edge_aug",
    "db_edge_aug",
    "tb_edge_aug",
    "tb_state_aug",
    "tb_joint",
)

TB_FAMILY = ("tb", "tb_edge_aug", "tb_state_aug", "tb_joint")
DB_FAMILY = ("db", "db_edge_aug")
FM_FAMILY = ("fm", "fm_edge_aug")

BRACKET_FLOOR = 1e-38

NoveltyFn = Callable[[np.ndarray], np.ndarray]


def required_mode(kind: str) -> str:
    """Augmentation mode each loss kind consumes."""
    if kind in ("fm", "db", "tb"):
        return "none"
    if kind in ("fm_edge_aug", "db_edge_aug", "tb_edge_aug"):
        return "edge"
    if kind == "tb_state_aug":
        return "state"
    if kind == "tb_joint":
        return "joint"
    raise ValueError(f"unknown loss kind {kind!r}")


# ---------------------------------------------------------------------------
# shared batch plumbing

def _encode_cells(grid: GridConfig, coords: np.ndarray) -> np.ndarray:
    key = coords[:, 0].astype(np.int64).copy()
    for d in range(1, grid.num_dims):
        key = key * grid.side + coords[:, d]
    return key


def _decode_cells(grid: GridConfig, keys: np.ndarray) -> np.ndarray:
    out = np.empty((keys.shape[0], grid.num_dims), dtype=np.int64)
    rem = keys.copy()
    for d in range(grid.num_dims - 1, -1, -1):
        out[:, d] = rem % grid.side
        rem //= grid.side
    return out


def _unique_cells(grid: GridConfig, coords: np.ndarray):
    """Deduplicated cell rows plus the inverse map back onto the input."""
    keys = _encode_cells(grid, coords)
    uq_keys, inv = np.unique(keys, return_inverse=True)
    return _decode_cells(grid, uq_keys), inv.astype(np.int64)


class _Heads:
    """One tape forward pass of the policy (and optionally flow) nets over a
    deduplicated set of cells, with the per-head views the losses consume."""

    def __init__(
        self,
        params: FlowNetParams,
        grid: GridConfig,
        uniq_coords: np.ndarray,
        want_flow: bool = False,
        want_edge: bool = False,
    ):
        a = params.n_actions
        d = params.num_dims
        feats = T.constant(E.featurize_coords(grid, uniq_coords))
        pol = nn.mlp_forward(params.policy, feats)
        self.uniq_coords = uniq_coords
        self.fwd_lsm = T.masked_log_softmax(
            T.slice_cols(pol, 0, a), E.forward_masks(grid, uniq_coords)
        )
        self._pol = pol
        self._grid = grid
        self._params = params
        self.log_flow: T.Tensor | None = None
        if want_flow:
            self.log_flow = T.reshape(
                nn.mlp_forward(params.state_flow, feats), (uniq_coords.shape[0],)
            )
        self.edge_head: T.Tensor | None = None
        if want_edge:
            self.edge_head = T.slice_cols(pol, a + d, 2 * a + d)

    def backward_lsm(self, rows: np.ndarray) -> T.Tensor:
        """Masked backward log-softmax restricted to the given unique rows
        (they must all have at least one parent)."""
        a = self._params.n_actions
        d = self._params.num_dims
        sub = T.gather_rows(T.slice_cols(self._pol, a, a + d), rows)
        masks = E.backward_masks(self._grid, self.uniq_coords[rows])
        return T.masked_log_softmax(sub, masks)


def _transition_arrays(grid: GridConfig, trajectories: Sequence[Trajectory]):
    """Flatten a trajectory batch into per-transition arrays."""
    n_traj = len(trajectories)
    src, dest, actions, seg, r_edge = [], [], [], [], []
    rewards = np.empty(n_traj)
    r_term = np.empty(n_traj)
    for i, tr in enumerate(trajectories):
        if tr.n_transitions == 0:
            raise ValueError("trajectory with no transitions")
        rewards[i] = tr.terminal_reward
        r_term[i] = tr.terminal_intrinsic
        cm = tr.coords_matrix()
        src.append(cm[:-1])
        dest.append(cm[1:])
        actions.append(np.asarray(tr.actions, dtype=np.int64))
        seg.append(np.full(tr.n_transitions, i, dtype=np.int64))
        r_edge.append(tr.edge_intrinsic)
    return (
        np.concatenate(src, axis=0),
        np.concatenate(dest, axis=0),
        np.concatenate(actions),
        np.concatenate(seg),
        np.concatenate(r_edge),
        rewards,
        r_term,
    )


def _log_or_raise(x: np.ndarray, what: str) -> np.ndarray:
    if np.any(x <= 0.0):
        raise ValueError(f"{what} must be positive for a log-space objective")
    return np.log(x)


def _uniform_log_pb(grid: GridConfig, coords: np.ndarray) -> np.ndarray:
    n_parents = (coords > 0).sum(axis=1)
    return -np.log(n_parents.astype(np.float64))


def _log_lin_sum(x: T.Tensor, add_const: np.ndarray) -> T.Tensor:
    """log(exp(x) + c) for a nonnegative constant vector c, max-shifted.

    Exact pass-through (bit for bit) where c == 0.
    """
    with np.errstate(divide="ignore"):
        log_c = np.log(add_const, out=np.full_like(add_const, -np.inf), where=add_const > 0)
    shift = np.maximum(x.data, log_c)
    lin = T.add(T.exp(T.add(x, T.constant(-shift))), T.constant(add_const * np.exp(-shift)))
    return T.add(T.log(T.maximum_scalar(lin, BRACKET_FLOOR)), T.constant(shift))


# ---------------------------------------------------------------------------
# trajectory-balance family

def _tb_loss(
    kind: str,
    params: FlowNetParams,
    grid: GridConfig,
    trajectories: Sequence[Trajectory],
) -> T.Tensor:
    src, dest, actions, seg, r_edge, rewards, r_term = _transition_arrays(
        grid, trajectories
    )
    n_traj = len(trajectories)
    with_flow = kind in ("tb_edge_aug", "tb_joint")
    ns = np.nonzero(actions != grid.stop_action)[0]
    st = np.nonzero(actions == grid.stop_action)[0]

    uniq, inv = _unique_cells(grid, np.concatenate([src, dest], axis=0))
    n_tr = src.shape[0]
    src_u, dest_u = inv[:n_tr], inv[n_tr:]
    heads = _Heads(params, grid, uniq, want_flow=with_flow)

    log_pf_t = T.take_pairs(heads.fwd_lsm, src_u, actions)
    sum_pf = T.segment_sum(log_pf_t, seg, n_traj)

    if params.uniform_pb:
        log_pb_ns_const = _uniform_log_pb(grid, dest[ns])
        log_pb_ns: T.Tensor = T.constant(log_pb_ns_const)
    else:
        bwd_lsm = heads.backward_lsm(dest_u[ns])
        log_pb_ns = T.take_pairs(bwd_lsm, np.arange(len(ns), dtype=np.int64), actions[ns])

    if kind in ("tb", "tb_state_aug"):
        sum_pb = T.segment_sum(log_pb_ns, seg[ns], n_traj)
        if kind == "tb":
            target = _log_or_raise(rewards, "terminal reward")
        else:
            r_sums = np.bincount(seg, weights=r_edge, minlength=n_traj)
            target = _log_or_raise(rewards + r_sums, "augmented trajectory return")
    else:
        # per-transition brackets [P_B + r / F(s_{t+1})]
        log_f_dest = T.gather_rows(heads.log_flow, dest_u)
        neg_f_ns = T.mul_scalar(T.gather_rows(log_f_dest, ns), -1.0)
        neg_f_st = T.mul_scalar(T.gather_rows(log_f_dest, st), -1.0)

        with np.errstate(divide="ignore"):
            log_r_ns = np.log(r_edge[ns], out=np.full(len(ns), -np.inf), where=r_edge[ns] > 0)
            log_r_st = np.log(r_edge[st], out=np.full(len(st), -np.inf), where=r_edge[st] > 0)
        shift_ns = np.maximum(log_pb_ns.data, log_r_ns + neg_f_ns.data)
        lin_ns = T.add(
            T.exp(T.add(log_pb_ns, T.constant(-shift_ns))),
            T.mul_const(T.exp(T.add(neg_f_ns, T.constant(-shift_ns))), r_edge[ns]),
        )
        bracket_ns = T.add(
            T.log(T.maximum_scalar(lin_ns, BRACKET_FLOOR)), T.constant(shift_ns)
        )
        shift_st = np.maximum(0.0, log_r_st + neg_f_st.data)
        lin_st = T.add(
            T.constant(np.exp(-shift_st)),
            T.mul_const(T.exp(T.add(neg_f_st, T.constant(-shift_st))), r_edge[st]),
        )
        bracket_st = T.add(
            T.log(T.maximum_scalar(lin_st, BRACKET_FLOOR)), T.constant(shift_st)
        )
        sum_pb = T.add(
            T.segment_sum(bracket_ns, seg[ns], n_traj),
            T.segment_sum(bracket_st, seg[st], n_traj),
        )
        if kind == "tb_edge_aug":
            target = _log_or_raise(rewards, "terminal reward")
        else:  # tb_joint
            target = _log_or_raise(rewards + r_term, "terminal reward plus bonus")

    resid = T.sub(T.add(params.log_z, sum_pf), T.add(T.constant(target), sum_pb))
    return T.mean_all(T.square(resid))


# ---------------------------------------------------------------------------
# detailed-balance family

def _db_loss(
    kind: str,
    params: FlowNetParams,
    grid: GridConfig,
    trajectories: Sequence[Trajectory],
) -> T.Tensor:
    src, dest, actions, seg, r_edge, rewards, _ = _transition_arrays(grid, trajectories)
    n_tr = src.shape[0]
    ns = np.nonzero(actions != grid.stop_action)[0]
    st = np.nonzero(actions == grid.stop_action)[0]
    aug = kind == "db_edge_aug"

    uniq, inv = _unique_cells(grid, np.concatenate([src, dest], axis=0))
    src_u, dest_u = inv[:n_tr], inv[n_tr:]
    heads = _Heads(params, grid, uniq, want_flow=True)

    log_pf_t = T.take_pairs(heads.fwd_lsm, src_u, actions)
    lhs = T.add(T.gather_rows(heads.log_flow, src_u), log_pf_t)

    sq_terms: list[T.Tensor] = []

    if len(ns):
        if params.uniform_pb:
            log_pb_ns: T.Tensor = T.constant(_uniform_log_pb(grid, dest[ns]))
        else:
            bwd_lsm = heads.backward_lsm(dest_u[ns])
            log_pb_ns = T.take_pairs(
                bwd_lsm, np.arange(len(ns), dtype=np.int64), actions[ns]
            )
        inner = T.add(T.gather_rows(heads.log_flow, dest_u[ns]), log_pb_ns)
        rhs_ns = _log_lin_sum(inner, r_edge[ns]) if aug else inner
        sq_terms.append(T.sum_all(T.square(T.sub(T.gather_rows(lhs, ns), rhs_ns))))

    if len(st):
        # terminal transitions: F(s') is the reward, P_B = 1
        base = rewards[seg[st]] + (r_edge[st] if aug else 0.0)
        rhs_st = _log_or_raise(base, "terminal reward")
        sq_terms.append(
            T.sum_all(T.square(T.sub(T.gather_rows(lhs, st), T.constant(rhs_st))))
        )

    total = sq_terms[0] if len(sq_terms) == 1 else T.add(sq_terms[0], sq_terms[1])
    return T.mul_scalar(total, 1.0 / n_tr)


# ---------------------------------------------------------------------------
# flow-matching family

def _fm_item_arrays(grid: GridConfig, trajectories: Sequence[Trajectory]):
    """States s1..sn of every trajectory, duplicates kept (sampling measure)."""
    cells, stopped, rewards = [], [], []
    for tr in trajectories:
        cm = tr.coords_matrix()[1:]
        n = cm.shape[0]
        st = np.zeros(n, dtype=bool)
        st[-1] = True  # exactly the final state of a trajectory is stopped
        rw = np.zeros(n)
        rw[-1] = tr.terminal_reward
        cells.append(cm)
        stopped.append(st)
        rewards.append(rw)
    return (
        np.concatenate(cells, axis=0),
        np.concatenate(stopped),
        np.concatenate(rewards),
    )


def _fm_loss_from_items(
    params: FlowNetParams,
    grid: GridConfig,
    cells: np.ndarray,
    stopped: np.ndarray,
    rewards: np.ndarray,
    novelty_fn: NoveltyFn | None,
) -> T.Tensor:
    """FM residuals for item states; augmented when novelty_fn is given.

    Internal items match log-in-flow against log of the (possibly augmented)
    out-flow sum; stopped items match the incoming stop-edge flow against the
    terminal reward.
    """
    n_items = cells.shape[0]
    if n_items == 0:
        raise ValueError("flow-matching batch is empty")
    if np.any(~stopped & (cells.sum(axis=1) == 0)):
        raise ValueError("the start state has no incoming flow to match")

    int_idx = np.nonzero(~stopped)[0]
    term_idx = np.nonzero(stopped)[0]

    # (item, parent) and (item, out-action) pair tables for internal items,
    # plus the stop in-edge of each terminal item
    in_pairs_parent: list[tuple[int, ...]] = []
    in_pairs_action: list[int] = []
    in_seg: list[int] = []
    out_pairs_state: list[tuple[int, ...]] = []
    out_pairs_action: list[int] = []
    out_seg: list[int] = []
    for k, i in enumerate(int_idx):
        c = tuple(int(v) for v in cells[i])
        for d in range(grid.num_dims):
            if c[d] > 0:
                p = list(c)
                p[d] -= 1
                in_pairs_parent.append(tuple(p))
                in_pairs_action.append(d)
                in_seg.append(k)
        for d in range(grid.num_dims):
            if c[d] < grid.side - 1:
                out_pairs_state.append(c)
                out_pairs_action.append(d)
                out_seg.append(k)
        out_pairs_state.append(c)
        out_pairs_action.append(grid.stop_action)
        out_seg.append(k)

    term_cells = cells[term_idx]
    eval_cells = [np.asarray(in_pairs_parent, dtype=np.int64).reshape(-1, grid.num_dims)]
    eval_cells.append(np.asarray(out_pairs_state, dtype=np.int64).reshape(-1, grid.num_dims))
    eval_cells.append(term_cells)
    all_cells = np.concatenate(eval_cells, axis=0)
    uniq, inv = _unique_cells(grid, all_cells)
    n_in = len(in_pairs_action)
    n_out = len(out_pairs_action)
    in_u = inv[:n_in]
    out_u = inv[n_in : n_in + n_out]
    term_u = inv[n_in + n_out :]

    heads = _Heads(params, grid, uniq, want_edge=True)
    edge = heads.edge_head
    sq_terms: list[T.Tensor] = []

    if len(int_idx):
        n_int = len(int_idx)
        in_seg_a = np.asarray(in_seg, dtype=np.int64)
        out_seg_a = np.asarray(out_seg, dtype=np.int64)
        in_vals = T.take_pairs(edge, in_u, np.asarray(in_pairs_action, dtype=np.int64))
        out_vals = T.take_pairs(edge, out_u, np.asarray(out_pairs_action, dtype=np.int64))

        in_shift = np.full(n_int, -np.inf)
        np.maximum.at(in_shift, in_seg_a, in_vals.data)
        in_log = T.add(
            T.log(
                T.segment_sum(
                    T.exp(T.add(in_vals, T.constant(-in_shift[in_seg_a]))), in_seg_a, n_int
                )
            ),
            T.constant(in_shift),
        )

        out_shift = np.full(n_int, -np.inf)
        np.maximum.at(out_shift, out_seg_a, out_vals.data)
        sum_exp = T.segment_sum(
            T.exp(T.add(out_vals, T.constant(-out_shift[out_seg_a]))), out_seg_a, n_int
        )
        if novelty_fn is None:
            out_log = T.add(T.log(sum_exp), T.constant(out_shift))
        else:
            # out-edge intrinsic rewards: novelty of each destination state
            # (the stop edge's destination twin shares the source cell)
            out_states = np.asarray(out_pairs_state, dtype=np.int64)
            out_actions = np.asarray(out_pairs_action, dtype=np.int64)
            child = out_states.copy()
            inc = out_actions != grid.stop_action
            child[inc, out_actions[inc]] += 1
            child_uniq, child_inv = _unique_cells(grid, child)
            r_out = novelty_fn(child_uniq)[child_inv]
            r_sum = np.bincount(
                out_seg_a, weights=r_out * np.exp(-out_shift[out_seg_a]), minlength=n_int
            )
            out_log = T.add(
                T.log(T.maximum_scalar(T.add(sum_exp, T.constant(r_sum)), BRACKET_FLOOR)),
                T.constant(out_shift),
            )
        sq_terms.append(T.sum_all(T.square(T.sub(in_log, out_log))))

    if len(term_idx):
        stop_in = T.take_pairs(
            edge, term_u, np.full(len(term_idx), grid.stop_action, dtype=np.int64)
        )
        target = _log_or_raise(rewards[term_idx], "terminal reward")
        sq_terms.append(T.sum_all(T.square(T.sub(stop_in, T.constant(target)))))

    total = sq_terms[0] if len(sq_terms) == 1 else T.add(sq_terms[0], sq_terms[1])
    return T.mul_scalar(total, 1.0 / n_items)


def _fm_loss(
    kind: str,
    params: FlowNetParams,
    grid: GridConfig,
    trajectories: Sequence[Trajectory],
    novelty_fn: NoveltyFn | None,
) -> T.Tensor:
    cells, stopped, rewards = _fm_item_arrays(grid, trajectories)
    if kind == "fm":
        novelty_fn = None
    elif novelty_fn is None:
        raise ValueError("fm_edge_aug needs a novelty function")
    return _fm_loss_from_items(params, grid, cells, stopped, rewards, novelty_fn)


# ---------------------------------------------------------------------------
# public entry points

def batch_loss(
    kind: str,
    params: FlowNetParams,
    grid: GridConfig,
    trajectories: Sequence[Trajectory],
    novelty_fn: NoveltyFn | None = None,
) -> T.Tensor:
    """Mean loss of a trajectory batch under the given criterion."""
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}")
    if not trajectories:
        raise ValueError("empty batch")
    if kind in TB_FAMILY:
        return _tb_loss(kind, params, grid, trajectories)
    if kind in DB_FAMILY:
        return _db_loss(kind, params, grid, trajectories)
    return _fm_loss(kind, params, grid, trajectories, novelty_fn)


def loss_tb(params: FlowNetParams, grid: GridConfig, tr: Trajectory) -> T.Tensor:
    return _tb_loss("tb", params, grid, [tr])


def loss_tb_edge_aug(params: FlowNetParams, grid: GridConfig, tr: Trajectory) -> T.Tensor:
    return _tb_loss("tb_edge_aug", params, grid, [tr])


def loss_tb_state_aug(params: FlowNetParams, grid: GridConfig, tr: Trajectory) -> T.Tensor:
    return _tb_loss("tb_state_aug", params, grid, [tr])


def loss_tb_joint(params: FlowNetParams, grid: GridConfig, tr: Trajectory) -> T.Tensor:
    return _tb_loss("tb_joint", params, grid, [tr])


def _single_edge(
    kind: str,
    params: FlowNetParams,
    grid: GridConfig,
    s: GridState,
    s_next: GridState,
    r: float,
) -> T.Tensor:
    if s.stopped:
        raise ValueError("edges start at non-stopped states")
    matching = [
        a
        for a in E.valid_actions(grid, s)
        if E.step(grid, s, a) == s_next
    ]
    if not matching:
        raise ValueError(f"{s} -> {s_next} is not an edge")
    tr = Trajectory(states=[s, s_next], actions=[matching[0]], terminal_reward=0.0)
    if s_next.stopped:
        tr.terminal_reward = E.reward(grid, s_next)
    else:
        # _db_loss only reads the reward on terminal transitions; keep the
        # trajectory shape valid by pretending the edge is the whole batch
        tr.terminal_reward = 1.0
    tr.edge_intrinsic = np.asarray([r], dtype=np.float64)
    return _db_loss(kind, params, grid, [tr])


def loss_db(
    params: FlowNetParams, grid: GridConfig, s: GridState, s_next: GridState
) -> T.Tensor:
    return _single_edge("db", params, grid, s, s_next, 0.0)


def loss_db_edge_aug(
    params: FlowNetParams, grid: GridConfig, s: GridState, s_next: GridState, r: float
) -> T.Tensor:
    if r < 0:
        raise ValueError("intrinsic rewards are nonnegative")
    return _single_edge("db_edge_aug", params, grid, s, s_next, r)


def _single_state_fm(
    params: FlowNetParams,
    grid: GridConfig,
    s: GridState,
    novelty_fn: NoveltyFn | None,
) -> T.Tensor:
    cells = np.asarray([s.coords], dtype=np.int64)
    stopped = np.asarray([s.stopped])
    rewards = np.asarray([E.reward(grid, s) if s.stopped else 0.0])
    return _fm_loss_from_items(params, grid, cells, stopped, rewards, novelty_fn)


def loss_fm(params: FlowNetParams, grid: GridConfig, s: GridState) -> T.Tensor:
    return _single_state_fm(params, grid, s, None)


def loss_fm_edge_aug(
    params: FlowNetParams, grid: GridConfig, s: GridState, novelty_fn: NoveltyFn
) -> T.Tensor:
    return _single_state_fm(params, grid, s, novelty_fn)
