"""Parameterized flow network: forward/backward policies, state flow, and the
learnable log-partition, plus trajectory rollout with exploration mixing.

One policy MLP carries three output heads, sliced by column:

    [0, A)          forward logits, A = num_dims + 1 (increments then stop)
    [A, A+D)        backward logits over parent directions, D = num_dims
    [A+D, 2A+D)     log edge flows per outgoing action (flow-matching head)

Log state flow F(s) comes from a separate MLP so that trajectory objectives
can query it at intermediate states. State featurization ignores the stopped
flag, so a terminal twin shares its cell's features. The backward step out of
a stopped state is deterministic (only the stop edge leads there), so no
backward logits are consumed for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from augflow.backend import kernels as K
from augflow import env as E
from augflow import nn
from augflow import tensor as T
from augflow.env import GridConfig, GridState


@dataclass
class FlowNetParams:
    policy: nn.Mlp
    state_flow: nn.Mlp
    log_z: T.Tensor
    num_dims: int
    uniform_pb: bool = False
    sample_from_edge_flows: bool = False

    @property
    def n_actions(self) -> int:
        return self.num_dims + 1

    def parameters(self) -> list[T.Tensor]:
        return self.policy.parameters() + self.state_flow.parameters() + [self.log_z]

    def model_parameters(self) -> list[T.Tensor]:
        """Everything trained at the model learning rate (log_z has its own)."""
        return self.policy.parameters() + self.state_flow.parameters()

    def named_parameters(self) -> list[tuple[str, T.Tensor]]:
        return (
            nn.named_parameters("policy", self.policy)
            + nn.named_parameters("state_flow", self.state_flow)
            + [("log_z", self.log_z)]
        )


def init_flow_model(
    grid: GridConfig,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = (256, 256),
    uniform_pb: bool = False,
    sample_from_edge_flows: bool = False,
) -> FlowNetParams:
    d = grid.num_dims
    head_width = 2 * (d + 1) + d
    policy_spec = nn.MlpSpec((grid.feature_width, *hidden, head_width))
    flow_spec = nn.MlpSpec((grid.feature_width, *hidden, 1))
    return FlowNetParams(
        policy=nn.gaussian_init(rng, policy_spec),
        state_flow=nn.gaussian_init(rng, flow_spec),
        log_z=T.Tensor(0.0, requires_grad=True),
        num_dims=d,
        uniform_pb=uniform_pb,
        sample_from_edge_flows=sample_from_edge_flows,
    )


# ---------------------------------------------------------------------------
# raw (tape-free) policy evaluation

def policy_heads_raw(params: FlowNetParams, grid: GridConfig, coords: np.ndarray):
    """Returns (forward_logits, backward_logits, edge_flow_logits) for a
    [N, D] int64 coordinate batch."""
    out = nn.mlp_apply(params.policy, E.featurize_coords(grid, coords))
    a = params.n_actions
    d = params.num_dims
    return out[:, :a], out[:, a : a + d], out[:, a + d : 2 * a + d]


def forward_logprob_matrix(
    params: FlowNetParams, grid: GridConfig, coords: np.ndarray
) -> np.ndarray:
    """Masked log P_F rows for each coordinate; -inf on invalid actions.

    Uses the edge-flow head as the policy when the model samples from edge
    flows (flow-matching mode), otherwise the forward-logit head.
    """
    fwd, _, edge = policy_heads_raw(params, grid, coords)
    logits = edge if params.sample_from_edge_flows else fwd
    masks = E.forward_masks(grid, coords)
    return K.masked_log_softmax_fwd(np.ascontiguousarray(logits), masks)


def log_pf_all(params: FlowNetParams, grid: GridConfig, s: GridState) -> np.ndarray:
    if s.stopped:
        raise ValueError("terminal state has no actions")
    c = np.asarray([s.coords], dtype=np.int64)
    return forward_logprob_matrix(params, grid, c)[0]


def log_pf(params: FlowNetParams, grid: GridConfig, s: GridState, a: int) -> float:
    if a not in E.valid_actions(grid, s):
        raise ValueError(f"action {a} invalid at {s}")
    return float(log_pf_all(params, grid, s)[a])


def log_pb(params: FlowNetParams, grid: GridConfig, s_next: GridState, a: int) -> float:
    """Log probability of the backward step from s_next along parent action a.

    For a stopped state the unique parent is its twin via Stop, so the value
    is 0. For interior states, a is the index of the decremented coordinate.
    """
    if s_next.stopped:
        if a != grid.stop_action:
            raise ValueError("stopped states have only the stop parent")
        return 0.0
    if all(c == 0 for c in s_next.coords):
        raise ValueError("the start state has no parents")
    if not (0 <= a < grid.num_dims and s_next.coords[a] > 0):
        raise ValueError(f"action {a} does not index a parent of {s_next}")
    c = np.asarray([s_next.coords], dtype=np.int64)
    if params.uniform_pb:
        n_parents = int((c > 0).sum())
        return float(-np.log(n_parents))
    _, bwd, _ = policy_heads_raw(params, grid, c)
    masks = E.backward_masks(grid, c)
    lsm = K.masked_log_softmax_fwd(np.ascontiguousarray(bwd), masks)
    return float(lsm[0, a])


def log_state_flow(params: FlowNetParams, grid: GridConfig, s: GridState) -> float:
    feats = E.featurize_coords(grid, np.asarray([s.coords], dtype=np.int64))
    return float(nn.mlp_apply(params.state_flow, feats)[0, 0])


def log_edge_flow(params: FlowNetParams, grid: GridConfig, s: GridState, a: int) -> float:
    """Log F(s, a) from the per-action edge-flow head."""
    if a not in E.valid_actions(grid, s):
        raise ValueError(f"action {a} invalid at {s}")
    c = np.asarray([s.coords], dtype=np.int64)
    _, _, edge = policy_heads_raw(params, grid, c)
    return float(edge[0, a])


# ---------------------------------------------------------------------------
# sampling

def _mixture_probs(logprobs: np.ndarray, masks: np.ndarray, eps: float) -> np.ndarray:
    """(1 - eps) * P_F + eps * uniform over valid actions, rows of a batch."""
    probs = np.exp(logprobs)
    if eps > 0.0:
        uni = masks / masks.sum(axis=1, keepdims=True)
        probs = (1.0 - eps) * probs + eps * uni
    return probs


def _sample_rows(probs: np.ndarray, stop_action: int, u: np.ndarray):
    """Inverse-CDF draw per row from given uniforms; ties and fp shortfall
    resolve to valid actions (stop is last and always valid)."""
    cum = probs.cumsum(axis=1)
    choice = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(choice, stop_action)


def sample_action(
    params: FlowNetParams,
    grid: GridConfig,
    s: GridState,
    eps: float,
    rng: np.random.Generator,
) -> int:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    c = np.asarray([s.coords], dtype=np.int64)
    logprobs = forward_logprob_matrix(params, grid, c)
    masks = E.forward_masks(grid, c)
    probs = _mixture_probs(logprobs, masks, eps)
    return int(_sample_rows(probs, grid.stop_action, rng.random(1))[0])


@dataclass
class Trajectory:
    """A complete rollout s0 -> ... -> sn with sn stopped.

    Intrinsic fields are zero until the trainer annotates them:
    edge_intrinsic[t] belongs to the transition states[t] -> states[t+1];
    terminal_intrinsic belongs to the stopped final state.
    """

    states: list[GridState]
    actions: list[int]
    terminal_reward: float
    edge_intrinsic: np.ndarray = field(default=None)  # type: ignore[assignment]
    terminal_intrinsic: float = 0.0
    _coords: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.edge_intrinsic is None:
            self.edge_intrinsic = np.zeros(len(self.actions), dtype=np.float64)

    @property
    def n_transitions(self) -> int:
        return len(self.actions)

    @property
    def terminal(self) -> GridState:
        return self.states[-1]

    def coords_matrix(self) -> np.ndarray:
        """All state coordinates as one [n+1, D] int64 array (cached)."""
        if self._coords is None:
            self._coords = np.asarray([s.coords for s in self.states], dtype=np.int64)
        return self._coords


def _mixture_rows(params: FlowNetParams, grid: GridConfig, cells: np.ndarray, eps: float):
    logprobs = forward_logprob_matrix(params, grid, cells)
    masks = E.forward_masks(grid, cells)
    return _mixture_probs(logprobs, masks, eps)


TABLE_MAX_CELLS = E.MAX_ENUM_CELLS


def rollout_batch(
    params: FlowNetParams,
    grid: GridConfig,
    eps: float,
    rng: np.random.Generator,
    batch_size: int,
    warm_cells: np.ndarray | None = None,
    full_table: bool = False,
) -> list[Trajectory]:
    """Sample batch_size trajectories in lockstep from the start state.

    A fixed [max_steps, batch] block of uniforms is drawn up front; active
    rollout b consumes u[k, b] at step k, so the trajectory distribution does
    not depend on the evaluation strategy.

    The sampling probabilities are cached per cell for the duration of the
    call. `warm_cells` pre-fills the cache in one batched forward pass (the
    trainer passes the previously visited cells); `full_table` evaluates the
    whole grid up front and runs the stepping loop in the compiled kernel,
    which wins on small grids.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    d = grid.num_dims
    max_steps = 2 * grid.side * grid.num_dims
    u = rng.random((max_steps, batch_size))
    strides = np.array([grid.side ** (d - 1 - k) for k in range(d)], dtype=np.int64)

    if full_table and grid.num_cells <= TABLE_MAX_CELLS:
        cum = np.cumsum(_mixture_rows(params, grid, E.enumerate_cells(grid), eps), axis=1)
        try:
            actions_mat, lengths = K.rollout_steps(
                np.ascontiguousarray(cum), strides, grid.stop_action, u
            )
        except ValueError as e:
            raise RuntimeError(str(e)) from None
        action_lists = [
            [int(a) for a in actions_mat[b, : lengths[b]]] for b in range(batch_size)
        ]
    else:
        use_table = grid.num_cells <= TABLE_MAX_CELLS
        if use_table:
            table = np.empty((grid.num_cells, grid.num_actions))
            have = np.zeros(grid.num_cells, dtype=bool)
            if warm_cells is not None and warm_cells.shape[0]:
                flat = warm_cells @ strides
                table[flat] = _mixture_rows(params, grid, warm_cells, eps)
                have[flat] = True
        coords = np.zeros((batch_size, d), dtype=np.int64)
        active = np.ones(batch_size, dtype=bool)
        action_lists = [[] for _ in range(batch_size)]
        for k in range(max_steps):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            c = coords[idx]
            if use_table:
                flat = c @ strides
                need = ~have[flat]
                if need.any():
                    miss_flat, first = np.unique(flat[need], return_index=True)
                    miss_cells = c[need][first]
                    table[miss_flat] = _mixture_rows(params, grid, miss_cells, eps)
                    have[miss_flat] = True
                probs = table[flat]
            else:
                probs = _mixture_rows(params, grid, c, eps)
            chosen = _sample_rows(probs, grid.stop_action, u[k, idx])
            for j, b in enumerate(idx):
                a = int(chosen[j])
                action_lists[b].append(a)
                if a == grid.stop_action:
                    active[b] = False
                else:
                    coords[b, a] += 1
        if active.any():
            raise RuntimeError("rollout exceeded the DAG length bound")

    out = []
    for b in range(batch_size):
        cur = [0] * d
        states = [E.initial_state(grid)]
        for a in action_lists[b]:
            if a == grid.stop_action:
                states.append(GridState(coords=tuple(cur), stopped=True))
            else:
                cur[a] += 1
                states.append(GridState(coords=tuple(cur)))
        terminal = states[-1]
        out.append(
            Trajectory(
                states=states,
                actions=action_lists[b],
                terminal_reward=E.reward(grid, terminal),
            )
        )
    return out


def rollout(
    params: FlowNetParams,
    grid: GridConfig,
    eps: float,
    rng: np.random.Generator,
) -> Trajectory:
    return rollout_batch(params, grid, eps, rng, 1)[0]
