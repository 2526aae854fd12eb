"""Grid DAG environment with sparse corner rewards.

States are lattice cells plus a stopped flag; actions either increment one
coordinate or stop. Stopping produces the terminal twin of the current cell,
which carries the extrinsic reward: ``goal_reward`` on the configured goal
cells and the small positive floor everywhere else (the floor keeps log-space
objectives finite). The induced graph is acyclic because every action either
raises the coordinate sum or flips the stopped flag.

Coordinates are tuples in the public API; hot paths use int64 arrays and the
batched helpers at the bottom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from augflow.backend import kernels as K

MAX_ENUM_CELLS = 65536  # guard for exhaustive terminal-state enumeration


def default_goal_cells(side: int) -> frozenset[tuple[int, int]]:
    """Three single-cell goals near the corners away from the origin.

    The third goal sits one step off the far corner so the goal set is not
    symmetric under coordinate exchange.
    """
    return frozenset({(0, side - 1), (side - 1, 0), (side - 1, 1)})


@dataclass(frozen=True)
class GridConfig:
    side: int
    num_dims: int = 2
    goal_cells: frozenset[tuple[int, ...]] = field(default_factory=frozenset)
    reward_floor: float = 1e-6
    goal_reward: float = 1.0

    def __post_init__(self):
        if self.side < 2:
            raise ValueError("side must be >= 2")
        if self.num_dims < 1:
            raise ValueError("num_dims must be >= 1")
        if self.reward_floor < 0:
            raise ValueError("reward floor must be nonnegative")
        if self.goal_reward <= 0:
            raise ValueError("goal reward must be positive")
        if self.reward_floor >= self.goal_reward:
            raise ValueError("reward floor must be below the goal reward")
        origin = (0,) * self.num_dims
        for cell in self.goal_cells:
            if len(cell) != self.num_dims:
                raise ValueError(f"goal cell {cell} has wrong dimension")
            if not all(0 <= c < self.side for c in cell):
                raise ValueError(f"goal cell {cell} outside the grid")
        if origin in self.goal_cells:
            raise ValueError("the start cell cannot be a goal")

    @property
    def num_actions(self) -> int:
        """Increments plus the stop action."""
        return self.num_dims + 1

    @property
    def stop_action(self) -> int:
        return self.num_dims

    @property
    def num_cells(self) -> int:
        return self.side**self.num_dims

    @property
    def feature_width(self) -> int:
        return self.num_dims * self.side


def make_grid(side: int, **kwargs) -> GridConfig:
    """GridConfig with the default three-goal layout for 2-D grids."""
    if "goal_cells" not in kwargs and kwargs.get("num_dims", 2) == 2:
        kwargs["goal_cells"] = default_goal_cells(side)
    return GridConfig(side=side, **kwargs)


@dataclass(frozen=True)
class GridState:
    coords: tuple[int, ...]
    stopped: bool = False


def initial_state(cfg: GridConfig) -> GridState:
    return GridState(coords=(0,) * cfg.num_dims, stopped=False)


def valid_actions(cfg: GridConfig, s: GridState) -> list[int]:
    """Increment(d) for every coordinate below the edge, then Stop."""
    if s.stopped:
        raise ValueError("terminal state has no actions")
    acts = [d for d in range(cfg.num_dims) if s.coords[d] < cfg.side - 1]
    acts.append(cfg.stop_action)
    return acts


def step(cfg: GridConfig, s: GridState, a: int) -> GridState:
    if s.stopped:
        raise ValueError("terminal state has no actions")
    if a == cfg.stop_action:
        return GridState(coords=s.coords, stopped=True)
    if not 0 <= a < cfg.num_dims:
        raise ValueError(f"unknown action {a}")
    if s.coords[a] >= cfg.side - 1:
        raise ValueError(f"increment of dim {a} invalid at {s.coords}")
    coords = list(s.coords)
    coords[a] += 1
    return GridState(coords=tuple(coords), stopped=False)


def parents(cfg: GridConfig, s: GridState) -> list[tuple[GridState, int]]:
    """(parent state, action leading here) pairs; empty for the start state."""
    if s.stopped:
        return [(GridState(coords=s.coords, stopped=False), cfg.stop_action)]
    out = []
    for d in range(cfg.num_dims):
        if s.coords[d] > 0:
            coords = list(s.coords)
            coords[d] -= 1
            out.append((GridState(coords=tuple(coords), stopped=False), d))
    return out


def reward(cfg: GridConfig, x: GridState) -> float:
    if not x.stopped:
        raise ValueError("reward is defined on terminal (stopped) states only")
    return cfg.goal_reward if x.coords in cfg.goal_cells else cfg.reward_floor


def featurize(cfg: GridConfig, s: GridState) -> np.ndarray:
    """Concatenated per-coordinate one-hots; identical for a cell and its
    stopped twin."""
    return featurize_coords(cfg, np.asarray([s.coords], dtype=np.int64))[0]


def featurize_coords(cfg: GridConfig, coords: np.ndarray) -> np.ndarray:
    """Batched featurization of an [N, num_dims] int64 coordinate array."""
    return K.one_hot_pairs(np.ascontiguousarray(coords, dtype=np.int64), cfg.side)


def enumerate_cells(cfg: GridConfig) -> np.ndarray:
    """All lattice cells, row-major (last coordinate fastest), [N, D] int64."""
    if cfg.num_cells > MAX_ENUM_CELLS:
        raise ValueError(f"grid too large to enumerate ({cfg.num_cells} cells)")
    grids = np.meshgrid(
        *[np.arange(cfg.side, dtype=np.int64)] * cfg.num_dims, indexing="ij"
    )
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def enumerate_terminal_states(cfg: GridConfig) -> list[GridState]:
    return [
        GridState(coords=tuple(int(c) for c in row), stopped=True)
        for row in enumerate_cells(cfg)
    ]


def cell_index(cfg: GridConfig, coords) -> int:
    """Row-major flat index of a cell."""
    idx = 0
    for c in coords:
        idx = idx * cfg.side + int(c)
    return idx


def all_rewards(cfg: GridConfig) -> np.ndarray:
    """Terminal rewards for every cell in row-major order."""
    r = np.full(cfg.num_cells, cfg.reward_floor, dtype=np.float64)
    for cell in cfg.goal_cells:
        r[cell_index(cfg, cell)] = cfg.goal_reward
    return r


# ---------------------------------------------------------------------------
# batched mask helpers (coords: [N, D] int64)

def forward_masks(cfg: GridConfig, coords: np.ndarray) -> np.ndarray:
    """Valid-action mask per row: increments where coords < side-1, stop always."""
    n = coords.shape[0]
    m = np.empty((n, cfg.num_actions), dtype=np.uint8)
    m[:, : cfg.num_dims] = coords < cfg.side - 1
    m[:, cfg.num_dims] = 1
    return m


def backward_masks(cfg: GridConfig, coords: np.ndarray) -> np.ndarray:
    """Existing-parent mask per row: decrements where coords > 0."""
    return (coords > 0).astype(np.uint8)


# ---------------------------------------------------------------------------
# key=value text serialization

def grid_to_text(cfg: GridConfig) -> str:
    goals = ";".join(
        ",".join(str(c) for c in cell) for cell in sorted(cfg.goal_cells)
    )
    lines = [
        f"H={cfg.side}",
        f"num_dims={cfg.num_dims}",
        f"goals={goals}",
        f"reward_floor={cfg.reward_floor!r}",
        f"goal_reward={cfg.goal_reward!r}",
    ]
    return "\n".join(lines) + "\n"


def grid_from_items(items: dict[str, str]) -> GridConfig:
    """Build a GridConfig from parsed key=value items (see configio)."""
    try:
        side = int(items["H"])
        num_dims = int(items.get("num_dims", "2"))
        reward_floor = float(items.get("reward_floor", "1e-6"))
        goal_reward = float(items.get("goal_reward", "1.0"))
    except KeyError as e:
        raise ValueError(f"missing grid key {e.args[0]!r}") from None
    except ValueError as e:
        raise ValueError(f"bad grid value: {e}") from None
    goals_text = items.get("goals", "")
    if goals_text.strip():
        cells = []
        for part in goals_text.split(";"):
            cells.append(tuple(int(c) for c in part.split(",")))
        goal_cells = frozenset(cells)
    elif num_dims == 2:
        goal_cells = default_goal_cells(side)
    else:
        raise ValueError("goals must be given explicitly for num_dims != 2")
    return GridConfig(
        side=side,
        num_dims=num_dims,
        goal_cells=goal_cells,
        reward_floor=reward_floor,
        goal_reward=goal_reward,
    )
