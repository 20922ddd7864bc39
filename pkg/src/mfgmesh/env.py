"""Grid-world dynamics, task rewards and observation encoding.

Cells are ``(row, col)`` pairs; the flat state index of a cell is
``row * width + col``. Batched helpers operate on an ``(N, 2)`` integer array
of positions so a whole population can be stepped in one call.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np


class TaskKind(str, enum.Enum):
    CLUSTER = "Cluster"
    TARGET_AGREEMENT = "TargetAgreement"
    EVADE_SHARK = "EvadeShark"
    PUSH_OBJECT = "PushObject"
    DISPERSE = "Disperse"

    @property
    def has_entity(self) -> bool:
        return self in (TaskKind.EVADE_SHARK, TaskKind.PUSH_OBJECT)


class ObservationMode(str, enum.Enum):
    LOCAL_ONLY = "LocalOnly"
    GLOBAL_MEAN_FIELD = "GlobalMeanField"
    ESTIMATED_MEAN_FIELD = "EstimatedMeanField"

    @property
    def population_dependent(self) -> bool:
        return self is not ObservationMode.LOCAL_ONLY


class Action(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4


N_ACTIONS = len(Action)

# (d_row, d_col) per action; UP decreases the row index.
MOVES = np.array([(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)], dtype=np.int64)
CARDINALS = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)
_OPPOSITE = {Action.UP: Action.DOWN, Action.DOWN: Action.UP,
             Action.LEFT: Action.RIGHT, Action.RIGHT: Action.LEFT}


class AgentState(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class GridConfig:
    width: int
    height: int
    task: TaskKind
    n_agents: int
    targets: tuple[tuple[int, int], ...] = ()
    shark_noise_prob: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        object.__setattr__(self, "targets",
                           tuple((int(r), int(c)) for r, c in self.targets))
        if self.width < 2 or self.height < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if self.n_agents < 2:
            raise ValueError(f"n_agents must be >= 2, got {self.n_agents}")
        if self.task is TaskKind.TARGET_AGREEMENT and not self.targets:
            raise ValueError("TargetAgreement needs at least one target")
        if self.task is not TaskKind.TARGET_AGREEMENT and self.targets:
            raise ValueError("targets are only meaningful for TargetAgreement")
        for r, c in self.targets:
            if not self.contains((r, c)):
                raise ValueError(f"target {(r, c)} lies outside the grid")
        if not 0.0 <= self.shark_noise_prob <= 1.0:
            raise ValueError("shark_noise_prob must lie in [0, 1]")

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def max_manhattan(self) -> int:
        return (self.width - 1) + (self.height - 1)

    def contains(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def flat(self, cell) -> int:
        return int(cell[0]) * self.width + int(cell[1])

    def cell(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.width)

    @staticmethod
    def corner_targets(width: int, height: int) -> tuple[tuple[int, int], ...]:
        return ((0, 0), (0, width - 1), (height - 1, 0), (height - 1, width - 1))


@dataclass
class EnvState:
    """Positions of all agents plus the optional shark/object cell."""

    positions: np.ndarray  # (N, 2) int64, rows then cols
    entity: tuple[int, int] | None = None
    time: int = 0

    @property
    def agents(self) -> list[AgentState]:
        return [AgentState(int(r), int(c)) for r, c in self.positions]

    def copy(self) -> "EnvState":
        return replace(self, positions=self.positions.copy())


def _as_positions(agents) -> np.ndarray:
    return np.asarray(agents, dtype=np.int64).reshape(-1, 2)


def random_env_state(grid: GridConfig, rng: np.random.Generator) -> EnvState:
    """Uniform random cell for every agent (and the entity, if the task has one)."""
    rows = rng.integers(0, grid.height, size=grid.n_agents)
    cols = rng.integers(0, grid.width, size=grid.n_agents)
    entity = None
    if grid.task.has_entity:
        entity = (int(rng.integers(0, grid.height)), int(rng.integers(0, grid.width)))
    return EnvState(np.stack([rows, cols], axis=1).astype(np.int64), entity, 0)


def step_agent(pos, action, grid: GridConfig) -> tuple[int, int]:
    """Move one cell in a cardinal direction; moves off the grid leave ``pos`` unchanged."""
    dr, dc = MOVES[int(action)]
    r, c = int(pos[0]) + int(dr), int(pos[1]) + int(dc)
    if not grid.contains((r, c)):
        return (int(pos[0]), int(pos[1]))
    return (r, c)


def step_agents(positions: np.ndarray, actions: np.ndarray, grid: GridConfig) -> np.ndarray:
    # Clamping each coordinate is equivalent to rejecting the move, since a
    # single move changes only one coordinate by one.
    moved = positions + MOVES[np.asarray(actions, dtype=np.int64)]
    moved[:, 0] = np.clip(moved[:, 0], 0, grid.height - 1)
    moved[:, 1] = np.clip(moved[:, 1], 0, grid.width - 1)
    return moved


def flat_indices(positions, grid: GridConfig) -> np.ndarray:
    positions = _as_positions(positions)
    return positions[:, 0] * grid.width + positions[:, 1]


def state_counts(positions, grid: GridConfig) -> np.ndarray:
    return np.bincount(flat_indices(positions, grid), minlength=grid.n_states)


def empirical_distribution(agents, grid: GridConfig) -> np.ndarray:
    """Fraction of the population occupying each flat state."""
    positions = _as_positions(agents)
    if len(positions) == 0:
        raise ValueError("empirical distribution of an empty population")
    if (positions[:, 0] < 0).any() or (positions[:, 0] >= grid.height).any() \
            or (positions[:, 1] < 0).any() or (positions[:, 1] >= grid.width).any():
        raise ValueError("agent position outside the grid")
    return state_counts(positions, grid) / len(positions)


# --- rewards -----------------------------------------------------------------

def reward_bounds(task: TaskKind, grid: GridConfig) -> tuple[float, float]:
    """Analytic (min, max) of the raw reward, used for the affine map to [0, 1]."""
    task = TaskKind(task)
    if task is TaskKind.CLUSTER:
        return float(np.log(1.0 / grid.n_agents)), 0.0
    if task is TaskKind.TARGET_AGREEMENT:
        return -1.0, 1.0
    if task is TaskKind.DISPERSE:
        return -1.0, 0.0
    d = float(grid.max_manhattan)
    if task is TaskKind.EVADE_SHARK:
        return 0.0, 2.0 * d
    return -2.0 * d, 0.0  # PUSH_OBJECT


def _edge_distance(cells: np.ndarray, grid: GridConfig) -> np.ndarray:
    # Manhattan distance to the nearest grid edge; the perpendicular component
    # is zero so only one axis contributes.
    r, c = cells[..., 0], cells[..., 1]
    return np.minimum(np.minimum(r, grid.height - 1 - r), np.minimum(c, grid.width - 1 - c))


def raw_rewards(env: EnvState, actions, mu: np.ndarray, grid: GridConfig) -> np.ndarray:
    """Unnormalised task reward for every agent."""
    task = grid.task
    pos = env.positions
    frac = np.asarray(mu)[flat_indices(pos, grid)]
    n = grid.n_agents
    if task is TaskKind.CLUSTER:
        with np.errstate(divide="ignore"):
            return np.log(frac)
    if task is TaskKind.TARGET_AGREEMENT:
        if not grid.targets:
            raise ValueError("TargetAgreement needs at least one target")
        targets = np.asarray(grid.targets, dtype=np.int64)
        on_target = (pos[:, None, :] == targets[None, :, :]).all(axis=2).any(axis=1)
        # Compare counts, not fractions, so f > 1/N is exact.
        shared = np.rint(frac * n) > 1
        return np.where(on_target & shared, frac, -1.0)
    if task is TaskKind.DISPERSE:
        stay = np.asarray(actions) == Action.STAY
        return np.where(stay, -frac, -1.0)
    if env.entity is None:
        raise ValueError(f"{task.value} requires an entity position")
    ent = np.asarray(env.entity, dtype=np.int64)
    dist = np.abs(pos - ent).sum(axis=1).astype(float)
    d = float(grid.max_manhattan)
    if task is TaskKind.EVADE_SHARK:
        log_min = np.log(1.0 / n)
        with np.errstate(divide="ignore"):
            crowd = (np.log(frac) - log_min) / (-log_min) * d
        return dist + crowd
    # PUSH_OBJECT: closeness to the object and object closeness to an edge.
    return -dist - float(_edge_distance(ent, grid))


def compute_rewards(env: EnvState, actions, mu: np.ndarray, grid: GridConfig) -> np.ndarray:
    lo, hi = reward_bounds(grid.task, grid)
    r = (raw_rewards(env, actions, mu, grid) - lo) / (hi - lo)
    return np.clip(r, 0.0, 1.0)


def compute_reward(task, i: int, env: EnvState, action, mu: np.ndarray, grid: GridConfig) -> float:
    """Normalised reward in [0, 1] of agent ``i`` taking ``action``."""
    if TaskKind(task) is not grid.task:
        raise ValueError(f"task {task} does not match grid task {grid.task}")
    actions = np.full(len(env.positions), Action.STAY, dtype=np.int64)
    actions[i] = int(action)
    return float(compute_rewards(env, actions, mu, grid)[i])


# --- entity dynamics ---------------------------------------------------------

def _toward(src: tuple[int, int], dst: tuple[int, int]) -> Action:
    dr, dc = dst[0] - src[0], dst[1] - src[1]
    if abs(dc) >= abs(dr):
        if dc > 0:
            return Action.RIGHT
        if dc < 0:
            return Action.LEFT
        return Action.STAY  # co-located with the target cell
    return Action.DOWN if dr > 0 else Action.UP


def push_field(env: EnvState, grid: GridConfig) -> np.ndarray:
    """Probability of the object moving UP, DOWN, LEFT, RIGHT.

    Each direction is weighted by one plus the number of agents standing in
    the cell on the opposite side of the object.
    """
    counts = state_counts(env.positions, grid)
    weights = np.empty(4)
    for k, d in enumerate(CARDINALS):
        dr, dc = MOVES[_OPPOSITE[d]]
        cell = (env.entity[0] + int(dr), env.entity[1] + int(dc))
        behind = counts[grid.flat(cell)] if grid.contains(cell) else 0
        weights[k] = 1.0 + behind
    return weights / weights.sum()


def advance_entity(task, env: EnvState, mu: np.ndarray, rng: np.random.Generator,
                   grid: GridConfig) -> tuple[int, int]:
    """Next shark/object cell. Consumes exactly two uniforms per call."""
    task = TaskKind(task)
    if not task.has_entity or env.entity is None:
        raise ValueError(f"task {task.value} has no entity to advance")
    u_noise, u_dir = rng.random(2)
    if task is TaskKind.EVADE_SHARK:
        # np.argmax returns the lowest index among ties.
        target = grid.cell(int(np.argmax(mu)))
        action = _toward(env.entity, target)
        if u_noise < grid.shark_noise_prob:
            action = CARDINALS[min(int(u_dir * 4), 3)]
    else:
        probs = push_field(env, grid)
        k = int(np.searchsorted(np.cumsum(probs), u_dir, side="right"))
        action = CARDINALS[min(k, 3)]
    return step_agent(env.entity, action, grid)


# --- observations ------------------------------------------------------------

def observation_size(grid: GridConfig, mode: ObservationMode) -> int:
    size = grid.width + grid.height
    if grid.task.has_entity:
        size += grid.width + grid.height
    if ObservationMode(mode).population_dependent:
        size += grid.n_states
    return size


def encode_observations(env: EnvState, mfs: np.ndarray | None, grid: GridConfig,
                        mode: ObservationMode) -> np.ndarray:
    """Feature matrix, one row per agent.

    ``mfs`` is either a single distribution shared by everyone or an
    ``(N, |S|)`` array of per-agent estimates.
    """
    mode = ObservationMode(mode)
    n = len(env.positions)
    h, w = grid.height, grid.width
    out = np.zeros((n, observation_size(grid, mode)))
    idx = np.arange(n)
    out[idx, env.positions[:, 0]] = 1.0
    out[idx, h + env.positions[:, 1]] = 1.0
    offset = h + w
    if grid.task.has_entity:
        out[:, offset + env.entity[0]] = 1.0
        out[:, offset + h + env.entity[1]] = 1.0
        offset += h + w
    if mode.population_dependent:
        if mfs is None:
            raise ValueError(f"{mode.value} observations need a mean-field vector")
        mfs = np.asarray(mfs, dtype=float)
        if mfs.shape[-1] != grid.n_states:
            raise ValueError(f"mean field has length {mfs.shape[-1]}, grid has {grid.n_states} states")
        out[:, offset:] = mfs
    elif mfs is not None:
        raise ValueError("LocalOnly observations take no mean-field vector")
    return out


def encode_observation(agent, env: EnvState, mf, grid: GridConfig,
                       mode: ObservationMode) -> np.ndarray:
    single = EnvState(_as_positions([agent]), env.entity, env.time)
    return encode_observations(single, mf, grid, mode)[0]
