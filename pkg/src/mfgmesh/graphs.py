"""Radius-based agent graphs, state-visibility graphs and graph queries."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .env import GridConfig

# Absorbs float error in ``fraction * diagonal`` so integer-valued thresholds
# behave as exact comparisons.
_DIST_EPS = 1e-9


@dataclass(frozen=True)
class AgentGraph:
    """Undirected graph over agent indices; self-loops are never stored."""

    n: int
    edges: frozenset[tuple[int, int]]

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> "AgentGraph":
        adj = np.asarray(adj, dtype=bool)
        i, j = np.nonzero(np.triu(adj, k=1))
        return cls(adj.shape[0], frozenset(zip(i.tolist(), j.tolist())))

    @classmethod
    def empty(cls, n: int) -> "AgentGraph":
        return cls(n, frozenset())

    @classmethod
    def complete(cls, n: int) -> "AgentGraph":
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    @cached_property
    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges


@dataclass(frozen=True)
class StateVisGraph:
    """Which states can count each other's occupants; every state sees itself."""

    n_states: int
    visible: np.ndarray  # (S, S) bool, symmetric, true diagonal

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.visible, k=1))
        return frozenset(zip(i.tolist(), j.tolist()))

    @classmethod
    def self_only(cls, n_states: int) -> "StateVisGraph":
        return cls(n_states, np.eye(n_states, dtype=bool))


def distance_threshold(radius_fraction: float, grid: GridConfig) -> float:
    if not 0.0 <= radius_fraction <= 1.0:
        raise ValueError(f"radius_fraction must lie in [0, 1], got {radius_fraction}")
    return radius_fraction * float(np.hypot(grid.width - 1, grid.height - 1))


def _within(points: np.ndarray, threshold: float) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff.astype(float) ** 2).sum(axis=-1))
    return dist <= threshold + _DIST_EPS


def build_radius_agent_graph(positions, radius_fraction: float, grid: GridConfig) -> AgentGraph:
    """Connect agents whose Euclidean cell distance is within a fraction of the grid diagonal."""
    pts = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    return AgentGraph.from_adjacency(_within(pts, distance_threshold(radius_fraction, grid)))


def build_visibility_graph(grid: GridConfig, radius_fraction: float) -> StateVisGraph:
    rows, cols = np.divmod(np.arange(grid.n_states), grid.width)
    pts = np.stack([rows, cols], axis=1)
    vis = _within(pts, distance_threshold(radius_fraction, grid))
    np.fill_diagonal(vis, True)
    return StateVisGraph(grid.n_states, vis)


def neighbors(g: AgentGraph, i: int) -> list[int]:
    if not 0 <= i < g.n:
        raise IndexError(f"agent {i} out of range for graph on {g.n} nodes")
    return np.flatnonzero(g.adjacency[i]).tolist()


def diameter(g: AgentGraph) -> int | None:
    """Longest shortest path between any two nodes, or ``None`` if disconnected."""
    if g.n < 1:
        raise ValueError("diameter of an empty graph")
    adj = [neighbors(g, i) for i in range(g.n)]
    longest = 0
    for src in range(g.n):
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if len(dist) < g.n:
            return None
        longest = max(longest, max(dist.values()))
    return longest
