"""Local estimation of the population distribution by gossiping state counts.

Two counting schemes are supported:

* ``"general"``: each agent records the IDs of the agents it can observe
  directly (plus itself) in the slot of their state, neighbours merge ID sets
  by union, and agents that were never counted are spread uniformly over all
  states.
* ``"visibility"``: an agent counts *every* occupant of each state visible
  from its own, so a filled slot is an exact count (possibly zero). Gossip
  only fills empty slots and uncounted agents are spread over the states that
  are still empty.

Counts travel through the communication graph for ``c_e`` synchronous rounds
before they are turned into a distribution, so only certain information is
propagated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .graphs import AgentGraph, StateVisGraph

NO_COUNT = -1

Mode = Literal["general", "visibility"]


@dataclass
class CountVector:
    """Per-state partial tally held by one agent.

    In visibility mode ``slots`` is an int array of length |S| with
    ``NO_COUNT`` marking states without information. In general mode it is a
    ``(|S|, N)`` boolean bitset; a slot with no bits set is ``NO_COUNT``.
    """

    mode: Mode
    slots: np.ndarray

    @property
    def n_states(self) -> int:
        return self.slots.shape[0]

    def counted_mask(self) -> np.ndarray:
        if self.mode == "general":
            return self.slots.any(axis=1)
        return self.slots != NO_COUNT

    def counts(self) -> np.ndarray:
        """Count per slot, with ``NO_COUNT`` where nothing was recorded."""
        if self.mode == "general":
            c = self.slots.sum(axis=1)
            return np.where(c > 0, c, NO_COUNT)
        return self.slots.copy()

    def ids(self, s: int) -> set[int]:
        if self.mode != "general":
            raise TypeError("visibility count vectors carry no IDs")
        return set(np.flatnonzero(self.slots[s]).tolist())


def local_count_general(i: int, states, ids, obs_graph: AgentGraph, n_states: int) -> CountVector:
    """Agent ``i``'s ID tally from its observation neighbours and itself."""
    states = np.asarray(states, dtype=np.int64)
    ids = np.asarray(ids, dtype=np.int64)
    n = len(states)
    if len(ids) != n:
        raise ValueError(f"{len(states)} states but {len(ids)} ids")
    if len(np.unique(ids)) != n:
        raise ValueError("agent IDs must be unique")
    if ids.min() < 0 or ids.max() >= n:
        raise ValueError("agent IDs must lie in [0, N)")
    slots = np.zeros((n_states, n), dtype=bool)
    seen = obs_graph.adjacency[i].copy()
    seen[i] = True
    for j in np.flatnonzero(seen):
        slots[states[j], ids[j]] = True
    return CountVector("general", slots)


def local_count_visibility(i: int, states, vis: StateVisGraph) -> CountVector:
    """Exact occupancy of every state visible from agent ``i``'s state."""
    states = np.asarray(states, dtype=np.int64)
    occupancy = np.bincount(states, minlength=vis.n_states)
    slots = np.where(vis.visible[states[i]], occupancy, NO_COUNT)
    return CountVector("visibility", slots.astype(np.int64))


def gossip_round(counts: list[CountVector], comm: AgentGraph,
                 mode: Mode | None = None) -> list[CountVector]:
    """One synchronous exchange; every update reads only the previous round."""
    if not counts:
        return []
    mode = mode or counts[0].mode
    if any(c.mode != mode for c in counts):
        raise ValueError("count vectors mix estimation modes")
    stacked = np.stack([c.slots for c in counts])
    reach = comm.adjacency | np.eye(len(counts), dtype=bool)
    out = []
    for i in range(len(counts)):
        peers = stacked[reach[i]]
        if mode == "general":
            out.append(CountVector(mode, peers.any(axis=0)))
            continue
        # Filled slots are exact counts, so every peer holding one must agree.
        hi = peers.max(axis=0)
        lo = np.where(peers == NO_COUNT, np.iinfo(np.int64).max, peers).min(axis=0)
        clash = (hi != NO_COUNT) & (lo != hi)
        if clash.any():
            s = int(np.flatnonzero(clash)[0])
            raise RuntimeError(f"conflicting counts for state {s}: {sorted(set(peers[:, s]))}")
        out.append(CountVector(mode, hi))
    return out


def finalize_estimate_general(count: CountVector, n: int) -> np.ndarray:
    """Counted IDs become ``|IDs| / N``; the uncounted remainder is spread over every state."""
    per_state = count.slots.sum(axis=1)
    counted = int(per_state.sum())
    if counted > n:
        raise ValueError(f"{counted} agents counted but population is {n}")
    uncounted = n - counted
    return uncounted / (n * count.n_states) + per_state / n


def finalize_estimate_visibility(count: CountVector, n: int) -> np.ndarray:
    """Counted slots become ``count / N``; the remainder is spread over the unseen slots only."""
    seen = count.slots != NO_COUNT
    counted = int(count.slots[seen].sum())
    if counted > n:
        raise ValueError(f"{counted} agents counted but population is {n}")
    uncounted = n - counted
    unseen = int((~seen).sum())
    est = np.where(seen, count.slots, 0).astype(float) / n
    if unseen:
        est[~seen] = uncounted / (n * unseen)
    elif uncounted:
        raise RuntimeError(f"{uncounted} agents unaccounted for but every state was counted")
    return est


def estimate_all(states, ids, comm: AgentGraph, obs: AgentGraph | StateVisGraph,
                 c_e: int, mode: Mode, n_states: int | None = None) -> np.ndarray:
    """Local count, ``c_e`` gossip rounds, then finalisation, for every agent.

    ``n_states`` is required in general mode (the observation graph is over
    agents and cannot tell the state-space size). Returns an ``(N, |S|)``
    array; row ``i`` is agent ``i``'s estimate.
    """
    states = np.asarray(states, dtype=np.int64)
    n = len(states)
    if mode == "general":
        if not isinstance(obs, AgentGraph):
            raise TypeError("general estimation needs an agent observation graph")
        if n_states is None:
            raise ValueError("general estimation needs n_states")
        counts = [local_count_general(i, states, ids, obs, n_states) for i in range(n)]
    elif mode == "visibility":
        if not isinstance(obs, StateVisGraph):
            raise TypeError("visibility estimation needs a state visibility graph")
        counts = [local_count_visibility(i, states, obs) for i in range(n)]
    else:
        raise ValueError(f"unknown estimation mode {mode!r}")
    for _ in range(c_e):
        counts = gossip_round(counts, comm, mode)
    finalize = finalize_estimate_general if mode == "general" else finalize_estimate_visibility
    return np.stack([finalize(c, n) for c in counts])
