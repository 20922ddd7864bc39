import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgmesh.graphs import AgentGraph, StateVisGraph
from mfgmesh.mfest import (NO_COUNT, CountVector, estimate_all, finalize_estimate_general,
                           finalize_estimate_visibility, gossip_round, local_count_general,
                           local_count_visibility)


def path_graph(n):
    return AgentGraph(n, frozenset((i, i + 1) for i in range(n - 1)))


# --- independent reference implementations (plain python sets / dicts) ---

def reference_general(states, obs_edges, comm_edges, c_e, n_states):
    n = len(states)
    obs_nb = {i: {i} for i in range(n)}
    comm_nb = {i: {i} for i in range(n)}
    for i, j in obs_edges:
        obs_nb[i].add(j), obs_nb[j].add(i)
    for i, j in comm_edges:
        comm_nb[i].add(j), comm_nb[j].add(i)
    known = [set(obs_nb[i]) for i in range(n)]
    for _ in range(c_e):
        known = [set().union(*(known[j] for j in comm_nb[i])) for i in range(n)]
    out = np.zeros((n, n_states))
    for i in range(n):
        for s in range(n_states):
            out[i, s] = sum(1 for j in known[i] if states[j] == s) / n + (n - len(known[i])) / (n * n_states)
    return out


def reference_visibility(states, visible, comm_edges, c_e):
    n, n_states = len(states), len(visible)
    comm_nb = {i: {i} for i in range(n)}
    for i, j in comm_edges:
        comm_nb[i].add(j), comm_nb[j].add(i)
    known = [{s for s in range(n_states) if visible[states[i]][s]} for i in range(n)]
    for _ in range(c_e):
        known = [set().union(*(known[j] for j in comm_nb[i])) for i in range(n)]
    out = np.zeros((n, n_states))
    for i in range(n):
        counted = sum(1 for j in range(n) if states[j] in known[i])
        unseen = n_states - len(known[i])
        for s in range(n_states):
            if s in known[i]:
                out[i, s] = sum(1 for j in range(n) if states[j] == s) / n
            else:
                out[i, s] = (n - counted) / (n * unseen)
    return out


def test_general_finalize_hand_value():
    slots = np.zeros((4, 10), dtype=bool)
    slots[0, 3] = True
    est = finalize_estimate_general(CountVector("general", slots), 10)
    assert est.tolist() == pytest.approx([0.325, 0.225, 0.225, 0.225])


def test_visibility_finalize_hand_value():
    cv = CountVector("visibility", np.array([2, 1, NO_COUNT, NO_COUNT]))
    assert finalize_estimate_visibility(cv, 10).tolist() == pytest.approx([0.2, 0.1, 0.35, 0.35])


def test_finalize_overcount_rejected():
    with pytest.raises(ValueError):
        finalize_estimate_visibility(CountVector("visibility", np.array([3, 3])), 5)


def test_local_count_general_counts_self_and_neighbours():
    g = AgentGraph(3, frozenset({(0, 1)}))
    cv = local_count_general(0, [2, 2, 0], [0, 1, 2], g, 3)
    assert cv.ids(2) == {0, 1}
    assert cv.counts().tolist() == [NO_COUNT, NO_COUNT, 2]


def test_local_count_general_validates_ids():
    g = AgentGraph.empty(2)
    with pytest.raises(ValueError):
        local_count_general(0, [0, 1], [0, 0], g, 2)
    with pytest.raises(ValueError):
        local_count_general(0, [0, 1], [0, 2], g, 2)


def test_local_count_visibility_zero_is_a_count():
    vis = StateVisGraph(3, np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]], dtype=bool))
    cv = local_count_visibility(0, [0, 2, 2], vis)
    assert cv.slots.tolist() == [1, 0, NO_COUNT]


def test_gossip_conflict_detected():
    a = CountVector("visibility", np.array([1, NO_COUNT]))
    b = CountVector("visibility", np.array([2, NO_COUNT]))
    with pytest.raises(RuntimeError):
        gossip_round([a, b], AgentGraph.complete(2))


def test_gossip_is_synchronous():
    # information moves one hop per round along a path
    n = 4
    states = [0, 1, 2, 3]
    vis = StateVisGraph.self_only(4)
    counts = [local_count_visibility(i, states, vis) for i in range(n)]
    once = gossip_round(counts, path_graph(n))
    assert once[0].counted_mask().tolist() == [True, True, False, False]
    twice = gossip_round(once, path_graph(n))
    assert twice[0].counted_mask().tolist() == [True, True, True, False]


def test_full_information_gives_truth():
    states = [0, 0, 1, 3]
    truth = np.bincount(states, minlength=5) / 4
    est = estimate_all(states, [0, 1, 2, 3], AgentGraph.complete(4), AgentGraph.empty(4), 1,
                       "general", n_states=5)
    assert np.allclose(est, truth)
    vis_est = estimate_all(states, None, AgentGraph.empty(4), StateVisGraph(5, np.ones((5, 5), bool)),
                           0, "visibility")
    assert np.allclose(vis_est, truth)


def test_no_information_general_is_near_uniform():
    est = estimate_all([0, 1, 1], [0, 1, 2], AgentGraph.empty(3), AgentGraph.empty(3), 0,
                       "general", n_states=3)
    # self counted, other two spread over 3 states
    assert est[0].tolist() == pytest.approx([1 / 3 + 2 / 9, 2 / 9, 2 / 9])


@settings(max_examples=150, deadline=None)
@given(data=st.data(), n=st.integers(1, 12), n_states=st.integers(1, 9), c_e=st.integers(0, 3))
def test_general_matches_reference(data, n, n_states, c_e):
    states = data.draw(st.lists(st.integers(0, n_states - 1), min_size=n, max_size=n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edge_sets = st.sets(st.sampled_from(pairs)) if pairs else st.just(set())
    obs_edges, comm_edges = data.draw(edge_sets), data.draw(edge_sets)
    est = estimate_all(states, list(range(n)), AgentGraph(n, frozenset(comm_edges)),
                       AgentGraph(n, frozenset(obs_edges)), c_e, "general", n_states=n_states)
    ref = reference_general(states, obs_edges, comm_edges, c_e, n_states)
    assert np.allclose(est, ref, atol=1e-12)
    assert np.allclose(est.sum(axis=1), 1.0, atol=1e-9)
    assert (est >= 0).all()


@settings(max_examples=150, deadline=None)
@given(data=st.data(), n=st.integers(1, 12), n_states=st.integers(2, 9), c_e=st.integers(0, 3))
def test_visibility_matches_reference(data, n, n_states, c_e):
    states = data.draw(st.lists(st.integers(0, n_states - 1), min_size=n, max_size=n))
    vis = np.eye(n_states, dtype=bool)
    for i, j in data.draw(st.sets(st.tuples(st.integers(0, n_states - 1), st.integers(0, n_states - 1)))):
        vis[i, j] = vis[j, i] = True
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    comm_edges = data.draw(st.sets(st.sampled_from(pairs)) if pairs else st.just(set()))
    ref = reference_visibility(states, vis.tolist(), comm_edges, c_e)
    est = estimate_all(states, None, AgentGraph(n, frozenset(comm_edges)),
                       StateVisGraph(n_states, vis), c_e, "visibility")
    assert np.allclose(est, ref, atol=1e-12)
    assert np.allclose(est.sum(axis=1), 1.0, atol=1e-9)
    assert (est >= 0).all()


def test_more_rounds_never_lose_information():
    rng = np.random.default_rng(5)
    n, s = 10, 6
    states = rng.integers(0, s, n)
    comm = path_graph(n)
    vis = StateVisGraph.self_only(s)
    counts = [local_count_visibility(i, states, vis) for i in range(n)]
    prev = [c.counted_mask() for c in counts]
    for _ in range(n):
        counts = gossip_round(counts, comm)
        cur = [c.counted_mask() for c in counts]
        assert all((p <= c).all() for p, c in zip(prev, cur))
        prev = cur
