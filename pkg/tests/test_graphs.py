import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfgmesh.env import GridConfig, TaskKind
from mfgmesh.graphs import (AgentGraph, build_radius_agent_graph, build_visibility_graph,
                            diameter, neighbors)


def naive_edges(cells, fraction, width, height):
    thr = fraction * math.sqrt((width - 1) ** 2 + (height - 1) ** 2)
    out = set()
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            if math.dist(cells[i], cells[j]) <= thr + 1e-9:
                out.add((i, j))
    return out


def test_radius_graph_hand_example():
    grid = GridConfig(10, 10, TaskKind.CLUSTER, 3)
    # threshold = 4 exactly: (0,0)-(0,3) and (0,3)-(0,7) are linked, not (0,0)-(0,7)
    g = build_radius_agent_graph([(0, 0), (0, 3), (0, 7)], 4 / math.sqrt(162), grid)
    assert g.edges == {(0, 1), (1, 2)}
    assert neighbors(g, 1) == [0, 2]
    assert diameter(g) == 2


def test_radius_zero_links_only_colocated():
    grid = GridConfig(5, 5, TaskKind.CLUSTER, 3)
    g = build_radius_agent_graph([(1, 1), (1, 1), (1, 2)], 0.0, grid)
    assert g.edges == {(0, 1)}
    assert diameter(g) is None


def test_radius_one_is_complete():
    grid = GridConfig(5, 5, TaskKind.CLUSTER, 3)
    g = build_radius_agent_graph([(0, 0), (4, 4), (2, 3)], 1.0, grid)
    assert g.edges == AgentGraph.complete(3).edges
    assert diameter(g) == 1


def test_radius_fraction_validated():
    grid = GridConfig(5, 5, TaskKind.CLUSTER, 2)
    with pytest.raises(ValueError):
        build_radius_agent_graph([(0, 0), (1, 1)], 1.5, grid)


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 4)), min_size=2, max_size=15),
       st.floats(0, 1))
def test_radius_graph_matches_naive(cells, fraction):
    grid = GridConfig(5, 7, TaskKind.CLUSTER, len(cells))
    g = build_radius_agent_graph(cells, fraction, grid)
    assert set(g.edges) == naive_edges(cells, fraction, 5, 7)
    assert all(i < j for i, j in g.edges)
    assert not g.adjacency.diagonal().any()
    assert (g.adjacency == g.adjacency.T).all()


def test_visibility_graph():
    grid = GridConfig(3, 3, TaskKind.CLUSTER, 2)
    vis = build_visibility_graph(grid, 0.0)
    assert vis.visible.tolist() == np.eye(9, dtype=bool).tolist()
    # threshold 1/sqrt(8)*sqrt(8)=1: only 4-neighbours
    vis = build_visibility_graph(grid, 1 / math.sqrt(8))
    centre = vis.visible[4]
    assert np.flatnonzero(centre).tolist() == [1, 3, 4, 5, 7]


def test_neighbors_out_of_range():
    with pytest.raises(IndexError):
        neighbors(AgentGraph.empty(3), 3)


def test_diameter_path_and_single():
    path = AgentGraph(5, frozenset({(0, 1), (1, 2), (2, 3), (3, 4)}))
    assert diameter(path) == 4
    assert diameter(AgentGraph.empty(1)) == 0
    assert diameter(AgentGraph.empty(2)) is None


@given(st.integers(1, 10), st.data())
def test_diameter_matches_floyd_warshall(n, data):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = data.draw(st.sets(st.sampled_from(pairs)) if pairs else st.just(set()))
    inf = float("inf")
    d = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for i, j in edges:
        d[i][j] = d[j][i] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                d[i][j] = min(d[i][j], d[i][k] + d[k][j])
    longest = max(max(row) for row in d)
    expected = None if longest == inf else longest
    assert diameter(AgentGraph(n, frozenset(edges))) == expected
