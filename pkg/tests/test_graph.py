import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from strongcsp.graph import (Graph, GraphError, VertexSet, boundary_weight, complete_graph, cycle_graph,
                             edge_boundary, expansion, graph_from_dict, graph_from_json,
                             graph_to_json, induced_subgraph, internal_weight, path_graph, random_regular,
                             with_self_loops)

from conftest import graphs, triangles, two_cliques_bridge


def test_parallel_edges_merge_and_loops_fold():
    g = Graph.build(3, [(0, 1, 1.0), (1, 0, 2.0), (2, 2, 0.5)])
    assert g.m == 1
    assert g.weight[0] == 3.0
    assert g.loops[2] == 0.5
    np.testing.assert_allclose(g.deg, [3.0, 3.0, 0.5])


@pytest.mark.parametrize("w", [-1.0, float("nan"), float("inf")])
def test_bad_weights_rejected(w):
    with pytest.raises(GraphError):
        Graph.build(2, [(0, 1, w)])


def test_vertex_set_sorted_unique():
    s = VertexSet.of([3, 1, 3], 5)
    assert s.members.tolist() == [1, 3]
    assert s.complement().members.tolist() == [0, 2, 4]
    with pytest.raises(GraphError):
        VertexSet.of([5], 5)


def test_induced_clique_restriction():
    sub, ids = induced_subgraph(complete_graph(4), [0, 1, 2])
    assert sub.n == 3 and sub.m == 3
    assert ids.tolist() == [0, 1, 2]


def test_induced_path_endpoints_isolated():
    sub, _ = induced_subgraph(path_graph(3), [0, 2])
    assert sub.n == 2 and sub.m == 0


def test_induced_one_side_of_bridge():
    sub, ids = induced_subgraph(two_cliques_bridge(10), range(10))
    assert sub.m == 45
    assert ids.tolist() == list(range(10))


def test_induced_empty_rejected():
    with pytest.raises(GraphError, match="empty induced set"):
        induced_subgraph(complete_graph(3), [])


def test_boundary_examples():
    total, edges = edge_boundary(complete_graph(4), [0])
    assert total == 3 and len(edges) == 3
    assert edge_boundary(triangles(2), [0, 1, 2])[0] == 0
    total, edges = edge_boundary(two_cliques_bridge(10), range(10))
    assert len(edges) == 1 and total == 1
    assert edge_boundary(complete_graph(4), [])[0] == 0
    assert edge_boundary(complete_graph(4), range(4))[0] == 0


def test_expansion_examples():
    g = random_regular(20, 3, 0)
    assert expansion(g, [5]) == pytest.approx(1.0)
    assert expansion(triangles(2), [0, 1, 2]) == 0.0
    g = two_cliques_bridge(4)
    assert expansion(g, range(4)) == pytest.approx(1 / 13)
    with pytest.raises(GraphError, match="zero-volume"):
        expansion(g, range(8))


def test_self_loops_examples():
    h = with_self_loops(complete_graph(3), complete_graph(3).edges)
    assert h.m == 0
    np.testing.assert_allclose(h.loops, 2.0)
    np.testing.assert_allclose(h.deg, 2.0)
    g = cycle_graph(5)
    same = with_self_loops(g, [])
    assert same.edges == g.edges
    g = Graph.build(6, triangles(2).edges + [(0, 3)])
    h = with_self_loops(g, [(0, 3)])
    np.testing.assert_allclose(h.deg, g.deg)
    assert edge_boundary(h, [0, 1, 2])[0] == 0
    with pytest.raises(GraphError):
        with_self_loops(g, [(0, 4)])


def test_json_roundtrip_and_rejection():
    g = Graph.build(4, [(0, 1, 0.5), (2, 3, 2.0)], loops=[(1, 1.5)])
    h = graph_from_json(graph_to_json(g))
    assert h.edges == g.edges
    np.testing.assert_array_equal(h.loops, g.loops)
    with pytest.raises(GraphError):
        graph_from_dict({"n": 2, "edges": [[0, 1, -1.0]]})
    with pytest.raises(GraphError):
        graph_from_dict(json.loads('{"edges": []}'))


def test_random_regular_is_simple_and_regular():
    g = random_regular(40, 6, 1)
    assert np.all(g.deg == 6)
    assert g.m == 120


@given(graphs(weighted=True), st.data())
def test_boundary_symmetric_in_complement(g, data):
    s = data.draw(st.lists(st.integers(0, g.n - 1), unique=True))
    comp = np.setdiff1d(np.arange(g.n), s)
    assert boundary_weight(g, s) == pytest.approx(boundary_weight(g, comp))


@given(graphs(weighted=True), st.data())
def test_partition_accounts_for_all_weight(g, data):
    a = data.draw(st.lists(st.integers(0, g.n - 1), unique=True))
    b = np.setdiff1d(np.arange(g.n), a)
    total = internal_weight(g, a) + internal_weight(g, b) + boundary_weight(g, a)
    assert total == pytest.approx(g.total_weight)


@given(graphs(weighted=True), st.data())
def test_self_loops_preserve_degrees(g, data):
    f = data.draw(st.lists(st.sampled_from(g.edges), unique=True)) if g.m else []
    np.testing.assert_allclose(with_self_loops(g, f).deg, g.deg)


@given(graphs(weighted=True))
def test_induced_full_set_is_identity(g):
    sub, ids = induced_subgraph(g, range(g.n))
    assert ids.tolist() == list(range(g.n))
    assert sub.edges == g.edges
    np.testing.assert_allclose(sub.deg, g.deg)
