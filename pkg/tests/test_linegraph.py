import networkx as nx
import numpy as np
import pytest

from conftest import random_graph
from dualfair.errors import EmptyLineGraphError
from dualfair.graph import Graph, read_edge_list
from dualfair.linegraph import INTER, predicted_line_stats, save_line_graph, to_line_graph


def shape(g):
    lg = to_line_graph(g)
    return lg.graph.node_count, lg.graph.edge_count


def test_small_cases():
    path = Graph(3, [(0, 1), (1, 2)], [0, 1, 0])
    tri = Graph(3, [(0, 1), (1, 2), (0, 2)], [0, 1, 0])
    star = Graph(4, [(0, 1), (0, 2), (0, 3)], [0, 1, 0, 1])
    assert shape(path) == (2, 1) == predicted_line_stats(path)
    assert shape(tri) == (3, 3)
    assert shape(star) == (3, 3) == predicted_line_stats(star)


def test_empty_graph_rejected():
    with pytest.raises(EmptyLineGraphError):
        to_line_graph(Graph(3, [], [0, 1, 0]))


def test_labels_and_order():
    g = Graph(4, [(2, 3), (0, 1), (1, 2)], [0, 1, 1, 0])
    lg = to_line_graph(g)
    assert lg.edge_index.tolist() == [[0, 1], [1, 2], [2, 3]]
    assert lg.line_groups.tolist() == [INTER, 0, INTER]


def test_matches_networkx(rng):
    for _ in range(25):
        g = random_graph(rng, int(rng.integers(2, 30)), float(rng.random()) * 0.5)
        if g.edge_count == 0:
            continue
        lg = to_line_graph(g)
        ref = nx.line_graph(nx.Graph([tuple(e) for e in g.edges.tolist()]))
        got = {frozenset((tuple(lg.edge_index[a]), tuple(lg.edge_index[b]))) for a, b in lg.graph.edges.tolist()}
        want = {frozenset(tuple(sorted(x)) for x in e) for e in ref.edges()}
        assert got == want
        assert (lg.graph.node_count, lg.graph.edge_count) == predicted_line_stats(g)
        assert lg.line_groups.sum() == g.inter_mask.sum()


def test_incidence_rows_are_degrees(rng):
    g = random_graph(rng, 15, 0.3)
    inc = to_line_graph(g).incidence()
    assert np.array_equal(np.asarray(inc.sum(axis=1)).ravel(), g.degrees)


def test_save(tmp_path):
    g = Graph(3, [(0, 1), (1, 2)], [0, 1, 1])
    lg = to_line_graph(g)
    save_line_graph(lg, tmp_path / "l.tsv")
    assert read_edge_list(tmp_path / "l.tsv").tolist() == [[0, 1]]
    assert (tmp_path / "l.tsv.map").read_text() == "0\t0,1\n1\t1,2\n"
    assert (tmp_path / "l.tsv.groups").read_text() == "0\t1\n1\t0\n"
