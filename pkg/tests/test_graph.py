import gzip

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npergm.errors import ParseError, ValidationError
from npergm.graph import (
    UndirectedGraph,
    change_statistics,
    change_statistics_batch,
    count_statistics,
    ego_net,
    load_edge_list,
    read_edge_list,
    write_edge_list,
)
from oracles import dense_stats, flip_recount, random_adjacency


@st.composite
def graphs(draw, max_n=12):
    n = draw(st.integers(2, max_n))
    p = draw(st.floats(0, 1))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_adjacency(n, p, np.random.default_rng(seed))


def test_parse_skips_comments_and_blank_lines():
    g = load_edge_list(["# header", "", "0 1", "  1 2  ", "# 5 6", "2\t0"])
    assert g.n == 3
    assert g.n_edges == 3


def test_parse_error_reports_line_number():
    with pytest.raises(ParseError) as exc:
        load_edge_list(["0 1", "1 x"])
    assert exc.value.lineno == 2
    with pytest.raises(ParseError) as exc:
        load_edge_list(["0 1 2"])
    assert exc.value.lineno == 1
    with pytest.raises(ParseError):
        load_edge_list(["-1 2"])


def test_self_loop_rejected():
    with pytest.raises(ValidationError):
        load_edge_list(["0 1", "3 3"])


def test_duplicate_edges_collapse():
    g = load_edge_list(["0 1", "1 0", "0 1"])
    assert g.n_edges == 1


def test_relabel_keeps_original_ids():
    g = load_edge_list(["10 30", "30 20"], relabel=True)
    assert g.n == 3
    assert list(g.labels) == [10, 20, 30]
    assert g.has_edge(0, 2) and g.has_edge(1, 2) and not g.has_edge(0, 1)


def test_explicit_n_allows_isolated_nodes():
    g = load_edge_list(["0 1"], n=5)
    assert g.n == 5 and list(g.degrees) == [1, 1, 0, 0, 0]
    with pytest.raises(ValidationError):
        load_edge_list(["0 7"], n=5)


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    g = UndirectedGraph.from_dense(random_adjacency(30, 0.2, rng))
    write_edge_list(g, tmp_path / "g.txt")
    assert read_edge_list(tmp_path / "g.txt", n=30) == g
    with gzip.open(tmp_path / "g.txt.gz", "wt") as fh:
        fh.write((tmp_path / "g.txt").read_text())
    assert read_edge_list(tmp_path / "g.txt.gz", n=30) == g


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        read_edge_list(tmp_path / "nope.txt")


@given(graphs())
def test_counts_match_dense_oracle(adj):
    g = UndirectedGraph.from_dense(adj)
    assert np.array_equal(count_statistics(g).as_array(), dense_stats(adj))
    assert np.array_equal(g.to_dense(), adj)


@given(graphs(), st.data())
def test_change_statistics_match_flip_and_recount(adj, data):
    n = adj.shape[0]
    i = data.draw(st.integers(0, n - 1))
    j = data.draw(st.integers(0, n - 1).filter(lambda v: v != i))
    g = UndirectedGraph.from_dense(adj)
    want = flip_recount(adj, i, j)
    assert np.array_equal(change_statistics(g, (i, j)), want)
    # the change statistic does not depend on the current dyad value
    assert np.array_equal(change_statistics(g.toggled(i, j), (i, j)), want)


@given(graphs())
def test_batch_equals_single(adj):
    g = UndirectedGraph.from_dense(adj)
    iu, ju = np.triu_indices(g.n, 1)
    batch = change_statistics_batch(g, iu, ju)
    single = np.array([change_statistics(g, (a, b)) for a, b in zip(iu, ju)]).reshape(-1, 3)
    assert np.array_equal(batch, single)


def test_change_statistics_invalid_pairs():
    g = UndirectedGraph(4, [(0, 1)])
    with pytest.raises(ValidationError):
        change_statistics(g, (2, 2))
    with pytest.raises(ValidationError):
        change_statistics(g, (0, 4))
    with pytest.raises(ValidationError):
        change_statistics_batch(g, [0, 1], [1, 1])


def test_empty_and_complete_graphs():
    n = 7
    empty = UndirectedGraph(n)
    full = UndirectedGraph.from_dense(np.ones((n, n)) - np.eye(n))
    assert count_statistics(empty).as_array().tolist() == [0, 0, 0]
    assert count_statistics(full).as_array().tolist() == [21, 7 * 15, 35]
    assert change_statistics(full, (0, 1)).tolist() == [1, 2 * (n - 2), n - 2]


def test_graph_is_immutable_under_toggle():
    g = UndirectedGraph(4, [(0, 1)])
    h = g.toggled(0, 1)
    assert g.has_edge(0, 1) and not h.has_edge(0, 1)
    assert g.with_edge(2, 3, True).n_edges == 2


def test_ego_net_is_induced_on_neighbours():
    g = load_edge_list(["0 1", "0 2", "0 3", "1 2", "2 3", "3 4", "1 4"])
    sub, nodes = ego_net(g, 0)
    assert list(nodes) == [1, 2, 3]
    assert sub.n == 3
    # edges among {1, 2, 3}: (1,2), (2,3)
    assert sub.n_edges == 2 and sub.has_edge(0, 1) and sub.has_edge(1, 2)
    assert list(sub.labels) == [1, 2, 3]


def test_ego_net_of_isolated_node_is_empty():
    g = UndirectedGraph(3, [(0, 1)])
    sub, nodes = ego_net(g, 2)
    assert sub.n == 0 and nodes.size == 0


def test_drop_node_keeps_labels():
    g = load_edge_list(["5 6", "6 7", "5 7", "7 9"], relabel=True)
    h = g.drop_node(3)
    assert h.n == 3 and list(h.labels) == [5, 6, 7]
    assert h.n_edges == 3
