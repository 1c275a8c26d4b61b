import numpy as np
import pytest

from lsbm.graph import Graph, load_edge_list, to_adjacency, write_edge_list


def write(tmp_path, text, name="edges.txt"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_undirected_dedups_symmetric_pair(tmp_path):
    g = load_edge_list(write(tmp_path, "0 1\n1 0\n"), mode="undirected")
    assert g.n_sources == 2 and g.n_destinations == 2
    assert g.edges == frozenset({(0, 1)})


def test_string_ids_interned_in_first_seen_order(tmp_path):
    g = load_edge_list(write(tmp_path, "a b\nb c\n"), mode="directed")
    assert g.n_sources == 3
    assert g.edges == frozenset({(0, 1), (1, 2)})


def test_bipartite_ids_interned_per_side(tmp_path):
    g = load_edge_list(write(tmp_path, "0 5\n1 5\n"), mode="bipartite")
    assert g.n_sources == 2
    assert g.n_destinations == 1
    assert g.edges == frozenset({(0, 0), (1, 0)})


def test_comments_blanks_and_duplicates(tmp_path):
    g = load_edge_list(write(tmp_path, "# header\n\n0 1\n0 1\n1 2\n"), mode="directed")
    assert g.n_edges == 2


def test_numeric_one_based_indexing(tmp_path):
    g = load_edge_list(write(tmp_path, "1 2\n2 3\n"), mode="undirected", indexing=1)
    assert g.n_sources == 3
    assert g.edges == frozenset({(0, 1), (1, 2)})


def test_numeric_gap_keeps_isolated_node(tmp_path):
    g = load_edge_list(write(tmp_path, "0 2\n"), mode="undirected")
    assert g.n_sources == 3
    adj = to_adjacency(g)
    assert adj.matrix[:, 1].sum() == 0


def test_malformed_line_reports_line_number(tmp_path):
    with pytest.raises(ValueError, match="line 2"):
        load_edge_list(write(tmp_path, "0 1\n0 1 2\n"), mode="directed")


def test_undirected_self_loop_rejected(tmp_path):
    with pytest.raises(ValueError, match="self-loop"):
        load_edge_list(write(tmp_path, "0 0\n"), mode="undirected")


def test_empty_file_rejected(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        load_edge_list(write(tmp_path, "# nothing\n"), mode="undirected")


def test_adjacency_undirected_single_edge():
    g = Graph.from_edges([(0, 1)], 2)
    assert to_adjacency(g).toarray().tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_adjacency_directed_single_edge():
    g = Graph.from_edges([(0, 1)], 2, mode="directed")
    assert to_adjacency(g).toarray().tolist() == [[0.0, 1.0], [0.0, 0.0]]


def test_adjacency_bipartite_two_by_one():
    g = Graph.from_edges([(0, 0), (1, 0)], 2, 1, mode="bipartite")
    assert to_adjacency(g).toarray().tolist() == [[1.0], [1.0]]


def test_adjacency_symmetric_exactly():
    rng = np.random.default_rng(0)
    edges = {(int(i), int(j)) for i, j in rng.integers(0, 30, size=(80, 2)) if i != j}
    g = Graph.from_edges(edges, 30)
    a = to_adjacency(g).toarray()
    assert np.array_equal(a, a.T)


def test_edge_count_matches_dedup():
    g = Graph.from_edges([(0, 1), (1, 0), (2, 3)], 4)
    adj = to_adjacency(g)
    assert g.n_edges == 2
    assert adj.n_edges == 2


@pytest.mark.parametrize("mode", ["undirected", "directed", "bipartite"])
def test_round_trip_through_edge_list(tmp_path, mode):
    rng = np.random.default_rng(hash(mode) % 2**31)
    for trial in range(5):
        n, m = 12, 9 if mode == "bipartite" else 12
        pairs = set()
        while len(pairs) < 20:
            i, j = int(rng.integers(0, n)), int(rng.integers(0, m))
            if mode == "undirected" and i == j:
                continue
            pairs.add((i, j))
        g = Graph.from_edges(pairs, n, m, mode=mode)
        path = tmp_path / f"{mode}_{trial}.txt"
        write_edge_list(g, path)
        g2 = load_edge_list(str(path), mode=mode)
        a_orig = to_adjacency(g).toarray()
        a_back = to_adjacency(g2).toarray()
        if mode == "bipartite":
            # the loader interns both sides in first-seen order over the
            # sorted edge list; apply the same relabeling to the original
            src, dst = {}, {}
            for i, j in sorted(g.edges):
                src.setdefault(i, len(src))
                dst.setdefault(j, len(dst))
            expected = np.zeros((len(src), len(dst)))
            for i, j in g.edges:
                expected[src[i], dst[j]] = 1.0
            assert np.array_equal(a_back, expected)
        else:
            assert np.array_equal(a_back[: a_orig.shape[0], : a_orig.shape[1]],
                                  a_orig[: a_back.shape[0], : a_back.shape[1]])
            assert a_back.sum() == a_orig.sum()


def test_out_of_bounds_edge_rejected():
    with pytest.raises(ValueError, match="out of bounds"):
        Graph(2, 2, frozenset({(0, 5)}), "directed")


def test_coordinate_export(tmp_path):
    g = Graph.from_edges([(0, 1)], 2, mode="directed")
    path = tmp_path / "adj.csv"
    to_adjacency(g).export_coordinates(path)
    assert path.read_text() == "row,col,value\n0,1,1\n"
