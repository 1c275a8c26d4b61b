"""Edge-list graphs and sparse adjacency matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["Graph", "AdjacencyMatrix", "load_edge_list", "write_edge_list", "to_adjacency"]

MODES = ("undirected", "directed", "bipartite")


@dataclass(frozen=True)
class Graph:
    """A binary graph stored as a deduplicated edge set.

    Undirected edges are stored once with ``i < j``.  In bipartite mode the
    two node sets are disjoint and indexed separately, so ``edges`` is a
    subset of ``sources x destinations``.  Nodes without edges are allowed:
    the node counts may exceed the largest index appearing in ``edges``.
    """

    n_sources: int
    n_destinations: int
    edges: frozenset
    mode: str = "undirected"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown graph mode {self.mode!r}")
        if self.n_sources < 1 or self.n_destinations < 1:
            raise ValueError("node counts must be positive")
        if self.mode != "bipartite" and self.n_sources != self.n_destinations:
            raise ValueError("source and destination counts differ in a unipartite graph")
        for i, j in self.edges:
            if not (0 <= i < self.n_sources and 0 <= j < self.n_destinations):
                raise ValueError(f"edge ({i}, {j}) out of bounds")
            if self.mode == "undirected":
                if i == j:
                    raise ValueError(f"self-loop ({i}, {i}) in an undirected graph")
                if i > j:
                    raise ValueError("undirected edges must be stored with i < j")

    @classmethod
    def from_edges(cls, edges, n_sources, n_destinations=None, mode="undirected") -> "Graph":
        """Build a graph, canonicalising and deduplicating the edge list."""
        if n_destinations is None:
            n_destinations = n_sources
        out = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if mode == "undirected":
                if i == j:
                    raise ValueError(f"self-loop ({i}, {i}) in an undirected graph")
                if i > j:
                    i, j = j, i
            out.add((i, j))
        return cls(int(n_sources), int(n_destinations), frozenset(out), mode)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Sparse binary adjacency matrix with an explicit symmetry flag."""

    matrix: sp.csr_array
    symmetric: bool

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def n_edges(self) -> int:
        """Number of distinct edges (unordered pairs when symmetric)."""
        nnz = self.matrix.nnz
        return nnz // 2 if self.symmetric else nnz

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def export_coordinates(self, path) -> None:
        """Write the nonzero entries as ``row,col,value`` CSV lines."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            fh.write("row,col,value\n")
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r},{c},{v:g}\n")


def _parse_lines(path):
    rows = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(
                    f"{path}: line {ln}: expected two whitespace-separated identifiers"
                )
            rows.append((ln, parts[0], parts[1]))
    if not rows:
        raise ValueError(f"{path}: empty edge list")
    return rows


def _all_integer(tokens) -> bool:
    for t in tokens:
        try:
            int(t)
        except ValueError:
            return False
    return True


def load_edge_list(path, mode: str = "undirected", indexing: int = 0) -> Graph:
    """Read a two-column edge list into a :class:`Graph`.

    Blank lines and lines starting with ``#`` are skipped; duplicate edges
    are silently dropped.  Integer identifiers in unipartite graphs are
    taken as node indices relative to ``indexing`` (0 or 1), so gaps in the
    numbering become isolated nodes.  String identifiers, and both sides of
    a bipartite graph, are interned to contiguous indices in first-seen
    order.
    """
    if mode not in MODES:
        raise ValueError(f"unknown graph mode {mode!r}")
    if indexing not in (0, 1):
        raise ValueError("indexing must be 0 or 1")
    rows = _parse_lines(path)
    numeric = mode != "bipartite" and _all_integer(
        t for _, a, b in rows for t in (a, b)
    )

    edges = set()
    if numeric:
        n_max = 0
        for ln, a, b in rows:
            i, j = int(a) - indexing, int(b) - indexing
            if i < 0 or j < 0:
                raise ValueError(f"{path}: line {ln}: identifier below index base")
            if mode == "undirected":
                if i == j:
                    raise ValueError(f"{path}: line {ln}: self-loop in undirected graph")
                if i > j:
                    i, j = j, i
            n_max = max(n_max, i, j)
            edges.add((i, j))
        return Graph(n_max + 1, n_max + 1, frozenset(edges), mode)

    src_ids: dict = {}
    dst_ids = src_ids if mode != "bipartite" else {}
    for ln, a, b in rows:
        i = src_ids.setdefault(a, len(src_ids))
        j = dst_ids.setdefault(b, len(dst_ids))
        if mode == "undirected":
            if i == j:
                raise ValueError(f"{path}: line {ln}: self-loop in undirected graph")
            if i > j:
                i, j = j, i
        edges.add((i, j))
    return Graph(len(src_ids), len(dst_ids), frozenset(edges), mode)


def write_edge_list(graph: Graph, path) -> None:
    """Write a graph's edges as zero-based integer pairs, sorted."""
    with open(path, "w") as fh:
        fh.write(f"# mode: {graph.mode}\n")
        for i, j in sorted(graph.edges):
            fh.write(f"{i} {j}\n")


def to_adjacency(graph: Graph) -> AdjacencyMatrix:
    """Binary adjacency matrix of a graph, symmetrised when undirected."""
    if graph.edges:
        idx = np.array(sorted(graph.edges), dtype=np.int64)
        rows, cols = idx[:, 0], idx[:, 1]
    else:
        rows = cols = np.empty(0, dtype=np.int64)
    if graph.mode == "undirected":
        rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
    data = np.ones(rows.size, dtype=float)
    mat = sp.csr_array(
        (data, (rows, cols)), shape=(graph.n_sources, graph.n_destinations)
    )
    return AdjacencyMatrix(mat, symmetric=graph.mode == "undirected")
