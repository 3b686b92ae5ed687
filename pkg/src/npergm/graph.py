"""Undirected binary networks, edge-list ingest and Markov statistics.

Graphs are stored in compressed sparse row form with sorted neighbour
arrays, so shared-neighbour counts are linear merges and batches of
dyads can be processed with sparse row products.

The statistic list is fixed to ``STATISTICS`` = (edges, two-stars,
triangles); all vectors returned here follow that order.
"""

from __future__ import annotations

import gzip
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, ValidationError

STATISTICS: tuple[str, ...] = ("edges", "twostars", "triangles")


@dataclass(frozen=True)
class StatVector:
    edges: int
    twostars: int
    triangles: int

    def as_array(self) -> np.ndarray:
        return np.array([self.edges, self.twostars, self.triangles], dtype=np.int64)


class UndirectedGraph:
    """Immutable simple undirected graph on nodes ``0..n-1``.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : array_like of shape (m, 2)
        Node pairs. Duplicates and reversed pairs are merged.
    labels : array_like, optional
        Original identifier of every node, kept for provenance after a
        relabelling (ego networks, dropped nodes, arbitrary input ids).
    """

    __slots__ = ("_n", "_csr", "_degrees", "labels")

    def __init__(self, n: int, edges=(), labels=None):
        n = int(n)
        if n < 0:
            raise ValidationError(f"node count must be nonnegative, got {n}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise ValidationError(f"edge endpoint out of range for n={n}")
            loops = e[:, 0] == e[:, 1]
            if loops.any():
                node = int(e[loops][0, 0])
                raise ValidationError(f"self-loop at node {node}")
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        a = sp.csr_matrix(
            (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n)
        )
        a.sum_duplicates()
        a.data[:] = 1
        a.sort_indices()
        self._n = n
        self._csr = a
        self._degrees = np.diff(a.indptr).astype(np.int64)
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)

    @classmethod
    def from_csr(cls, a: sp.spmatrix, labels=None) -> "UndirectedGraph":
        upper = sp.triu(a, k=1).tocoo()
        return cls(a.shape[0], np.column_stack([upper.row, upper.col]), labels)

    @classmethod
    def from_dense(cls, adjacency) -> "UndirectedGraph":
        y = np.asarray(adjacency)
        if y.ndim != 2 or y.shape[0] != y.shape[1]:
            raise ValidationError("adjacency matrix must be square")
        if not np.array_equal(y, y.T):
            raise ValidationError("adjacency matrix must be symmetric")
        if np.any(np.diag(y)):
            raise ValidationError("adjacency matrix has self-loops")
        i, j = np.nonzero(np.triu(y, k=1))
        return cls(y.shape[0], np.column_stack([i, j]))

    @property
    def n(self) -> int:
        return self._n

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    @property
    def n_edges(self) -> int:
        return int(self._csr.nnz // 2)

    @property
    def density(self) -> float:
        return self.n_edges / (self._n * (self._n - 1) / 2) if self._n > 1 else 0.0

    def csr(self) -> sp.csr_matrix:
        """Symmetric int8 adjacency in CSR form (shared, do not mutate)."""
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray().astype(np.int8)

    def neighbors(self, i: int) -> np.ndarray:
        a = self._csr
        return a.indices[a.indptr[i] : a.indptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < nb.size and nb[k] == j)

    def has_edges(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """Vectorised ``y_ij`` lookup for arrays of dyads."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if i.size == 0:
            return np.zeros(0, dtype=np.int8)
        return np.asarray(self._csr[i, j]).ravel().astype(np.int8)

    def edge_array(self) -> np.ndarray:
        """All edges as an ``(m, 2)`` array with ``i < j``, lexicographically sorted."""
        upper = sp.triu(self._csr, k=1).tocsr()
        rows = np.repeat(np.arange(self._n), np.diff(upper.indptr))
        return np.column_stack([rows, upper.indices]).astype(np.int64)

    def toggled(self, i: int, j: int) -> "UndirectedGraph":
        """Copy with the dyad ``(i, j)`` flipped."""
        _check_pair(self._n, i, j)
        e = self.edge_array()
        lo, hi = min(i, j), max(i, j)
        if self.has_edge(lo, hi):
            keep = ~((e[:, 0] == lo) & (e[:, 1] == hi))
            e = e[keep]
        else:
            e = np.vstack([e, [[lo, hi]]])
        return UndirectedGraph(self._n, e, self.labels)

    def with_edge(self, i: int, j: int, present: bool) -> "UndirectedGraph":
        if self.has_edge(i, j) == bool(present):
            return self
        return self.toggled(i, j)

    def drop_node(self, node: int) -> "UndirectedGraph":
        """Remove one node and relabel the rest, preserving original ids."""
        if not 0 <= node < self._n:
            raise ValidationError(f"node {node} out of range for n={self._n}")
        keep = np.delete(np.arange(self._n), node)
        sub = self._csr[keep][:, keep]
        labels = keep if self.labels is None else self.labels[keep]
        return UndirectedGraph.from_csr(sub, labels=labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, UndirectedGraph):
            return NotImplemented
        return self._n == other._n and (self._csr != other._csr).nnz == 0

    def __hash__(self):
        return hash((self._n, self.n_edges))

    def __repr__(self) -> str:
        return f"UndirectedGraph(n={self._n}, edges={self.n_edges})"


def _check_pair(n: int, i: int, j: int) -> None:
    if i == j:
        raise ValidationError(f"dyad ({i}, {j}) is a self-pair")
    if not (0 <= i < n and 0 <= j < n):
        raise ValidationError(f"dyad ({i}, {j}) out of range for n={n}")


def load_edge_list(
    lines: Iterable[str], n: int | None = None, relabel: bool = False
) -> UndirectedGraph:
    """Build a graph from whitespace separated ``i j`` lines.

    Blank lines and ``#`` comments are skipped. With ``n`` given, the
    node count is fixed (isolated trailing nodes allowed); otherwise it
    is ``max id + 1``. With ``relabel=True`` arbitrary nonnegative ids
    are mapped onto ``0..m-1`` in ascending order and the original ids
    are kept in ``graph.labels``.
    """
    pairs: list[tuple[int, int]] = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 2:
            raise ParseError(lineno, line, f"expected 2 tokens, got {len(tokens)}")
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError(lineno, line, "non-integer token") from None
        if i < 0 or j < 0:
            raise ParseError(lineno, line, "negative node id")
        if i == j:
            raise ValidationError(f"line {lineno}: self-loop at node {i}")
        pairs.append((i, j))
    e = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    labels = None
    if relabel:
        labels, inverse = np.unique(e, return_inverse=True)
        e = inverse.reshape(-1, 2)
        if n is not None and n < labels.size:
            raise ValidationError(f"n={n} smaller than {labels.size} distinct ids")
    top = int(e.max()) + 1 if e.size else 0
    if n is None:
        n = max(top, 1)
    elif n < top:
        raise ValidationError(f"n={n} smaller than max node id + 1 = {top}")
    return UndirectedGraph(n, e, labels)


def read_edge_list(
    path: str | os.PathLike, n: int | None = None, relabel: bool = False
) -> UndirectedGraph:
    """Read a SNAP style edge list file (optionally gzip compressed)."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return load_edge_list(fh, n=n, relabel=relabel)


def write_edge_list(g: UndirectedGraph, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} edges={g.n_edges}\n")
        for i, j in g.edge_array():
            fh.write(f"{i} {j}\n")


def count_statistics(g: UndirectedGraph) -> StatVector:
    """Edge, two-star and triangle counts of ``g``."""
    d = g.degrees
    a = g.csr().astype(np.int64)
    # each triangle is seen 6 times in sum_ij A_ij (A^2)_ij
    tri = int((a @ a).multiply(a).sum()) // 6
    return StatVector(
        edges=g.n_edges,
        twostars=int((d * (d - 1) // 2).sum()),
        triangles=tri,
    )


def change_statistics(g: UndirectedGraph, pair: tuple[int, int]) -> np.ndarray:
    """Change in (edges, two-stars, triangles) when ``pair`` goes 0 -> 1.

    The result does not depend on the current value of ``y_ij``.
    """
    i, j = int(pair[0]), int(pair[1])
    _check_pair(g.n, i, j)
    y = int(g.has_edge(i, j))
    shared = np.intersect1d(g.neighbors(i), g.neighbors(j), assume_unique=True).size
    d = g.degrees
    return np.array([1, d[i] + d[j] - 2 * y, shared], dtype=np.int64)


def change_statistics_batch(
    g: UndirectedGraph, i: Sequence[int] | np.ndarray, j: Sequence[int] | np.ndarray
) -> np.ndarray:
    """Row-wise :func:`change_statistics` for many dyads at once.

    Returns an ``(m, 3)`` int64 array.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    if i.shape != j.shape:
        raise ValidationError("index arrays must have equal shape")
    if i.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if np.any(i == j):
        k = int(np.flatnonzero(i == j)[0])
        raise ValidationError(f"dyad ({i[k]}, {j[k]}) is a self-pair")
    if min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= g.n:
        raise ValidationError(f"dyad index out of range for n={g.n}")
    a = g.csr()
    y = g.has_edges(i, j).astype(np.int64)
    shared = np.asarray(a[i].multiply(a[j]).sum(axis=1), dtype=np.int64).ravel()
    d = g.degrees
    out = np.empty((i.size, 3), dtype=np.int64)
    out[:, 0] = 1
    out[:, 1] = d[i] + d[j] - 2 * y
    out[:, 2] = shared
    return out


def ego_net(g: UndirectedGraph, ego: int) -> tuple[UndirectedGraph, np.ndarray]:
    """Induced subgraph on the neighbours of ``ego``, ego excluded.

    Returns the relabelled graph and the array mapping new node ``k`` to
    its id in ``g``. An isolated ego yields the graph on zero nodes.
    """
    if not 0 <= ego < g.n:
        raise ValidationError(f"ego {ego} out of range for n={g.n}")
    nb = g.neighbors(ego).astype(np.int64)
    if nb.size == 0:
        return UndirectedGraph(0), nb
    sub = g.csr()[nb][:, nb]
    labels = nb if g.labels is None else g.labels[nb]
    return UndirectedGraph.from_csr(sub, labels=labels), nb


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> UndirectedGraph:
    """G(n, p) draw; handy for simulations and tests."""
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return UndirectedGraph(n, np.column_stack([iu[keep], ju[keep]]))
