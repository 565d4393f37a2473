"""Undirected simple graphs, loaders, generators and exact subgraph counts."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class EdgeListError(ValueError):
    """Raised when an edge-list file cannot be parsed."""


def _normalize_edges(n: int, edges: np.ndarray) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValueError("edge endpoint outside [0, n)")
    edges = edges[edges[:, 0] != edges[:, 1]]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    codes = np.unique(lo * n + hi) if n else np.zeros(0, dtype=np.int64)
    return np.stack([codes // max(n, 1), codes % max(n, 1)], axis=1)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    ``edges`` holds each edge once as ``(u, v)`` with ``u < v``, sorted.
    Adjacency is stored in CSR form; every neighbor list is sorted, so the
    neighbors smaller than a node form a prefix of its list.
    """

    n: int
    edges: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    dropped_self_loops: int = 0

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        n = int(n)
        e = _normalize_edges(n, np.asarray(edges, dtype=np.int64))
        both = np.concatenate([e, e[:, ::-1]]) if len(e) else e
        order = np.lexsort((both[:, 1], both[:, 0])) if len(both) else np.zeros(0, dtype=np.int64)
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=n) if len(both) else np.zeros(n, dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = both[:, 1].copy() if len(both) else np.zeros(0, dtype=np.int64)
        for arr in (e, indptr, indices):
            arr.setflags(write=False)
        return cls(n, e, indptr, indices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def lower_neighbors(self, u: int) -> np.ndarray:
        """Neighbors with a smaller index than ``u``."""
        nb = self.neighbors(u)
        return nb[: np.searchsorted(nb, u)]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        return bool(k < len(nb) and nb[k] == v)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def low_degrees(self) -> np.ndarray:
        """Number of neighbors with smaller index, for every node."""
        if not self.num_edges:
            return np.zeros(self.n, dtype=np.int64)
        return np.bincount(self.edges[:, 1], minlength=self.n)

    @cached_property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    def adjacency_matrix(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.int64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def edge_codes(self) -> np.ndarray:
        """Sorted codes ``u * n + v`` over both orientations of every edge."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        return rows * self.n + self.indices

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.num_edges})"


def load_edge_list(path: str | os.PathLike, zero_or_one_based: str = "auto") -> Graph:
    """Read a whitespace-separated edge list (SNAP format).

    Lines starting with ``#`` or ``%`` are ignored. Node ids are compacted to
    ``0..n-1`` in increasing order of their original value, so the
    ``zero_or_one_based`` flag only affects the logged diagnostics.
    Duplicate and reversed lines collapse to one edge; self-loops are dropped.
    """
    if zero_or_one_based not in ("auto", "zero", "one"):
        raise ValueError("zero_or_one_based must be 'auto', 'zero' or 'one'")
    pairs = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped[0] in "#%":
                continue
            tokens = stripped.split()
            if len(tokens) < 2:
                raise EdgeListError(f"{path}:{lineno}: expected two node ids, got {stripped!r}")
            try:
                pairs.append((int(tokens[0]), int(tokens[1])))
            except ValueError:
                raise EdgeListError(f"{path}:{lineno}: non-integer node id in {stripped!r}") from None
    if not pairs:
        return Graph.from_edges(0, np.zeros((0, 2), dtype=np.int64))
    raw = np.asarray(pairs, dtype=np.int64)
    ids, compact = np.unique(raw, return_inverse=True)
    compact = compact.reshape(-1, 2)
    self_loops = int(np.count_nonzero(compact[:, 0] == compact[:, 1]))
    if self_loops:
        logger.warning("dropped %d self-loop(s) while loading %s", self_loops, path)
    if zero_or_one_based == "one" and ids[0] < 1:
        logger.warning("file %s declared one-based but contains id %d", path, ids[0])
    g = Graph.from_edges(len(ids), compact)
    return Graph(g.n, g.edges, g.indptr, g.indices, self_loops)


def induced_subgraph(g: Graph, nodes) -> Graph:
    """Subgraph induced by ``nodes``; the k-th smallest kept node becomes k."""
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    e = remap[g.edges] if g.num_edges else np.zeros((0, 2), dtype=np.int64)
    e = e[(e >= 0).all(axis=1)]
    return Graph.from_edges(len(nodes), e)


def induced_random_subgraph(g: Graph, target_n: int, rng: np.random.Generator) -> Graph:
    if not 0 < target_n <= g.n:
        raise ValueError(f"target_n must be in (0, {g.n}], got {target_n}")
    nodes = rng.choice(g.n, size=target_n, replace=False)
    return induced_subgraph(g, nodes)


def power_law_degrees(n: int, exponent: float, rng: np.random.Generator, min_degree: int = 1) -> np.ndarray:
    support = np.arange(min_degree, n, dtype=np.float64)
    weights = support ** -float(exponent)
    return rng.choice(support.astype(np.int64), size=n, p=weights / weights.sum())


def generate_power_law(
    n: int,
    exponent: float = 2.0,
    rng: np.random.Generator | None = None,
    min_degree: int = 1,
    max_retries: int = 10,
) -> Graph:
    """Configuration-model graph with power-law degree distribution.

    Degrees are drawn with ``P(d) ~ d**-exponent`` on ``[min_degree, n-1]``,
    stubs are paired uniformly at random, and self-loops and multi-edges are
    discarded, so realized degrees can fall slightly below the drawn ones.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = rng if rng is not None else np.random.default_rng()
    min_degree = max(1, min(int(min_degree), n - 1))
    for _ in range(max_retries):
        degrees = power_law_degrees(n, exponent, rng, min_degree)
        if degrees.sum() % 2 == 0:
            break
    else:
        degrees[int(np.argmax(degrees))] -= 1
    stubs = np.repeat(np.arange(n, dtype=np.int64), degrees)
    rng.shuffle(stubs)
    if len(stubs) % 2:
        stubs = stubs[:-1]
    return Graph.from_edges(n, stubs.reshape(-1, 2))


def generate_erdos_renyi(n: int, p: float, rng: np.random.Generator | None = None) -> Graph:
    rng = rng if rng is not None else np.random.default_rng()
    iu = np.triu_indices(n, k=1)
    keep = rng.random(len(iu[0])) < p
    return Graph.from_edges(n, np.stack([iu[0][keep], iu[1][keep]], axis=1))


def generate_bipartite(n_left: int, n_right: int, p: float, rng: np.random.Generator | None = None) -> Graph:
    """Random bipartite graph; left nodes are ``0..n_left-1``."""
    rng = rng if rng is not None else np.random.default_rng()
    mask = rng.random((n_left, n_right)) < p
    u, v = np.nonzero(mask)
    return Graph.from_edges(n_left + n_right, np.stack([u, v + n_left], axis=1))


# ---------------------------------------------------------------- counting


@dataclass(frozen=True)
class GroundTruth:
    triangles: int
    four_cycles: int
    two_stars: int
    three_stars: int
    walks4: int


def count_triangles(g: Graph) -> int:
    """Exact number of triangles, each counted once."""
    if g.num_edges < 3:
        return 0
    a = g.adjacency_matrix()
    low = sp.tril(a, k=-1, format="csr")
    # (low @ low)[i, k] counts j with i > j > k; masking with low closes k-i.
    return int((low @ low).multiply(low).sum())


def count_four_cycles(g: Graph) -> int:
    """Exact number of 4-cycles, each counted once.

    Every 4-cycle has two diagonals, and for a diagonal ``{u, v}`` with
    ``c`` common neighbors there are ``C(c, 2)`` cycles through it.
    """
    if g.num_edges < 4:
        return 0
    a = g.adjacency_matrix()
    codeg = sp.triu(a @ a, k=1).tocoo().data.astype(np.int64)
    total = int((codeg * (codeg - 1) // 2).sum())
    return total // 2


def count_stars_and_walks(g: Graph) -> GroundTruth:
    d = g.degrees.astype(object)
    s2 = sum(int(x) * (int(x) - 1) // 2 for x in d)
    s3 = sum(int(x) * (int(x) - 1) * (int(x) - 2) // 6 for x in d)
    if g.num_edges:
        two_walks = g.adjacency_matrix() @ g.degrees.astype(np.int64)
        walks4 = sum(int(x) * int(x) for x in two_walks)
    else:
        walks4 = 0
    return GroundTruth(
        triangles=count_triangles(g),
        four_cycles=count_four_cycles(g),
        two_stars=s2,
        three_stars=s3,
        walks4=walks4,
    )
