"""Ungrouped baselines: plain randomized response and an ARR-style variant.

Both publish the lower-triangle adjacency bits with randomized response. The
ARR-style variant then keeps every published 1 with probability ``mu`` at the
publisher, so downloads shrink by ``mu`` (and by ``mu**2`` for pairwise use
under the four-cycle trick). This is not a bit-exact replica of the original
asymmetric mechanism; outputs are labelled "ARR-style".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .estimators import ClippingParams, LocalEstimate, clipped_degree, clip_and_noise
from .graph import Graph, count_triangles
from .primitives import rr_flip, rr_keep_probability
from .streams import TrialStreams


@dataclass(frozen=True, eq=False)
class NoisyGraphView:
    """Published noisy bits: row ``i`` lists the ``j < i`` with ``a''_{i,j} = 1``."""

    n: int
    mu: float
    eps1: float
    indptr: np.ndarray
    indices: np.ndarray

    def row(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def row_sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=bool)
        rows = np.repeat(np.arange(self.n), self.row_sizes())
        out[rows, self.indices] = True
        return out

    @property
    def bits_per_index(self) -> int:
        return max(1, math.ceil(math.log2(self.n))) if self.n > 1 else 1

    def upload_bits(self) -> np.ndarray:
        return self.row_sizes() * self.bits_per_index

    def download_bits(self) -> int:
        """Bits one viewer needs to fetch every published row."""
        return int(self.indptr[-1]) * self.bits_per_index

    def trick_download_bits(self, i: int) -> int:
        """Bits user ``i`` fetches under the four-cycle trick: rows ``k`` it marked noisy-adjacent."""
        return int(self.row_sizes()[self.row(i)].sum()) * self.bits_per_index


def arr_publish(g: Graph, eps1: float, mu: float, streams: TrialStreams) -> NoisyGraphView:
    """Randomized response on every bit ``(i, j)``, ``j < i``, then keep each 1 with probability ``mu``."""
    if not 0 < mu <= 1:
        raise ValueError("mu must be in (0, 1]")
    rows = []
    for i in range(g.n):
        rng = streams.user("rr", i)
        bits = np.zeros(i, dtype=bool)
        bits[g.lower_neighbors(i)] = True
        ones = np.flatnonzero(rr_flip(bits, eps1, rng)) if i else np.zeros(0, dtype=np.int64)
        if mu < 1:
            ones = ones[rng.random(len(ones)) < mu]
        rows.append(ones)
    sizes = np.array([len(r) for r in rows], dtype=np.int64)
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(sizes, out=indptr[1:])
    indices = np.concatenate(rows).astype(np.int64) if g.n and indptr[-1] else np.zeros(0, dtype=np.int64)
    return NoisyGraphView(g.n, float(mu), float(eps1), indptr, indices)


def rr_publish(g: Graph, eps1: float, streams: TrialStreams) -> NoisyGraphView:
    return arr_publish(g, eps1, 1.0, streams)


class ArrEdgeEstimator:
    """``(a''/mu - q0) / (q1 - q0)``: unbiased for the true bit."""

    def __init__(self, view: NoisyGraphView):
        self.view = view
        self.q1 = rr_keep_probability(view.eps1)
        self.q0 = 1.0 - self.q1
        self._dense = view.dense

    def estimate(self, pubs, keys) -> np.ndarray:
        bit = self._dense[np.asarray(pubs, dtype=np.int64), np.asarray(keys, dtype=np.int64)]
        return (bit / self.view.mu - self.q0) / (self.q1 - self.q0)

    def term_magnitude_bound(self, pubs=None) -> float:
        return (1.0 / self.view.mu - self.q0) / (self.q1 - self.q0)

    def variance_bound(self) -> float:
        return self.q1 / (self.view.mu * (self.q1 - self.q0) ** 2)


def two_step_terms(g: Graph, i: int, estimator: ArrEdgeEstimator) -> LocalEstimate:
    """Triangle pair terms with the four-cycle trick.

    The pair ``j < k`` contributes ``est(k, j) * a''_{i,k} / (mu q1)``; the
    second factor is the user's own published bit, which is independent of
    ``est(k, j)`` and has mean 1 for a true neighbor.
    """
    low = g.lower_neighbors(i)
    if len(low) < 2:
        return LocalEstimate(i, low, np.zeros((len(low), len(low))), 0.0)
    mu, q1 = estimator.view.mu, estimator.q1
    mine = estimator.view.dense[i, low] / (mu * q1)
    vals = estimator.estimate(low[None, :], low[:, None]) * mine[None, :]
    up = np.triu(vals, k=1)
    terms = up + up.T
    return LocalEstimate(i, low, terms, float(up.sum()))


def two_step_term_bound(estimator: ArrEdgeEstimator) -> float:
    """Largest ``|term|`` a single triangle pair can take."""
    mu, q0, q1 = estimator.view.mu, estimator.q0, estimator.q1
    return max(1.0 / mu - q0, q0) / ((q1 - q0) * mu * q1)


def two_step_clipping_params(d_tilde: float, eps0: float, beta: float, estimator: ArrEdgeEstimator) -> ClippingParams:
    """An edge touches at most ``d_hat`` pairs, each worth at most one maximal term."""
    d_hat = clipped_degree(d_tilde, eps0, beta)
    return ClippingParams(beta, d_hat, d_hat * two_step_term_bound(estimator), 0.0, 0.0)


def two_step_triangle(
    g: Graph,
    view: NoisyGraphView,
    d_tilde,
    eps0: float,
    eps2: float,
    streams: TrialStreams,
    beta: float = 1e-3,
) -> tuple[float, list[LocalEstimate]]:
    """Published triangle total of the two-step baseline and the per-user records."""
    est = ArrEdgeEstimator(view)
    records = []
    for i in range(g.n):
        le = two_step_terms(g, i, est)
        params = two_step_clipping_params(float(d_tilde[i]), eps0, beta, est)
        clip_and_noise(le, params, eps2, streams.user("count-noise", i))
        records.append(le)
    return float(sum(r.noised for r in records)), records


def naive_noisy_triangles(view: NoisyGraphView) -> int:
    """Triangles of the published noisy graph, uncorrected (diagnostic only)."""
    rows = np.repeat(np.arange(view.n), view.row_sizes())
    return count_triangles(Graph.from_edges(view.n, np.stack([rows, view.indices], axis=1)))
