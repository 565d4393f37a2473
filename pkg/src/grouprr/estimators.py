"""Per-user subgraph estimates and their final privacy noise.

All estimators work on *pair terms*: a symmetric matrix ``P`` over a user's
neighbors whose entry ``P[a, b]`` is the contribution of the neighbor pair
``(a, b)``. The user's raw estimate is the sum over ``a < b`` and the
contribution of a single neighbor ``a`` (what flipping that edge can change)
is the row sum ``P[a].sum()``.

Any object exposing ``estimate(pubs, keys)`` (an unbiased estimate of the
edge ``{pub, key}`` with ``key < pub``) and ``term_magnitude_bound(pubs)``
can serve as the edge estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .primitives import laplace_sample, omega, sigma, z_gamma_sample

DEFAULT_BETA = 1e-3
GAMMA = 4


@dataclass
class LocalEstimate:
    user: int
    neighbors: np.ndarray
    terms: np.ndarray
    raw_sum: float
    noised: float | None = None
    clipped_terms: int = 0
    raw_unclipped: float | None = None
    bound: float | None = None

    @property
    def partials(self) -> np.ndarray:
        """Per-neighbor contribution, aligned with ``neighbors``."""
        return self.terms.sum(axis=1)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        a, b = np.triu_indices(len(self.neighbors), k=1)
        return list(zip(self.neighbors[a].tolist(), self.neighbors[b].tolist()))


def _symmetric(upper: np.ndarray) -> np.ndarray:
    up = np.triu(upper, k=1)
    return up + up.T


# ---------------------------------------------------------------- triangles


def triangle_terms(g: Graph, i: int, estimator) -> LocalEstimate:
    """Pairs ``j < k < i`` of lower neighbors, each scored by the estimate of ``{j, k}``."""
    low = g.lower_neighbors(i)
    if len(low) < 2:
        return LocalEstimate(i, low, np.zeros((len(low), len(low))), 0.0)
    # entry [a, b] estimates {low[a], low[b]} with low[b] as publisher when a < b
    vals = estimator.estimate(low[None, :], low[:, None])
    terms = _symmetric(vals)
    return LocalEstimate(i, low, terms, float(np.triu(terms, k=1).sum()))


def triangle_raw_sum(g: Graph, i: int, estimator) -> tuple[float, np.ndarray]:
    est = triangle_terms(g, i, estimator)
    return est.raw_sum, est.partials


# ---------------------------------------------------------------- 4-cycles


def four_cycle_terms(g: Graph, i: int, estimator) -> LocalEstimate:
    """4-cycles through user ``i``, each anchored at the node opposite its minimum.

    For neighbors ``u, w`` of ``i`` the pair term is
    ``sum_{j < min(i, u, w)} est(u, j) * est(w, j)``. A 4-cycle has a unique
    minimum node, so it is counted exactly once over all users, and the two
    factors always come from different publishers.
    """
    nb = g.neighbors(i)
    if len(nb) < 2:
        return LocalEstimate(i, nb, np.zeros((len(nb), len(nb))), 0.0)
    cut = np.minimum(nb, i)
    cols = np.arange(int(cut.max()), dtype=np.int64)
    valid = cols[None, :] < cut[:, None]
    pubs = np.broadcast_to(nb[:, None], valid.shape)
    keys = np.broadcast_to(cols[None, :], valid.shape)
    e = np.where(valid, estimator.estimate(pubs, keys), 0.0)
    # zero columns beyond a row's cut make the inner product stop at min(cut_a, cut_b)
    terms = e @ e.T
    np.fill_diagonal(terms, 0.0)
    return LocalEstimate(i, nb, terms, float(np.triu(terms, k=1).sum()))


# ---------------------------------------------------------------- clipping


@dataclass(frozen=True)
class ClippingParams:
    beta: float
    d_hat: float
    b: float
    var_bound: float
    cov_bound: float

    def __post_init__(self):
        if not (self.b >= self.d_hat >= 0):
            raise ValueError(f"need b >= d_hat >= 0, got {self}")


def clipped_degree(d_tilde: float, eps0: float, beta: float) -> float:
    """Noisy degree shifted up so it exceeds the true one with probability ``1 - beta/2``."""
    return max(0.0, d_tilde + math.log(2.0 / beta) / eps0)


def triangle_clipping_params(
    d_tilde: float, eps0: float, beta: float, m: int, s: int, eps_prime: float, mu_c: float
) -> ClippingParams:
    d_hat = clipped_degree(d_tilde, eps0, beta)
    sig = max(0.0, float(sigma(d_hat, m, s, eps_prime)))
    var = max(0.0, omega(m, s, eps_prime) * (1.0 + sig) / mu_c)
    cov = max(0.0, 2.0 * (s - 1) / (m * s - 1) * var)
    b = d_hat + math.sqrt((2.0 / beta) * (d_hat * var + d_hat**2 * cov))
    return ClippingParams(beta, d_hat, b, var, cov)


def four_cycle_clipping_params(d_tilde: float, eps0: float, beta: float, n: int, var: float) -> ClippingParams:
    """Contribution bound for one neighbor of a 4-cycle estimate.

    A neighbor's contribution sums up to ``d_hat`` pair terms, each an inner
    product of up to ``n`` products of two edge estimates with variance at
    most ``var``; the same bound-plus-deviation shape as for triangles.
    """
    d_hat = clipped_degree(d_tilde, eps0, beta)
    term_var = (var + 1.0) ** 2
    b = d_hat * n + math.sqrt((2.0 / beta) * (d_hat * n * term_var + d_hat**2 * n * var))
    return ClippingParams(beta, d_hat, b, var, 0.0)


def clip_pair_terms(terms: np.ndarray, bound: float) -> tuple[np.ndarray, int]:
    """Zero pair terms until every neighbor's contribution is within ``[-bound, bound]``.

    The neighbor with the largest violation gives up its largest term of the
    offending sign. A positive contribution always contains a positive term,
    so the loop ends with every bound met.
    """
    p = np.array(terms, dtype=float, copy=True)
    partial = p.sum(axis=1)
    zeroed = 0
    while len(partial):
        excess = np.abs(partial) - bound
        v = int(np.argmax(excess))
        if excess[v] <= 0:
            break
        u = int(np.argmax(p[v] * np.sign(partial[v])))
        p[v, u] = p[u, v] = 0.0
        partial[v] = p[v].sum()
        partial[u] = p[u].sum()
        zeroed += 1
    return p, zeroed


def clip_and_noise(est: LocalEstimate, params: ClippingParams, eps2: float, rng: np.random.Generator) -> float:
    if est.raw_unclipped is None:
        est.raw_unclipped = est.raw_sum
    est.bound = params.b
    terms, zeroed = clip_pair_terms(est.terms, params.b)
    est.terms = terms
    est.clipped_terms = zeroed
    est.raw_sum = float(np.triu(terms, k=1).sum())
    # b = 0 forces every term to zero, so the output is constant and needs no noise
    noise = float(laplace_sample(params.b / eps2, rng)) if params.b > 0 else 0.0
    est.noised = est.raw_sum + noise
    return est.noised


# ---------------------------------------------------------------- smooth sensitivity


@dataclass(frozen=True)
class SmoothSensitivity:
    ub_ls: float
    step: float
    beta_smooth: float
    s_star: float
    gamma: int = GAMMA


def smooth_beta(eps2: float, gamma: int = GAMMA) -> float:
    return eps2 / (2.0 * (gamma - 1))


def s_star_closed_form(ub_ls: float, step: float, beta: float) -> float:
    """``max_{k >= 0} exp(-beta k) (ub_ls + k step)`` over integers ``k``."""
    if step <= 0:
        return ub_ls
    k_star = max(0.0, 1.0 / beta - ub_ls / step)
    ks = {0, math.floor(k_star), math.ceil(k_star)}
    return max(math.exp(-beta * k) * (ub_ls + k * step) for k in ks)


def s_star_scan(ub_ls: float, step: float, beta: float, k_max: int) -> float:
    k = np.arange(k_max + 1, dtype=float)
    return float(np.max(np.exp(-beta * k) * (ub_ls + k * step)))


def triangle_sensitivity_sums(g: Graph, i: int, estimator) -> np.ndarray:
    """For each ``j < i``: the change in the triangle sum if edge ``{i, j}`` flips."""
    low = g.lower_neighbors(i)
    if i == 0 or len(low) == 0:
        return np.zeros(i)
    j = np.arange(i, dtype=np.int64)[:, None]
    k = low[None, :]
    vals = estimator.estimate(np.maximum(j, k), np.minimum(j, k))
    vals[j == k] = 0.0
    return vals.sum(axis=1)


def local_sensitivity_bound(g: Graph, i: int, estimator) -> float:
    sums = triangle_sensitivity_sums(g, i, estimator)
    return float(np.abs(sums).max()) if len(sums) else 0.0


def smooth_sensitivity(g: Graph, i: int, estimator, eps2: float) -> SmoothSensitivity:
    ub = local_sensitivity_bound(g, i, estimator)
    step = estimator.term_magnitude_bound(np.arange(i)) if i else 0.0
    beta = smooth_beta(eps2)
    return SmoothSensitivity(ub, step, beta, s_star_closed_form(ub, step, beta))


def smooth_sensitivity_noise(
    g: Graph, i: int, estimator, eps2: float, rng: np.random.Generator
) -> tuple[float, LocalEstimate, SmoothSensitivity]:
    est = triangle_terms(g, i, estimator)
    ss = smooth_sensitivity(g, i, estimator, eps2)
    scale = 2.0 * (GAMMA - 1) / eps2
    est.raw_unclipped = est.raw_sum
    est.noised = est.raw_sum + scale * ss.s_star * z_gamma_sample(rng, GAMMA)
    return est.noised, est, ss


def aggregate(values) -> float:
    return float(np.sum(np.asarray(values, dtype=float)))
