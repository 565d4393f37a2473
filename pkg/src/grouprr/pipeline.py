"""End-to-end mechanisms: one call runs every round for every simulated user."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import baseline, estimators
from .graph import Graph
from .primitives import BudgetSplit, HashScheme, amplified_epsilon, omega, sigma
from .protocol import (
    GroupEdgeEstimator,
    bits_for,
    css_view,
    degree_sharing,
    group_rr_step,
    publisher_sigmas,
)
from .streams import TrialStreams

MECHANISMS = ("grouprr_clip", "grouprr_smooth", "arr_style", "rr_full")
STATS = ("triangles", "four_cycles")


class BudgetError(RuntimeError):
    pass


class BudgetLedger:
    """Per-user record of privacy budget spent by each noise-adding step."""

    def __init__(self, n: int, total: float):
        self.total = float(total)
        self.spent = np.zeros(n)
        self.entries: list[tuple[str, float]] = []

    def debit(self, role: str, eps: float) -> None:
        if eps <= 0:
            raise BudgetError(f"{role}: non-positive budget {eps}")
        self.spent += eps
        self.entries.append((role, float(eps)))

    def verify(self) -> None:
        if len(self.spent) and not np.allclose(self.spent, self.total, rtol=1e-12, atol=1e-12):
            raise BudgetError(f"spent {self.spent.max()} of declared {self.total}: {self.entries}")


@dataclass
class MechanismOutput:
    estimate: float
    raw_sum: float
    clipped_sum: float
    upload_bits: int
    download_bits: int
    clip_events: int
    clipped_users: int
    per_user: np.ndarray = field(repr=False)
    params: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)


def _finish(records, upload, download, params) -> MechanismOutput:
    return MechanismOutput(
        estimate=estimators.aggregate([r.noised for r in records]),
        raw_sum=float(sum(r.raw_unclipped for r in records)),
        clipped_sum=float(sum(r.raw_sum for r in records)),
        upload_bits=int(upload),
        download_bits=int(download),
        clip_events=int(sum(r.clipped_terms for r in records)),
        clipped_users=int(sum(r.clipped_terms > 0 for r in records)),
        per_user=np.array([r.noised for r in records], dtype=float),
        params=params,
        records=records,
    )


def run_grouprr(
    g: Graph,
    stat: str,
    split: BudgetSplit,
    s: int,
    mu_c: float,
    streams: TrialStreams,
    noise: str = "clip",
    beta: float = estimators.DEFAULT_BETA,
    budget: BudgetLedger | None = None,
) -> MechanismOutput:
    if stat not in STATS:
        raise ValueError(f"unknown statistic {stat!r}")
    if noise not in ("clip", "smooth"):
        raise ValueError(f"unknown noise strategy {noise!r}")
    if noise == "smooth" and stat != "triangles":
        raise ValueError("smooth sensitivity is implemented for triangles only")
    budget = budget if budget is not None else BudgetLedger(g.n, split.total)
    scheme = HashScheme.draw(g.n, s, streams.server("hash"))
    eps_prime = amplified_epsilon(split.eps1, s)

    if stat == "triangles":
        low = degree_sharing(g, split.eps0, streams)
        budget.debit("degree", split.eps0)
    else:
        # 4-cycles need the full degree for clipping as well as the low one for debiasing
        low = degree_sharing(g, split.eps0 / 2, streams)
        full = degree_sharing(g, split.eps0 / 2, streams, kind="full", role="degree-full")
        budget.debit("degree", split.eps0 / 2)
        budget.debit("degree-full", split.eps0 / 2)

    pub = group_rr_step(g, scheme, split.eps1, streams).publication
    budget.debit("group-rr", split.eps1)
    sig = publisher_sigmas(low, scheme, eps_prime)
    bits = bits_for(scheme.m)
    w = omega(scheme.m, scheme.s, eps_prime)

    records, download = [], 0
    for i in range(g.n):
        view = css_view(pub, i, mu_c, streams)
        download += view.retained_count() * bits
        est = GroupEdgeEstimator(scheme, view, sig, eps_prime)
        rng = streams.user("count-noise", i)
        if stat == "triangles" and noise == "smooth":
            _, le, _ = estimators.smooth_sensitivity_noise(g, i, est, split.eps2, rng)
        else:
            if stat == "triangles":
                le = estimators.triangle_terms(g, i, est)
                params = estimators.triangle_clipping_params(
                    low[i].d_tilde, split.eps0, beta, scheme.m, scheme.s, eps_prime, mu_c
                )
            else:
                le = estimators.four_cycle_terms(g, i, est)
                d_hat = estimators.clipped_degree(full[i].d_tilde, split.eps0 / 2, beta)
                var = w * (1.0 + max(0.0, float(sigma(d_hat, scheme.m, scheme.s, eps_prime)))) / mu_c
                params = estimators.four_cycle_clipping_params(full[i].d_tilde, split.eps0 / 2, beta, g.n, var)
            estimators.clip_and_noise(le, params, split.eps2, rng)
        records.append(le)
    budget.debit("count", split.eps2)
    budget.verify()
    upload = int(pub.sizes().sum()) * bits
    return _finish(records, upload, download, {"s": s, "mu_c": mu_c, "m": scheme.m, "p": scheme.p})


def run_arr(
    g: Graph,
    stat: str,
    split: BudgetSplit,
    mu: float,
    streams: TrialStreams,
    beta: float = estimators.DEFAULT_BETA,
    budget: BudgetLedger | None = None,
) -> MechanismOutput:
    if stat not in STATS:
        raise ValueError(f"unknown statistic {stat!r}")
    budget = budget if budget is not None else BudgetLedger(g.n, split.total)
    kind = "low" if stat == "triangles" else "full"
    deg = degree_sharing(g, split.eps0, streams, kind=kind)
    budget.debit("degree", split.eps0)
    view = baseline.arr_publish(g, split.eps1, mu, streams)
    budget.debit("rr", split.eps1)
    est = baseline.ArrEdgeEstimator(view)

    records, download = [], 0
    for i in range(g.n):
        rng = streams.user("count-noise", i)
        if stat == "triangles":
            le = baseline.two_step_terms(g, i, est)
            params = baseline.two_step_clipping_params(deg[i].d_tilde, split.eps0, beta, est)
            download += view.trick_download_bits(i)
        else:
            le = estimators.four_cycle_terms(g, i, est)
            params = estimators.four_cycle_clipping_params(deg[i].d_tilde, split.eps0, beta, g.n, est.variance_bound())
            download += view.download_bits()
        estimators.clip_and_noise(le, params, split.eps2, rng)
        records.append(le)
    budget.debit("count", split.eps2)
    budget.verify()
    return _finish(records, int(view.upload_bits().sum()), download, {"mu": mu})


def group_parameters(mu_star: float, stat: str = "triangles") -> tuple[int, float]:
    """Group size and server sampling rate for a target download reduction ``mu_star``.

    Triangles split the reduction as ``s = (1/mu*)^(1/3)`` and ``mu_c = mu*^(1/3)``.
    A 4-cycle term multiplies two edge estimates, so its variance grows like
    ``(s / mu_c)^2`` while the download shrinks like ``mu_c / s^2``; at a fixed
    download that favours ``mu_c = 1`` and ``s = (1/mu*)^(1/2)``.
    """
    if not 0 < mu_star <= 1:
        raise ValueError("mu_star must be in (0, 1]")
    if stat == "triangles":
        return max(1, round((1.0 / mu_star) ** (1.0 / 3.0))), min(1.0, mu_star ** (1.0 / 3.0))
    return max(1, round(math.sqrt(1.0 / mu_star))), 1.0


def arr_parameter(mu_star: float, stat: str = "triangles") -> float:
    """Baseline keep rate: pairwise downloads shrink by ``mu^2`` for triangles, ``mu`` otherwise."""
    if not 0 < mu_star <= 1:
        raise ValueError("mu_star must be in (0, 1]")
    return math.sqrt(mu_star) if stat == "triangles" else mu_star
