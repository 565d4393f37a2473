"""Simulated message exchanges of the grouped randomized-response protocol.

Three rounds are simulated in-process:

1. every user reports a Laplace-noised low degree;
2. every user hashes the key space into groups, keeps one random
   representative per group and publishes randomized-response bits for them;
3. the server thins the published one-bins independently for each viewer
   (central server sampling) before handing them out.

Communication is accounted in bits, ``ceil(log2 m)`` per published index.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph
from .primitives import (
    HashScheme,
    amplified_epsilon,
    laplace_sample,
    omega,
    rr_flip,
    sigma,
)
from .streams import TrialStreams


@dataclass(frozen=True)
class DegreeReport:
    user: int
    d_tilde: float


@dataclass(frozen=True, eq=False)
class ObfuscatedList:
    """Sorted group indices whose published bit is 1."""

    user: int
    one_bins: np.ndarray
    m: int

    def __post_init__(self):
        bins = np.asarray(self.one_bins, dtype=np.int64)
        if bins.size and (bins[0] < 0 or bins[-1] >= self.m or (np.diff(bins) <= 0).any()):
            raise ValueError("one_bins must be strictly increasing indices in [0, m)")
        bins.setflags(write=False)
        object.__setattr__(self, "one_bins", bins)

    def __len__(self) -> int:
        return len(self.one_bins)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ObfuscatedList)
            and self.user == other.user
            and self.m == other.m
            and np.array_equal(self.one_bins, other.one_bins)
        )

    def to_bytes(self) -> bytes:
        """Little-endian: uint32 m, uint32 count, then the sorted uint32 indices."""
        head = struct.pack("<II", self.m, len(self.one_bins))
        return head + self.one_bins.astype("<u4").tobytes()

    @classmethod
    def from_bytes(cls, user: int, data: bytes) -> "ObfuscatedList":
        if len(data) < 8:
            raise ValueError("truncated list header")
        m, count = struct.unpack_from("<II", data)
        if len(data) != 8 + 4 * count:
            raise ValueError(f"expected {count} indices, got {(len(data) - 8) / 4}")
        bins = np.frombuffer(data, dtype="<u4", offset=8, count=count).astype(np.int64)
        return cls(user, bins, m)


@dataclass(frozen=True, eq=False)
class Publication:
    """All users' published lists, stored back to back (CSR layout)."""

    m: int
    indptr: np.ndarray
    bins: np.ndarray

    @classmethod
    def from_lists(cls, lists: list[ObfuscatedList]) -> "Publication":
        if not lists:
            raise ValueError("need at least one list")
        m = lists[0].m
        if any(lst.m != m for lst in lists):
            raise ValueError("lists disagree on m")
        sizes = np.array([len(lst) for lst in lists], dtype=np.int64)
        indptr = np.zeros(len(lists) + 1, dtype=np.int64)
        np.cumsum(sizes, out=indptr[1:])
        bins = np.concatenate([lst.one_bins for lst in lists]) if indptr[-1] else np.zeros(0, dtype=np.int64)
        return cls(m, indptr, bins)

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def total_ones(self) -> int:
        return int(self.indptr[-1])

    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def publisher_of_entries(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), self.sizes())

    def list_of(self, user: int) -> ObfuscatedList:
        return ObfuscatedList(user, self.bins[self.indptr[user]:self.indptr[user + 1]], self.m)

    def lists(self) -> list[ObfuscatedList]:
        return [self.list_of(u) for u in range(self.n)]


@dataclass(eq=False)
class CssView:
    """What one viewer receives after central server sampling.

    ``mask`` flags, entry by entry, which published one-bins survived the
    viewer's thinning; it is aligned with ``publication.bins``.
    """

    viewer: int
    publication: Publication
    mask: np.ndarray
    mu_c: float

    @property
    def lists(self) -> list[ObfuscatedList]:
        return [self.retained(j) for j in range(self.publication.n)]

    def retained(self, publisher: int) -> ObfuscatedList:
        lo, hi = self.publication.indptr[publisher], self.publication.indptr[publisher + 1]
        return ObfuscatedList(publisher, self.publication.bins[lo:hi][self.mask[lo:hi]], self.publication.m)

    def retained_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def dense(self) -> np.ndarray:
        """Boolean ``(n, m)`` matrix of retained one-bins."""
        pub = self.publication
        out = np.zeros((pub.n, pub.m), dtype=bool)
        out[pub.publisher_of_entries()[self.mask], pub.bins[self.mask]] = True
        return out


@dataclass
class CommLedger:
    upload_bits: np.ndarray
    download_bits: np.ndarray
    bits_per_index: int

    @property
    def total_upload(self) -> int:
        return int(self.upload_bits.sum())

    @property
    def total_download(self) -> int:
        return int(self.download_bits.sum())


@dataclass
class GroupRRRun:
    """Round-two output, with representatives kept only for instrumentation."""

    publication: Publication
    representatives: np.ndarray | None = field(default=None, repr=False)


def bits_for(m: int) -> int:
    return max(1, math.ceil(math.log2(m))) if m > 1 else 1


# ---------------------------------------------------------------- round 1


def degree_sharing(
    g: Graph,
    eps0: float,
    streams: TrialStreams,
    kind: str = "low",
    role: str = "degree",
) -> list[DegreeReport]:
    """Each user publishes its degree plus ``Laplace(1/eps0)`` noise.

    ``kind="low"`` reports the number of lower-index neighbors (the quantity
    the debiasing needs); ``kind="full"`` reports the ordinary degree.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    if kind == "low":
        degs = g.low_degrees
    elif kind == "full":
        degs = g.degrees
    else:
        raise ValueError(f"unknown degree kind {kind!r}")
    return [
        DegreeReport(i, float(degs[i]) + float(laplace_sample(1.0 / eps0, streams.user(role, i))))
        for i in range(g.n)
    ]


# ---------------------------------------------------------------- round 2


def publish_one(g: Graph, scheme: HashScheme, i: int, eps_prime: float, rng: np.random.Generator):
    """One user's round-two message: published one-bins and the chosen representatives."""
    m, s = scheme.m, scheme.s
    slots = rng.integers(0, s, size=m)
    reps = scheme.keys_of_slots(i, np.arange(m, dtype=np.int64), slots)
    low = g.lower_neighbors(i)
    pos = np.searchsorted(low, reps)
    hit = (reps >= 0) & (reps < i) & (pos < len(low))
    hit[hit] = low[pos[hit]] == reps[hit]
    published = rr_flip(hit, eps_prime, rng)
    return np.flatnonzero(published), reps


def group_rr_step(
    g: Graph,
    scheme: HashScheme,
    eps1: float,
    streams: TrialStreams,
    record_representatives: bool = False,
) -> GroupRRRun:
    """Every user publishes one randomized bit per hash group.

    The bit of group ``t`` is the adjacency bit of a uniformly chosen member
    ``c_t``, forced to 0 when ``c_t`` is padding or ``c_t > i``, and then
    flipped with the amplified budget.
    """
    if scheme.n != g.n:
        raise ValueError(f"hash scheme built for n={scheme.n}, graph has n={g.n}")
    if eps1 <= 0:
        raise ValueError("eps1 must be positive")
    eps_prime = amplified_epsilon(eps1, scheme.s)
    lists, reps = [], []
    for i in range(g.n):
        ones, r = publish_one(g, scheme, i, eps_prime, streams.user("group-rr", i))
        lists.append(ObfuscatedList(i, ones, scheme.m))
        if record_representatives:
            reps.append(r)
    if not lists:
        return GroupRRRun(Publication(scheme.m, np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)))
    return GroupRRRun(Publication.from_lists(lists), np.stack(reps) if record_representatives else None)


# ---------------------------------------------------------------- round 3


def css_view(publication: Publication, viewer: int, mu_c: float, streams: TrialStreams) -> CssView:
    """Thin every published one-bin with probability ``mu_c`` for ``viewer``."""
    if not 0 < mu_c <= 1:
        raise ValueError("mu_c must be in (0, 1]")
    if mu_c == 1:
        mask = np.ones(publication.total_ones, dtype=bool)
    else:
        mask = streams.user("css", viewer).random(publication.total_ones) < mu_c
    return CssView(viewer, publication, mask, mu_c)


def central_server_sampling(
    publication: Publication, mu_c: float, streams: TrialStreams, viewers=None
) -> list[CssView]:
    viewers = range(publication.n) if viewers is None else viewers
    return [css_view(publication, i, mu_c, streams) for i in viewers]


# ---------------------------------------------------------------- estimates


class GroupEdgeEstimator:
    """Debiased edge estimates as seen by one viewer.

    ``estimate(pub, key)`` returns ``(omega/mu_c) * [h_pub(key) retained] -
    sigma_tilde[pub]``, which is unbiased for the adjacency bit when
    ``key < pub``. The publisher's own noisy degree sets the offset.
    """

    def __init__(self, scheme: HashScheme, view: CssView, sigma_tilde: np.ndarray, eps_prime: float):
        self.scheme = scheme
        self.view = view
        self.sigma_tilde = np.asarray(sigma_tilde, dtype=float)
        self.omega_eff = omega(scheme.m, scheme.s, eps_prime) / view.mu_c
        self._dense = view.dense()

    def estimate(self, pubs, keys) -> np.ndarray:
        pubs = np.asarray(pubs, dtype=np.int64)
        keys = np.asarray(keys, dtype=np.int64)
        bins = self.scheme.bins(pubs, keys)
        return self.omega_eff * self._dense[pubs, bins] - self.sigma_tilde[pubs]

    def term_magnitude_bound(self, pubs=None) -> float:
        """Largest possible ``|estimate|`` over the given publishers."""
        sig = self.sigma_tilde if pubs is None else self.sigma_tilde[np.asarray(pubs, dtype=np.int64)]
        if sig.size == 0:
            return self.omega_eff
        return float(max(self.omega_eff, np.abs(sig).max(), np.abs(self.omega_eff - sig).max()))


def publisher_sigmas(reports: list[DegreeReport], scheme: HashScheme, eps_prime: float) -> np.ndarray:
    d = np.array([r.d_tilde for r in reports], dtype=float)
    return sigma(d, scheme.m, scheme.s, eps_prime)


def edge_estimate(view: CssView, scheme: HashScheme, publisher: int, key: int, params, mu_c: float | None = None) -> float:
    """Single debiased edge estimate; ``params`` is the publisher's ``DebiasParams``."""
    if key >= publisher:
        raise ValueError(f"key {key} must be smaller than publisher {publisher}")
    mu_c = view.mu_c if mu_c is None else mu_c
    t = int(scheme.bins(publisher, key))
    lo, hi = view.publication.indptr[publisher], view.publication.indptr[publisher + 1]
    bins = view.publication.bins[lo:hi][view.mask[lo:hi]]
    k = np.searchsorted(bins, t)
    present = bool(k < len(bins) and bins[k] == t)
    return float(params.estimate(present, mu_c))


# ---------------------------------------------------------------- accounting


def ledger(publication: Publication, views: list[CssView] | None = None) -> CommLedger:
    bits = bits_for(publication.m)
    upload = publication.sizes() * bits
    if views is None:
        # without sampling every viewer downloads everything
        download = np.full(publication.n, publication.total_ones * bits, dtype=np.int64)
    else:
        download = np.zeros(publication.n, dtype=np.int64)
        for v in views:
            download[v.viewer] = v.retained_count() * bits
    return CommLedger(upload.astype(np.int64), download, bits)


def expected_upload(d: float, m: int, s: int, eps_prime: float) -> float:
    """Expected number of published ones for a user of low degree ``d``.

    Each of the ``m`` groups yields a true edge with probability ``d/(m s)``
    summed over groups, i.e. ``d/s`` edges in expectation.
    """
    keep = 1.0 / (1.0 + math.exp(-eps_prime))
    return m * (1.0 - keep) + (d / s) * (2.0 * keep - 1.0)
