"""Randomness and mechanism primitives.

Prime search, the linear-congruence hash family used to form groups,
randomized response, Laplace and heavy-tailed ``Z_4`` samplers, and the
calculators for the amplified budget and the debiasing constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DUMMY = -1  # padding slot in a group; never adjacent to anyone

# Deterministic Miller-Rabin witnesses, exact for every n < 2**64.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _MR_WITNESSES:
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def smallest_prime_above(n: int) -> int:
    """Smallest prime strictly greater than ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    c = n + 1
    while not is_prime(c):
        c += 1
    return c


# ---------------------------------------------------------------- budgets


@dataclass(frozen=True)
class BudgetSplit:
    eps0: float
    eps1: float
    eps2: float

    def __post_init__(self):
        if min(self.eps0, self.eps1, self.eps2) <= 0:
            raise ValueError(f"all budget parts must be positive: {self}")

    @property
    def total(self) -> float:
        return self.eps0 + self.eps1 + self.eps2

    @classmethod
    def default(cls, epsilon: float) -> "BudgetSplit":
        # small degree-sharing share, equal publication and counting shares
        return cls(0.1 * epsilon, 0.45 * epsilon, 0.45 * epsilon)

    @classmethod
    def from_fractions(cls, epsilon: float, fractions) -> "BudgetSplit":
        f = np.asarray(fractions, dtype=float)
        if f.shape != (3,) or (f <= 0).any():
            raise ValueError("split needs three positive parts")
        f = f / f.sum()
        return cls(*(float(x) for x in f * epsilon))


def amplified_epsilon(eps1: float, s: int) -> float:
    """Budget for randomized response on a ``1/s``-subsampled input.

    Running randomized response with the returned budget on one uniformly
    chosen member of each group of size ``s`` is ``eps1``-private.
    """
    if eps1 <= 0 or s < 1:
        raise ValueError("need eps1 > 0 and s >= 1")
    return math.log1p(s * math.expm1(eps1))


def subsampled_epsilon(eps_prime: float, s: int) -> float:
    """Inverse of :func:`amplified_epsilon`."""
    return math.log1p(math.expm1(eps_prime) / s)


# ---------------------------------------------------------------- hashing


@dataclass(frozen=True, eq=False)
class HashScheme:
    """Public per-user linear-congruence hash parameters.

    User ``i`` maps key ``x`` to bin ``((theta[i] * x + phi[i]) mod p) mod m``.
    Keys ``n..p-1`` exist only as padding: no node is adjacent to them.
    """

    n: int
    p: int
    s: int
    m: int
    theta: np.ndarray
    phi: np.ndarray

    @classmethod
    def draw(cls, n: int, s: int, rng: np.random.Generator) -> "HashScheme":
        if s < 1:
            raise ValueError("sampling size must be >= 1")
        p = smallest_prime_above(max(n, 1))
        m = -(-p // s)
        theta = rng.integers(1, p, size=n, dtype=np.int64)
        phi = rng.integers(0, p, size=n, dtype=np.int64)
        return cls.from_coefficients(n, s, theta, phi, p=p)

    @classmethod
    def from_coefficients(cls, n: int, s: int, theta, phi, p: int | None = None) -> "HashScheme":
        p = smallest_prime_above(max(n, 1)) if p is None else int(p)
        if not is_prime(p) or p <= n:
            raise ValueError(f"p={p} must be a prime larger than n={n}")
        theta = np.asarray(theta, dtype=np.int64)
        phi = np.asarray(phi, dtype=np.int64)
        if ((theta < 1) | (theta >= p)).any() or ((phi < 0) | (phi >= p)).any():
            raise ValueError("hash coefficients out of range")
        for arr in (theta, phi):
            arr.setflags(write=False)
        return cls(n, p, s, -(-p // s), theta, phi)

    @property
    def bits_per_index(self) -> int:
        return max(1, math.ceil(math.log2(self.m))) if self.m > 1 else 1

    def bins(self, users, keys) -> np.ndarray:
        """Vectorized ``h_user(key)``; broadcasts ``users`` against ``keys``."""
        users = np.asarray(users, dtype=np.int64)
        keys = np.asarray(keys, dtype=np.int64)
        return ((self.theta[users] * keys + self.phi[users]) % self.p) % self.m

    def keys_of_slots(self, user: int, bins, slots) -> np.ndarray:
        """Key occupying position ``slot`` of bin ``bin`` for ``user``.

        Bin ``t`` holds the keys whose affine image is ``t, t+m, t+2m, ...``;
        positions past the end of a bin are padding and map to ``DUMMY``.
        """
        bins = np.asarray(bins, dtype=np.int64)
        slots = np.asarray(slots, dtype=np.int64)
        image = bins + slots * self.m
        valid = image < self.p
        inv = pow(int(self.theta[user]), self.p - 2, self.p)
        keys = ((image - self.phi[user]) % self.p) * inv % self.p
        return np.where(valid, keys, DUMMY)


def hash_eval(scheme: HashScheme, user: int, key: int) -> int:
    if not 0 <= key < scheme.p:
        raise ValueError(f"key {key} outside [0, {scheme.p - 1}]")
    return int(scheme.bins(user, key))


def partition_groups(scheme: HashScheme, user: int, n: int | None = None) -> list[list[int]]:
    """The ``m`` groups of user ``user``, each padded to exactly ``s`` slots.

    Members are listed in slot order. Keys ``>= n`` exist only to fill the
    residue range and are reported as ``DUMMY``, like the padding.
    """
    n = scheme.n if n is None else n
    t = np.repeat(np.arange(scheme.m, dtype=np.int64), scheme.s)
    r = np.tile(np.arange(scheme.s, dtype=np.int64), scheme.m)
    keys = scheme.keys_of_slots(user, t, r).reshape(scheme.m, scheme.s)
    keys[keys >= n] = DUMMY
    return [list(map(int, row)) for row in keys]


def bin_sizes(scheme: HashScheme, user: int) -> np.ndarray:
    """Number of extended keys ``0..p-1`` landing in each bin, before padding."""
    return np.bincount(scheme.bins(user, np.arange(scheme.p)), minlength=scheme.m)


# ---------------------------------------------------------------- mechanisms


def rr_keep_probability(eps: float) -> float:
    """P[output = 1 | input = 1] for randomized response."""
    return 1.0 / (1.0 + math.exp(-eps))


def rr_flip(bits, eps: float, rng: np.random.Generator):
    """Randomized response; works on a single bit or an array of bits."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    scalar = np.ndim(bits) == 0
    b = np.asarray(bits, dtype=bool)
    u = rng.random(b.shape)
    keep = rr_keep_probability(eps)
    out = np.where(b, u < keep, u < 1.0 - keep)
    return int(out) if scalar else out


def laplace_sample(scale: float, rng: np.random.Generator, size=None):
    if scale <= 0:
        raise ValueError("scale must be positive")
    return rng.laplace(0.0, scale, size=size)


# Z_4: density sqrt(2)/pi / (1 + z**4); unit variance.
_Z4_NORM = math.sqrt(2.0) / math.pi
_Z4_TABLE_SIZE = 4096
_Z4_TAIL = 1.0 / _Z4_TABLE_SIZE


def z4_pdf(z):
    z = np.asarray(z, dtype=float)
    return _Z4_NORM / (1.0 + z**4)


def z4_cdf(z):
    """Closed-form CDF of the ``1/(1+z^4)`` density."""
    z = np.asarray(z, dtype=float)
    r2 = math.sqrt(2.0)
    log_part = np.log((z * z + r2 * z + 1.0) / (z * z - r2 * z + 1.0)) / (4.0 * r2)
    atan_part = (np.arctan(r2 * z + 1.0) + np.arctan(r2 * z - 1.0)) / (2.0 * r2)
    return 0.5 + _Z4_NORM * (log_part + atan_part)


def _z4_upper_tail_inverse(q):
    # 1 - F(z) ~ c / (3 z^3) for large z
    return np.cbrt(_Z4_NORM / (3.0 * q))


@lru_cache(maxsize=1)
def _z4_table() -> tuple[np.ndarray, np.ndarray]:
    probs = np.linspace(_Z4_TAIL, 1.0 - _Z4_TAIL, _Z4_TABLE_SIZE)
    lo = np.full_like(probs, -_z4_upper_tail_inverse(_Z4_TAIL / 4))
    hi = -lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = z4_cdf(mid) < probs
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return probs, 0.5 * (lo + hi)


def z4_quantile(u):
    """Inverse CDF of ``Z_4`` via table lookup refined by safeguarded Newton."""
    u = np.asarray(u, dtype=float)
    probs, zs = _z4_table()
    # symmetric: solve on the lower half, mirror the upper half
    q = np.minimum(u, 1.0 - u)
    sign = np.where(u < 0.5, -1.0, 1.0)
    inner = q >= _Z4_TAIL
    z = np.where(inner, np.interp(q, probs, zs), -_z4_upper_tail_inverse(np.maximum(q, 1e-300)))
    idx = np.clip(np.searchsorted(probs, q) - 1, 0, len(probs) - 2)
    lo = np.where(inner, zs[idx], -np.inf)
    hi = np.where(inner, zs[np.minimum(idx + 1, len(zs) - 1)], zs[0])
    for _ in range(6):
        step = (z4_cdf(z) - q) / z4_pdf(z)
        z_new = z - step
        z = np.where((z_new > lo) & (z_new < hi), z_new, z)
    return sign * np.abs(z) * np.where(q == 0.5, 0.0, 1.0)


def z_gamma_sample(rng: np.random.Generator, gamma: int = 4, size=None):
    """Sample the heavy-tailed noise with density proportional to ``1/(1+|z|^gamma)``."""
    if gamma != 4:
        raise ValueError("only gamma = 4 is supported (unit variance)")
    u = rng.random(size)
    out = z4_quantile(u)
    return float(out) if size is None else out


# ---------------------------------------------------------------- debiasing


@dataclass(frozen=True)
class DebiasParams:
    """Affine map turning a published bit into an unbiased edge estimate."""

    omega: float
    sigma_tilde: float
    eps_prime: float
    m: int
    s: int

    def estimate(self, bit, mu_c: float = 1.0):
        return (self.omega / mu_c) * np.asarray(bit, dtype=float) - self.sigma_tilde

    # exact publication probabilities as functions of the true low degree
    def p_present(self, d: float) -> float:
        m, s = self.m, self.s
        return (s - 1) / s * (d - 1) / (m * s - 1) + 1.0 / s

    def p_absent(self, d: float) -> float:
        m, s = self.m, self.s
        return (s - 1) / s * d / (m * s - 1)

    def p_present_published(self, d: float) -> float:
        return _rr_mix(self.p_present(d), self.eps_prime)

    def p_absent_published(self, d: float) -> float:
        return _rr_mix(self.p_absent(d), self.eps_prime)


def _rr_mix(p: float, eps: float) -> float:
    keep = rr_keep_probability(eps)
    return keep * p + (1.0 - keep) * (1.0 - p)


def omega(m: int, s: int, eps_prime: float) -> float:
    if m < 2:
        raise ValueError("need at least two groups (m >= 2)")
    e = math.exp(eps_prime)
    return (e + 1.0) / (e - 1.0) * (m * s - 1) / (m - 1)


def sigma(d, m: int, s: int, eps_prime: float):
    """Debiasing offset for a (possibly noisy) low degree ``d``; vectorized."""
    if m < 2:
        raise ValueError("need at least two groups (m >= 2)")
    return (s - 1) / (m * s - s) * np.asarray(d, dtype=float) + (m * s - 1) / ((m - 1) * math.expm1(eps_prime))


def debias_params(d_tilde: float, m: int, s: int, eps_prime: float) -> DebiasParams:
    if s < 1 or eps_prime <= 0:
        raise ValueError("need s >= 1 and eps_prime > 0")
    return DebiasParams(
        omega=omega(m, s, eps_prime),
        sigma_tilde=float(sigma(d_tilde, m, s, eps_prime)),
        eps_prime=eps_prime,
        m=m,
        s=s,
    )
