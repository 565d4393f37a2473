"""Deterministic random substreams.

Every random draw in a simulation comes from a generator keyed by
``(master seed, trial, role, owner)``. Keys are mixed through
:class:`numpy.random.SeedSequence`, so the draws of one simulated user never
depend on how many other users exist or in which order work is scheduled.
"""

from __future__ import annotations

import zlib

import numpy as np


def role_tag(role: str) -> int:
    return zlib.crc32(role.encode("ascii"))


def substream(seed: int, *keys: int | str) -> np.random.Generator:
    """Return an independent generator for the given key path."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        entropy.append(role_tag(key) if isinstance(key, str) else int(key))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


class TrialStreams:
    """Factory for the substreams used inside one trial."""

    def __init__(self, seed: int, trial: int = 0):
        self.seed = int(seed)
        self.trial = int(trial)

    def server(self, role: str) -> np.random.Generator:
        return substream(self.seed, self.trial, role)

    def user(self, role: str, user: int) -> np.random.Generator:
        return substream(self.seed, self.trial, role, user)
