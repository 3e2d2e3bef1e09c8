"""Reproducible per-replica random streams.

Each replica draws from a Philox counter-based generator whose key is
derived from ``(seed, replica)``, so a replica's stream does not depend on
how many other replicas exist or in which order they are run.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 8192


def replica_generator(seed: int, replica: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(replica), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


class UniformStream:
    """Buffered source of uniforms on [0, 1) for a single replica.

    Pulling scalars one at a time from a numpy Generator is slow; this
    draws blocks and hands them out as Python floats.
    """

    __slots__ = ("_gen", "_buf", "_pos", "_len")

    def __init__(self, seed: int, replica: int = 0, stream: int = 0):
        self._gen = replica_generator(seed, replica, stream)
        self._buf: list = []
        self._pos = 0
        self._len = 0

    def _refill(self):
        self._buf = self._gen.random(_BLOCK).tolist()
        self._pos = 0
        self._len = _BLOCK

    def uniform(self) -> float:
        if self._pos >= self._len:
            self._refill()
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def index(self, k: int) -> int:
        """Uniform integer in ``range(k)``."""
        if self._pos >= self._len:
            self._refill()
        u = self._buf[self._pos]
        self._pos += 1
        i = int(u * k)
        return i if i < k else k - 1
