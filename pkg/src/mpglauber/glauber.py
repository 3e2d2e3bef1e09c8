"""Full spin-configuration Glauber dynamics and the grand monotone coupling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .partition import PartitionSpec
from .rng import UniformStream


class ResourceCapError(RuntimeError):
    pass


@lru_cache(maxsize=64)
def _geometry(sizes: tuple, beta: float):
    n = sum(sizes)
    part = []
    for k, s in enumerate(sizes):
        part.extend([k] * s)
    # r_+ at field x/n for every integer numerator x in [-n, n]
    x = np.arange(-n, n + 1) / n
    rplus = (0.5 * (1.0 + np.tanh(beta * x))).tolist()
    return part, rplus


def r_plus(beta: float, x):
    """Probability of updating to +1 under mean field ``x``."""
    return 0.5 * (1.0 + np.tanh(beta * np.asarray(x, dtype=float)))


def r_minus(beta: float, x):
    return 0.5 * (1.0 - np.tanh(beta * np.asarray(x, dtype=float)))


class SpinConfig:
    """A full +-1 configuration with cached per-partition plus counts.

    Spins live in one ``bytearray`` (1 for +1, 0 for -1) laid out
    partition by partition; ``plus[i]`` is the number of +1 sites in
    partition ``i``.
    """

    __slots__ = ("spec", "bits", "plus")

    def __init__(self, spec: PartitionSpec, bits, plus=None):
        self.spec = spec
        self.bits = bytearray(bits)
        if len(self.bits) != spec.n:
            raise ValueError(f"expected {spec.n} sites, got {len(self.bits)}")
        if plus is None:
            plus = [sum(self.bits[o:o + s]) for o, s in zip(spec.offsets, spec.sizes)]
        self.plus = list(plus)

    @classmethod
    def all_plus(cls, spec):
        return cls(spec, b"\x01" * spec.n, list(spec.sizes))

    @classmethod
    def all_minus(cls, spec):
        return cls(spec, b"\x00" * spec.n, [0] * spec.m)

    @classmethod
    def from_counts(cls, spec, plus: Sequence[int]):
        """The configuration whose first ``plus[i]`` sites of each partition are +1."""
        bits = bytearray(spec.n)
        for o, s, u in zip(spec.offsets, spec.sizes, plus):
            if not 0 <= u <= s:
                raise ValueError(f"plus count {u} outside [0, {s}]")
            bits[o:o + u] = b"\x01" * u
        return cls(spec, bits, list(plus))

    @classmethod
    def from_spins(cls, spec, spins):
        spins = np.asarray(spins)
        return cls(spec, (spins > 0).astype(np.uint8).tobytes())

    @property
    def spins(self) -> np.ndarray:
        return np.frombuffer(bytes(self.bits), dtype=np.uint8).astype(np.int8) * 2 - 1

    def magnetization(self) -> np.ndarray:
        """Per-partition magnetizations ``S_i = (2 u_i - n p_i) / n``."""
        sizes = np.array(self.spec.sizes)
        return (2 * np.array(self.plus) - sizes) / self.spec.n

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.spec, self.bits, self.plus)

    def check(self):
        for k, (o, s) in enumerate(zip(self.spec.offsets, self.spec.sizes)):
            assert self.plus[k] == sum(self.bits[o:o + s]), "plus count out of sync"

    def __eq__(self, other):
        return isinstance(other, SpinConfig) and self.bits == other.bits

    def __le__(self, other):
        return all(a <= b for a, b in zip(self.bits, other.bits))

    def __repr__(self):
        return f"SpinConfig(plus={self.plus}, sizes={list(self.spec.sizes)})"


def glauber_step(cfg: SpinConfig, site: int, u: float) -> SpinConfig:
    """Heat-bath update of ``site`` driven by the uniform ``u``; mutates ``cfg``.

    The site becomes +1 iff ``u < r_+(sum_{j != k} S_j)`` where ``k`` is its
    partition (ties go to -1).
    """
    spec = cfg.spec
    part, rplus = _geometry(spec.sizes, spec.beta)
    n = spec.n
    plus = cfg.plus
    k = part[site]
    x = 2 * sum(plus) - n - (2 * plus[k] - spec.sizes[k])
    new = 1 if u < rplus[x + n] else 0
    if new != cfg.bits[site]:
        cfg.bits[site] = new
        plus[k] += 1 if new else -1
    return cfg


def grand_coupling_step(cfgs: Sequence[SpinConfig], site: int, u: float):
    """Apply the same ``(site, u)`` to every configuration."""
    for c in cfgs:
        glauber_step(c, site, u)
    return cfgs


def hamming_profile(s1: SpinConfig, s2: SpinConfig) -> np.ndarray:
    """Per-partition Hamming distances between two configurations."""
    spec = s1.spec
    out = np.zeros(spec.m, dtype=int)
    for k, (o, sz) in enumerate(zip(spec.offsets, spec.sizes)):
        a, b = s1.bits[o:o + sz], s2.bits[o:o + sz]
        out[k] = sum(x != y for x, y in zip(a, b))
    return out


@dataclass
class ReplicaTrajectories:
    """Recorded magnetization paths for a batch of replicas.

    ``mags[r, j]`` is the magnetization vector of replica ``r`` at time
    ``times[j]``; for paired runs ``mags2`` holds the second chain and
    ``dist_w[r, j]`` the weighted Hamming distance ``sum_i w_i dist_i``.
    """

    spec: PartitionSpec
    times: np.ndarray
    mags: np.ndarray
    mags2: np.ndarray | None = None
    dist_w: np.ndarray | None = None

    def to_csv(self, fh, header_lines: Sequence[str] = ()):
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        cols = ["replica", "t"] + [f"S_{i + 1}" for i in range(self.spec.m)]
        if self.dist_w is not None:
            cols.append("dist_w")
        w.writerow(cols)
        for r in range(self.mags.shape[0]):
            for j, t in enumerate(self.times):
                row = [r, int(t)] + [repr(float(x)) for x in self.mags[r, j]]
                if self.dist_w is not None:
                    row.append(repr(float(self.dist_w[r, j])))
                w.writerow(row)


def _as_config(spec, start):
    if isinstance(start, SpinConfig):
        return start.copy()
    if start == "all-plus":
        return SpinConfig.all_plus(spec)
    if start == "all-minus":
        return SpinConfig.all_minus(spec)
    return SpinConfig.from_counts(spec, start)


def run_replicas(spec: PartitionSpec, start, t_max: int, n_replicas: int, seed: int,
                 start2=None, stride: int = 1, weights=None, max_work: float = 1e11) -> ReplicaTrajectories:
    """Simulate independent replicas of the Glauber dynamics.

    Replica ``r`` uses the stream keyed by ``(seed, r)`` and is therefore
    reproducible on its own. With ``start2`` each replica runs a pair of
    chains under the grand coupling and records ``sum_i w_i dist_i``.

    Parameters
    ----------
    start, start2 : SpinConfig, "all-plus", "all-minus" or plus counts
    t_max : int
        Number of steps.
    stride : int
        Record every ``stride`` steps (time 0 always recorded).
    weights : array_like, optional
        Weights for the Hamming profile; defaults to the Perron vector.
    max_work : float
        Refuse runs with ``n * t_max * n_replicas`` above this.
    """
    if t_max < 0 or n_replicas < 1 or stride < 1:
        raise ValueError("need t_max >= 0, n_replicas >= 1, stride >= 1")
    if spec.n * t_max * n_replicas > max_work:
        raise ResourceCapError(f"n*t_max*replicas = {spec.n * t_max * n_replicas:.3g} exceeds cap {max_work:.3g}")
    paired = start2 is not None
    if paired and weights is None:
        from .spectral import perron

        weights = perron(spec).a
    times = np.arange(0, t_max + 1, stride)
    mags = np.empty((n_replicas, len(times), spec.m))
    mags2 = np.empty_like(mags) if paired else None
    dist_w = np.empty((n_replicas, len(times))) if paired else None
    sizes = np.array(spec.sizes)
    n = spec.n
    part, rplus = _geometry(spec.sizes, spec.beta)
    ssizes = spec.sizes

    for r in range(n_replicas):
        rng = UniformStream(seed, r)
        chains = [_as_config(spec, start)]
        if paired:
            chains.append(_as_config(spec, start2))
        j = 0
        for t in range(t_max + 1):
            if j < len(times) and t == times[j]:
                mags[r, j] = (2 * np.array(chains[0].plus) - sizes) / n
                if paired:
                    mags2[r, j] = (2 * np.array(chains[1].plus) - sizes) / n
                    dist_w[r, j] = float(np.dot(weights, hamming_profile(chains[0], chains[1])))
                j += 1
            if t == t_max:
                break
            site = rng.index(n)
            u = rng.uniform()
            k = part[site]
            for c in chains:
                plus = c.plus
                x = 2 * sum(plus) - n - (2 * plus[k] - ssizes[k])
                new = 1 if u < rplus[x + n] else 0
                if new != c.bits[site]:
                    c.bits[site] = new
                    plus[k] += 1 if new else -1
    return ReplicaTrajectories(spec, times, mags, mags2, dist_w)
