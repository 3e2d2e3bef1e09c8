"""The 2m-coordinate chain relative to a reference configuration.

For a reference configuration with ``tilde_u[i]`` plus sites and
``tilde_v[i]`` minus sites in partition ``i``, the state ``(U_i, V_i)``
counts sites where the current configuration agrees with the reference on
a plus (``U``) or on a minus (``V``). The TV distance of this chain to its
stationary law equals that of the full spin chain started from any
configuration with the same coordinates, which makes exact full-chain TV
curves available well beyond brute-force sizes.

Array axes are ordered ``(U_1, V_1, ..., U_m, V_m)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .magchain import DEFAULT_MEM_CAP, check_state_count, log_binom, tv_distance
from .partition import PartitionSpec


@dataclass(frozen=True)
class CoordRef:
    """Plus and minus counts of the reference configuration per partition."""

    tilde_u: tuple
    tilde_v: tuple

    def __post_init__(self):
        object.__setattr__(self, "tilde_u", tuple(int(x) for x in self.tilde_u))
        object.__setattr__(self, "tilde_v", tuple(int(x) for x in self.tilde_v))
        if len(self.tilde_u) != len(self.tilde_v) or any(x < 0 for x in self.tilde_u + self.tilde_v):
            raise ValueError("tilde_u and tilde_v must be non-negative and of equal length")

    @classmethod
    def balanced(cls, spec: PartitionSpec) -> "CoordRef":
        """The most balanced reference: ``tilde_u_i = ceil(n p_i / 2)``."""
        tu = tuple((s + 1) // 2 for s in spec.sizes)
        return cls(tu, tuple(s - u for s, u in zip(spec.sizes, tu)))

    @classmethod
    def all_plus(cls, spec: PartitionSpec) -> "CoordRef":
        return cls(spec.sizes, (0,) * spec.m)

    def sizes(self) -> tuple:
        return tuple(u + v for u, v in zip(self.tilde_u, self.tilde_v))

    def is_good(self) -> bool:
        """``|S_i| <= p_i / 2`` for every partition, i.e. ``min(u, v) >= n p_i / 4``."""
        return all(4 * min(u, v) >= u + v for u, v in zip(self.tilde_u, self.tilde_v))

    def config_bits(self, spec: PartitionSpec) -> bytearray:
        """Reference configuration with the plus sites first in each partition."""
        bits = bytearray(spec.n)
        for o, u in zip(spec.offsets, self.tilde_u):
            bits[o:o + u] = b"\x01" * u
        return bits


class CoordChain:
    """Exact 2m-coordinate chain for a given reference."""

    def __init__(self, spec: PartitionSpec, ref: CoordRef | None = None, mem_cap: int = DEFAULT_MEM_CAP):
        ref = CoordRef.balanced(spec) if ref is None else ref
        if ref.sizes() != spec.sizes:
            raise ValueError(f"reference counts {ref.sizes()} do not match partition sizes {spec.sizes}")
        self.spec, self.ref = spec, ref
        m, n, beta = spec.m, spec.n, spec.beta
        shape = []
        for u, v in zip(ref.tilde_u, ref.tilde_v):
            shape += [u + 1, v + 1]
        self.shape = tuple(shape)
        self.n_states = check_state_count(self.shape, mem_cap, "coordinate state space")
        grids = np.indices(self.shape)
        self.U = grids[0::2]
        self.V = grids[1::2]
        tu = np.array(ref.tilde_u).reshape((m,) + (1,) * (2 * m))
        tv = np.array(ref.tilde_v).reshape((m,) + (1,) * (2 * m))
        self.S = (2 * (self.U - self.V) + (tv - tu)) / n
        self.total = self.S.sum(axis=0)
        # moves[2i] acts on U_i, moves[2i+1] on V_i; each has (inc, dec) arrays
        self.inc = np.empty((2 * m,) + self.shape)
        self.dec = np.empty((2 * m,) + self.shape)
        for i in range(m):
            field = beta * (self.total - self.S[i])
            rp = 0.5 * (1.0 + np.tanh(field))
            rm = 0.5 * (1.0 - np.tanh(field))
            self.dec[2 * i] = self.U[i] / n * rm
            self.inc[2 * i] = (ref.tilde_u[i] - self.U[i]) / n * rp
            self.dec[2 * i + 1] = self.V[i] / n * rp
            self.inc[2 * i + 1] = (ref.tilde_v[i] - self.V[i]) / n * rm
        self.hold = 1.0 - self.inc.sum(axis=0) - self.dec.sum(axis=0)
        self._nu = None

    def reference_state(self) -> tuple:
        """Coordinates of the reference configuration itself."""
        out = []
        for u, v in zip(self.ref.tilde_u, self.ref.tilde_v):
            out += [u, v]
        return tuple(out)

    def _state(self, x) -> tuple:
        if x is None:
            return self.reference_state()
        x = tuple(int(v) for v in x)
        if len(x) != len(self.shape) or any(not 0 <= a < s for a, s in zip(x, self.shape)):
            raise ValueError(f"coordinate state {x} outside {self.shape}")
        return x

    def plus_counts(self, x) -> tuple:
        """Push a coordinate state forward to per-partition plus counts."""
        x = self._state(x)
        return tuple(x[2 * i] + self.ref.tilde_v[i] - x[2 * i + 1] for i in range(self.spec.m))

    def point_mass(self, x=None) -> np.ndarray:
        d = np.zeros(self.shape)
        d[self._state(x)] = 1.0
        return d

    def transition_probs(self, x) -> list:
        x = self._state(x)
        out = []
        for ax in range(len(self.shape)):
            pi_, pd = float(self.inc[ax][x]), float(self.dec[ax][x])
            if pi_ > 0:
                out.append((x[:ax] + (x[ax] + 1,) + x[ax + 1:], pi_))
            if pd > 0:
                out.append((x[:ax] + (x[ax] - 1,) + x[ax + 1:], pd))
        out.append((x, float(self.hold[x])))
        return out

    def step(self, dist, out=None):
        new = np.multiply(self.hold, dist, out=out)
        k = len(self.shape)
        for ax in range(k):
            lo = [slice(None)] * k
            hi = [slice(None)] * k
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            new[hi] += self.inc[ax][lo] * dist[lo]
            new[lo] += self.dec[ax][hi] * dist[hi]
        return new

    def trajectory(self, start, t_grid):
        cur = self.point_mass(start) if not isinstance(start, np.ndarray) else np.array(start, dtype=float)
        buf = np.empty_like(cur)
        t = 0
        for target in t_grid:
            target = int(target)
            if target < t:
                raise ValueError("t_grid must be ascending")
            while t < target:
                self.step(cur, out=buf)
                cur, buf = buf, cur
                t += 1
                if t % 1000 == 0:
                    cur /= cur.sum()
            yield t, cur

    def log_stationary_weights(self):
        m = self.spec.m
        lw = sum(log_binom(self.ref.tilde_u[i], self.U[i]) + log_binom(self.ref.tilde_v[i], self.V[i])
                 for i in range(m))
        return lw + 0.5 * self.spec.beta * self.spec.n * (self.total**2 - (self.S**2).sum(axis=0))

    def stationary(self):
        if self._nu is None:
            lw = self.log_stationary_weights()
            self._nu = np.exp(lw - logsumexp(lw))
            self._nu.setflags(write=False)
        return self._nu

    def lump_to_magnetization(self, dist) -> np.ndarray:
        """Marginalise a coordinate distribution onto plus counts."""
        out = np.zeros(tuple(s + 1 for s in self.spec.sizes))
        for x in np.ndindex(self.shape):
            w = dist[x]
            if w:
                out[self.plus_counts(x)] += w
        return out

    def exact_tv_full(self, t_grid: Sequence[int], start=None) -> list:
        """Exact full-chain TV from a configuration with coordinates ``start``.

        ``start=None`` means the reference configuration itself.
        """
        nu = self.stationary()
        return [(t, tv_distance(d, nu)) for t, d in self.trajectory(start, t_grid)]


# --- brute-force oracle -----------------------------------------------------

ORACLE_MAX_N = 14


@dataclass
class OracleResult:
    spec: PartitionSpec
    spins: np.ndarray
    mu: np.ndarray
    kernel: sp.csr_matrix
    tv: list


def enumerate_configs(n: int) -> np.ndarray:
    """All 2^n configurations as rows of +-1; row index bit ``k`` is site ``k``."""
    idx = np.arange(2**n)
    bits = (idx[:, None] >> np.arange(n)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def adjacency(spec: PartitionSpec) -> np.ndarray:
    part = np.repeat(np.arange(spec.m), spec.sizes)
    return (part[:, None] != part[None, :]).astype(float)


def brute_gibbs(spec: PartitionSpec, spins=None) -> np.ndarray:
    """Gibbs law from the edge Hamiltonian ``H = -(1/n) sum_{edges} s_v s_w``."""
    spins = enumerate_configs(spec.n) if spins is None else spins
    W = adjacency(spec)
    s = spins.astype(float)
    energy = -0.5 * np.einsum("ij,jk,ik->i", s, W, s) / spec.n
    lw = -spec.beta * energy
    return np.exp(lw - logsumexp(lw))


def brute_kernel(spec: PartitionSpec, spins=None) -> sp.csr_matrix:
    """The full Glauber kernel on 2^n configurations (rows sum to 1)."""
    n = spec.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_N}")
    spins = enumerate_configs(n) if spins is None else spins
    N = spins.shape[0]
    W = adjacency(spec)
    fields = spins.astype(float) @ W / n  # mean field at each site
    rp = 0.5 * (1.0 + np.tanh(spec.beta * fields))
    idx = np.arange(N)
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    for k in range(n):
        flipped = idx ^ (1 << k)
        plus_now = spins[:, k] > 0
        p_flip = np.where(plus_now, 1.0 - rp[:, k], rp[:, k]) / n
        rows.append(idx)
        cols.append(flipped)
        vals.append(p_flip)
        diag += 1.0 / n - p_flip
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return K


def config_index(spins) -> int:
    spins = np.asarray(spins)
    return int(((spins > 0).astype(np.int64) << np.arange(len(spins))).sum())


def oracle_full_chain(spec: PartitionSpec, start, t_grid: Sequence[int]) -> OracleResult:
    """Enumerate the full chain for tiny n: exact kernel, Gibbs law and TV curve."""
    if spec.n > ORACLE_MAX_N:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_N}")
    spins = enumerate_configs(spec.n)
    mu = brute_gibbs(spec, spins)
    K = brute_kernel(spec, spins)
    d = np.zeros(len(mu))
    d[config_index(start)] = 1.0
    KT = K.T.tocsr()
    tv, t = [], 0
    for target in t_grid:
        while t < target:
            d = KT @ d
            t += 1
        tv.append((t, tv_distance(d, mu)))
    return OracleResult(spec, spins, mu, K, tv)


def lump_configs_to_counts(spec: PartitionSpec, spins) -> list:
    """Plus count per partition for each configuration row."""
    bounds = np.cumsum((0,) + spec.sizes)
    plus = spins > 0
    return [tuple(int(x) for x in row) for row in
            np.stack([plus[:, a:b].sum(axis=1) for a, b in zip(bounds[:-1], bounds[1:])], axis=1)]


def lump_configs_to_coords(spec: PartitionSpec, ref_spins, spins) -> list:
    """2m-coordinates of each configuration with respect to ``ref_spins``."""
    ref = np.asarray(ref_spins)
    bounds = np.cumsum((0,) + spec.sizes)
    agree_plus = (spins > 0) & (ref > 0)
    agree_minus = (spins < 0) & (ref < 0)
    cols = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        cols.append(agree_plus[:, a:b].sum(axis=1))
        cols.append(agree_minus[:, a:b].sum(axis=1))
    return [tuple(int(x) for x in row) for row in np.stack(cols, axis=1)]
