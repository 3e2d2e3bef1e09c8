"""Exact magnetization chain on the per-partition plus counts.

States are vectors ``u`` with ``0 <= u_i <= n p_i`` and magnetization
``S_i = (2 u_i - n p_i) / n``. Distributions are dense arrays of shape
``(n p_1 + 1, ..., n p_m + 1)``; the kernel is applied matrix-free by
shifting the array along each axis.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .partition import PartitionSpec

log = logging.getLogger(__name__)

DEFAULT_MEM_CAP = 10**7


class MemoryCapError(RuntimeError):
    pass


def check_state_count(shape, mem_cap, what="state space"):
    count = math.prod(shape)
    if count > mem_cap:
        raise MemoryCapError(
            f"{what} has {count} states, above the cap of {mem_cap}; "
            f"reduce n by a factor of about {(count / mem_cap) ** (1 / len(shape)):.2f} or raise --mem-cap")
    return count


def log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def tv_distance(d1, d2) -> float:
    return min(1.0, 0.5 * float(np.abs(np.asarray(d1) - np.asarray(d2)).sum()))


class MagnetizationChain:
    """The lumped chain of per-partition plus counts.

    Parameters
    ----------
    spec : PartitionSpec
    mem_cap : int
        Refuse state spaces with more states than this.
    """

    def __init__(self, spec: PartitionSpec, mem_cap: int = DEFAULT_MEM_CAP):
        self.spec = spec
        self.sizes = np.array(spec.sizes)
        self.shape = tuple(int(s) + 1 for s in spec.sizes)
        self.n_states = check_state_count(self.shape, mem_cap, "magnetization state space")
        n, m, beta = spec.n, spec.m, spec.beta
        grids = np.indices(self.shape)
        self.u = grids
        self.S = (2 * grids - self.sizes.reshape((m,) + (1,) * m)) / n
        total = self.S.sum(axis=0)
        self.total = total
        self.up = np.empty((m,) + self.shape)
        self.down = np.empty((m,) + self.shape)
        for i in range(m):
            field = beta * (total - self.S[i])
            rp = 0.5 * (1.0 + np.tanh(field))
            rm = 0.5 * (1.0 - np.tanh(field))
            self.up[i] = (self.sizes[i] - grids[i]) / n * rp
            self.down[i] = grids[i] / n * rm
        self.hold = 1.0 - self.up.sum(axis=0) - self.down.sum(axis=0)
        self._pi = None

    # -- states -----------------------------------------------------------
    def _state(self, u) -> tuple:
        if isinstance(u, str):
            if u == "all-plus":
                return tuple(int(s) for s in self.sizes)
            if u == "all-minus":
                return (0,) * self.spec.m
            raise ValueError(f"unknown start {u!r}")
        u = tuple(int(x) for x in u)
        if len(u) != self.spec.m or any(not 0 <= x <= s for x, s in zip(u, self.sizes)):
            raise ValueError(f"state {u} outside the grid {self.shape}")
        return u

    def magnetization(self, u) -> np.ndarray:
        u = np.array(self._state(u))
        return (2 * u - self.sizes) / self.spec.n

    def mirror(self, u) -> tuple:
        return tuple(int(s - x) for s, x in zip(self.sizes, self._state(u)))

    def point_mass(self, u) -> np.ndarray:
        d = np.zeros(self.shape)
        d[self._state(u)] = 1.0
        return d

    # -- kernel -----------------------------------------------------------
    def transition_probs(self, u) -> list:
        """Non-zero moves out of ``u`` as ``(state, probability)`` pairs, holding last."""
        u = self._state(u)
        out = []
        for i in range(self.spec.m):
            pu, pd = float(self.up[i][u]), float(self.down[i][u])
            if pu > 0:
                out.append((u[:i] + (u[i] + 1,) + u[i + 1:], pu))
            if pd > 0:
                out.append((u[:i] + (u[i] - 1,) + u[i + 1:], pd))
        out.append((u, float(self.hold[u])))
        return out

    def step(self, dist: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """One application of the kernel to a distribution (row vector)."""
        new = np.multiply(self.hold, dist, out=out)
        m = self.spec.m
        for i in range(m):
            lo = [slice(None)] * m
            hi = [slice(None)] * m
            lo[i] = slice(0, -1)
            hi[i] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            new[hi] += self.up[i][lo] * dist[lo]
            new[lo] += self.down[i][hi] * dist[hi]
        return new

    def evolve(self, dist: np.ndarray, t: int) -> np.ndarray:
        """Apply the kernel ``t`` times; renormalises if mass drifts by more than 1e-12 per 1000 steps."""
        if t < 0:
            raise ValueError("t must be non-negative")
        cur = np.array(dist, dtype=float)
        buf = np.empty_like(cur)
        for s in range(1, t + 1):
            self.step(cur, out=buf)
            cur, buf = buf, cur
            if s % 1000 == 0:
                cur = self._mass_check(cur)
        return cur

    def _mass_check(self, d):
        drift = abs(float(d.sum()) - 1.0)
        if drift > 1e-12:
            log.warning("renormalising distribution: mass drift %.3e", drift)
            d /= d.sum()
        return d

    def trajectory(self, start, t_grid: Iterable[int]):
        """Yield ``(t, dist_t)`` at each time in the ascending ``t_grid``."""
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
                    cur = self._mass_check(cur)
            yield t, cur

    # -- stationary law ----------------------------------------------------
    def log_stationary_weights(self) -> np.ndarray:
        spec = self.spec
        logw = sum(log_binom(self.sizes[i], self.u[i]) for i in range(spec.m))
        sq = self.total**2 - (self.S**2).sum(axis=0)
        return logw + 0.5 * spec.beta * spec.n * sq

    def stationary(self) -> np.ndarray:
        """Exact stationary law, normalised with one log-sum-exp pass."""
        if self._pi is None:
            lw = self.log_stationary_weights()
            self._pi = np.exp(lw - logsumexp(lw))
            self._pi.setflags(write=False)
        return self._pi

    def tv(self, dist) -> float:
        return tv_distance(dist, self.stationary())

    def tv_curve(self, start, t_grid: Sequence[int]) -> list:
        """Exact TV distance to stationarity from ``start`` at each grid time."""
        pi = self.stationary()
        return [(t, tv_distance(d, pi)) for t, d in self.trajectory(start, t_grid)]

    def mixing_times(self, start, eps: Sequence[float], t_max: int | None = None) -> dict:
        """First times at which the TV distance from ``start`` drops to each ``eps``.

        Returns ``{eps: t}``; entries not reached by ``t_max`` are ``None``.
        """
        pi = self.stationary()
        pending = sorted(eps, reverse=True)
        result = {e: None for e in eps}
        cur = self.point_mass(start)
        buf = np.empty_like(cur)
        t = 0
        limit = t_max if t_max is not None else 200 * self.spec.n * max(1.0, math.log(self.spec.n))
        while pending:
            d = tv_distance(cur, pi)
            while pending and d <= pending[0]:
                result[pending.pop(0)] = t
            if not pending or t >= limit:
                break
            self.step(cur, out=buf)
            cur, buf = buf, cur
            t += 1
            if t % 1000 == 0:
                cur = self._mass_check(cur)
        return result

    # -- moments -----------------------------------------------------------
    def drift(self, u) -> np.ndarray:
        """Closed-form one-step mean increment ``(1/n)(-S_i + p_i tanh(beta F_i))``."""
        S = self.magnetization(u)
        p = self.spec.p_float
        F = S.sum() - S
        return (-S + p * np.tanh(self.spec.beta * F)) / self.spec.n

    def kernel_expectation(self, u) -> np.ndarray:
        """``sum_y P(u, y) (S(y) - S(u))`` from the transition rows."""
        S0 = self.magnetization(u)
        out = np.zeros(self.spec.m)
        for y, prob in self.transition_probs(u):
            out += prob * (self.magnetization(y) - S0)
        return out

    def mean(self, dist) -> np.ndarray:
        m = self.spec.m
        return np.array([float((dist * self.S[i]).sum()) for i in range(m)])

    def variances(self, dist) -> np.ndarray:
        mu = self.mean(dist)
        return np.array([float((dist * self.S[i] ** 2).sum()) - mu[i] ** 2 for i in range(self.spec.m)])

    def statistic_moments(self, dist, weights) -> tuple:
        """Mean and variance of ``sum_i w_i S_i`` under ``dist``."""
        Z = np.tensordot(np.asarray(weights, dtype=float), self.S, axes=1)
        mu = float((dist * Z).sum())
        return mu, max(0.0, float((dist * Z**2).sum()) - mu**2)

    def variance_trajectory(self, start, t_grid: Sequence[int]) -> list:
        """``(t, sum_i Var(S_i), n sum_i Var(S_i))`` along the exact evolution."""
        n = self.spec.n
        out = []
        for t, d in self.trajectory(start, t_grid):
            v = float(self.variances(d).sum())
            out.append((t, v, n * v))
        return out


def variance_bound_constant(sd, m: int) -> float:
    """The explicit bound ``4 m a_1^2 / (upsilon a_m^2)`` on ``n sum_i Var(S_i)``."""
    a = np.asarray(sd.a)
    return 4.0 * m * a[0] ** 2 / (sd.upsilon * a[-1] ** 2)


def extreme_starts(spec: PartitionSpec) -> list:
    """All-plus, all-minus and the mixed corners, deduplicated."""
    import itertools

    corners = []
    for signs in itertools.product((1, 0), repeat=spec.m):
        corners.append(tuple(s * sz for s, sz in zip(signs, spec.sizes)))
    return corners


def write_tv_csv(fh, rows, header_lines=(), chain: str | None = None):
    for line in header_lines:
        fh.write(f"# {line}\n")
    if chain is None:
        fh.write("t,tv\n")
        for t, v in rows:
            fh.write(f"{int(t)},{v!r}\n")
    else:
        fh.write("chain,t,tv\n")
        for t, v in rows:
            fh.write(f"{chain},{int(t)},{v!r}\n")


def write_variance_csv(fh, rows, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    fh.write("t,sum_var,n_sum_var\n")
    for t, v, nv in rows:
        fh.write(f"{int(t)},{v!r},{nv!r}\n")


def write_stationary_csv(fh, chain: MagnetizationChain, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    m = chain.spec.m
    fh.write(",".join([f"u_{i + 1}" for i in range(m)] + ["prob"]) + "\n")
    pi = chain.stationary()
    for idx in np.ndindex(chain.shape):
        fh.write(",".join(str(x) for x in idx) + f",{float(pi[idx])!r}\n")
