"""Mixing-time lower bounds.

High temperature: a distinguishing-statistic bound on the TV distance at
``t_n - gamma n / upsilon`` using exact moments of ``Z = sum_i a_i S_i``.
Low temperature: the conductance of the cut ``{sum_i S_i > 0}`` and the
free-energy profile whose curvature at the origin changes sign at beta_cr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .magchain import DEFAULT_MEM_CAP, MagnetizationChain
from .partition import PartitionSpec
from .spectral import SpectralData, perron

DEFAULT_GAMMAS = (1.0, 2.0, 3.0, 4.0)
DEFAULT_ZETA_FRACTIONS = (0.25, 0.5, 0.75)


# --- distinguishing statistic ----------------------------------------------

def zeta_limit(sd: SpectralData, beta: float) -> float:
    """Upper end of the admissible range for the start scale ``zeta``."""
    return 1.0 if beta == 0 else min(1.0, 3.0 * sd.upsilon / beta**2)


def default_zeta(sd: SpectralData, beta: float) -> float:
    return zeta_limit(sd, beta) / 2.0


def start_counts(spec: PartitionSpec, zeta: float) -> tuple:
    """Plus counts of the grid point nearest to ``zeta * p``, kept strictly positive."""
    out = []
    for size in spec.sizes:
        u = round(size * (1.0 + zeta) / 2.0)
        u = min(size, max(u, size // 2 + 1))
        out.append(u)
    return tuple(out)


@dataclass(frozen=True)
class LowerBoundResult:
    gamma: float
    zeta: float
    start: tuple
    t_star: int
    r: float
    tv_lower: float
    E_start: float
    E_stat: float
    Var_start: float
    Var_stat: float
    tv_exact: float

    def row(self, spec: PartitionSpec) -> tuple:
        return (spec.n, spec.beta, self.gamma, self.zeta, self.t_star, self.r, self.tv_lower, self.tv_exact)


def separation_bound(mean1, mean2, var1, var2) -> tuple:
    """``(r, max(0, 1 - 8/r^2))`` for two laws with the given moments."""
    sigma = math.sqrt(max(var1, var2))
    gap = abs(mean1 - mean2)
    if sigma == 0.0:
        r = math.inf if gap > 0 else 0.0
    else:
        r = gap / sigma
    tv = 0.0 if r == 0 else max(0.0, 1.0 - 8.0 / r**2)
    return r, min(1.0, tv)


def lower_bound_at(spec: PartitionSpec, gamma: float, zeta: float | None = None, sd: SpectralData | None = None,
                   chain: MagnetizationChain | None = None, mem_cap: int = DEFAULT_MEM_CAP) -> LowerBoundResult:
    """Exact lower bound on the magnetization-chain TV at ``t_n - gamma n / upsilon``.

    The step count is rounded up and clamped at zero. Both moments of
    ``Z`` are exact, so the result carries the exact TV at the same time
    for comparison.
    """
    sd = perron(spec) if sd is None else sd
    if not spec.beta < sd.beta_cr:
        raise ValueError(f"lower bound needs beta < beta_cr = {sd.beta_cr}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    limit = zeta_limit(sd, spec.beta)
    zeta = default_zeta(sd, spec.beta) if zeta is None else float(zeta)
    # at beta = 0 the full start s = p is also admissible
    if not (0 < zeta < limit or (spec.beta == 0 and zeta == 1.0)):
        raise ValueError(f"zeta must lie in (0, {limit:.6g})")
    chain = MagnetizationChain(spec, mem_cap) if chain is None else chain
    t_n = spec.cutoff_time(sd.upsilon)
    t_star = max(0, math.ceil(t_n - gamma * spec.n / sd.upsilon))
    start = start_counts(spec, zeta)
    dist = chain.evolve(chain.point_mass(start), t_star)
    e1, v1 = chain.statistic_moments(dist, sd.a)
    pi = chain.stationary()
    e2, v2 = chain.statistic_moments(pi, sd.a)
    r, tv_lower = separation_bound(e1, e2, v1, v2)
    return LowerBoundResult(gamma, zeta, start, t_star, r, tv_lower, e1, e2, v1, v2, chain.tv(dist))


def lower_bound_sweep(spec: PartitionSpec, gammas: Sequence[float] = DEFAULT_GAMMAS,
                      zetas: Sequence[float] | None = None, mem_cap: int = DEFAULT_MEM_CAP) -> list:
    """Lower bounds over a ``(gamma, zeta)`` grid sharing one chain.

    Default ``zetas`` are fixed fractions of the admissible range.
    """
    sd = perron(spec)
    if zetas is None:
        lim = zeta_limit(sd, spec.beta)
        zetas = [f * lim for f in DEFAULT_ZETA_FRACTIONS]
    chain = MagnetizationChain(spec, mem_cap)
    return [lower_bound_at(spec, g, z, sd, chain) for z in zetas for g in gammas]


def write_lower_csv(fh, spec_rows, header_lines=()):
    """``spec_rows`` is an iterable of ``(spec, LowerBoundResult)``."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    fh.write("n,beta,gamma,zeta,t_star,r,tv_lower,tv_exact\n")
    for spec, res in spec_rows:
        n, beta, g, z, ts, r, lo, ex = res.row(spec)
        fh.write(f"{n},{beta!r},{g!r},{z!r},{ts},{r!r},{lo!r},{ex!r}\n")


# --- conductance ----------------------------------------------------------

@dataclass(frozen=True)
class ConductanceResult:
    n: int
    beta: float
    log_phi_A: float
    mu_A: float
    mu_B: float

    @property
    def phi_A(self) -> float:
        return math.exp(self.log_phi_A)

    @property
    def tmix_lower(self) -> float:
        if -self.log_phi_A > 700:
            return math.inf
        return 0.25 * math.exp(-self.log_phi_A)


def conductance_cut(spec: PartitionSpec, chain: MagnetizationChain | None = None,
                    mem_cap: int = DEFAULT_MEM_CAP) -> ConductanceResult:
    """Exact conductance of ``A = {sum_i S_i > 0}`` on the magnetization chain.

    Only down-moves leave ``A``, and only from states with
    ``sum_i (2 u_i - n p_i) in {1, 2}``. Everything is summed in the log
    domain so that exponentially small flows survive.
    """
    chain = MagnetizationChain(spec, mem_cap) if chain is None else chain
    m = spec.m
    T = np.rint(chain.total * spec.n).astype(np.int64)  # sum_i (2 u_i - n p_i)
    logpi = chain.log_stationary_weights()
    logZ = logsumexp(logpi)
    in_A = T > 0
    log_mu_A = logsumexp(logpi[in_A]) - logZ
    exits = (T > 0) & (T <= 2)
    terms = []
    with np.errstate(divide="ignore"):
        for i in range(m):
            terms.append(logpi[exits] + np.log(chain.down[i][exits]))
    log_flow = logsumexp(np.concatenate(terms)) - logZ
    mu_A = math.exp(log_mu_A)
    mu_B = math.exp(logsumexp(logpi[np.abs(T) <= 1]) - logZ)
    assert mu_A <= 0.5 + 1e-12, "flip symmetry violated: mu(A) > 1/2"
    return ConductanceResult(spec.n, spec.beta, float(log_flow - log_mu_A), mu_A, mu_B)


def conductance_bruteforce(spec: PartitionSpec) -> float:
    """Conductance of the same cut computed on the full 2^n chain."""
    from .coordchain import brute_gibbs, brute_kernel, enumerate_configs

    spins = enumerate_configs(spec.n)
    mu = brute_gibbs(spec, spins)
    K = brute_kernel(spec, spins).tocoo()
    in_A = spins.sum(axis=1) > 0
    mask = in_A[K.row] & ~in_A[K.col]
    flow = float(np.sum(mu[K.row[mask]] * K.data[mask]))
    return flow / float(mu[in_A].sum())


def write_conductance_csv(fh, results: Sequence[ConductanceResult], header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    fh.write("n,beta,phi_A,mu_A,mu_B,tmix_lower\n")
    for r in results:
        fh.write(f"{r.n},{r.beta!r},{r.phi_A!r},{r.mu_A!r},{r.mu_B!r},{r.tmix_lower!r}\n")


def log_fit(ns, ys) -> tuple:
    """Least-squares line ``y = slope * n + icept`` with its R^2."""
    ns, ys = np.asarray(ns, dtype=float), np.asarray(ys, dtype=float)
    slope, icept = np.polyfit(ns, ys, 1)
    pred = slope * ns + icept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    return float(slope), float(icept), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


# --- free-energy profile --------------------------------------------------

@dataclass(frozen=True)
class Profile:
    gamma: np.ndarray
    f: np.ndarray
    df: np.ndarray
    d2f: np.ndarray


def _curv(p, v, beta):
    return 4.0 * beta * ((v @ p) ** 2 - (v**2) @ (p**2))


def f_profile(p, beta: float, v, gamma_grid, fd_step: float = 1e-5, fd_tol: float = 1e-6) -> Profile:
    """Entropy-plus-energy exponent along ``1/2 + gamma v`` with two derivatives.

    Checks ``f(0) = ln 2``, ``f'(0) = 0`` and agreement of ``f''`` with a
    central difference of ``f'``.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or not np.any(v != 0):
        raise ValueError("direction must be non-negative and non-zero")
    g = np.atleast_1d(np.asarray(gamma_grid, dtype=float))
    gv = np.outer(g, v)
    if np.any(np.abs(gv) >= 0.5):
        raise ValueError("gamma * v must stay inside (-1/2, 1/2)")
    quad = (v @ p) ** 2 - (v**2) @ (p**2)

    def f(gv, g):
        lo, hi = 0.5 - gv, 0.5 + gv
        return 2 * beta * g**2 * quad - (p * (lo * np.log(lo) + hi * np.log(hi))).sum(axis=-1)

    def df(gv, g):
        return 4 * beta * g * quad - (p * v * (np.log(0.5 + gv) - np.log(0.5 - gv))).sum(axis=-1)

    def d2f(gv):
        return 4 * beta * quad - (p * v**2 * (1 / (0.5 - gv) + 1 / (0.5 + gv))).sum(axis=-1)

    zero = np.zeros((1, len(v)))
    assert abs(f(zero, np.zeros(1))[0] - math.log(2)) < 1e-14, "f(0) must equal ln 2"
    assert abs(df(zero, np.zeros(1))[0]) < 1e-14, "f'(0) must vanish"
    F, D1, D2 = f(gv, g), df(gv, g), d2f(gv)
    h = fd_step
    inside = np.all(np.abs(np.outer(np.abs(g) + h, v)) < 0.5, axis=1)
    if inside.any():
        gi = g[inside]
        fd = (df(np.outer(gi + h, v), gi + h) - df(np.outer(gi - h, v), gi - h)) / (2 * h)
        err = float(np.abs(fd - D2[inside]).max())
        assert err < fd_tol, f"second derivative disagrees with finite difference by {err:.2e}"
    return Profile(g, F, D1, D2)


def curvature_at_origin(p, beta: float, v) -> float:
    p, v = np.asarray(p, dtype=float), np.asarray(v, dtype=float)
    return float(_curv(p, v, beta) - 4.0 * (p @ v**2))


def critical_beta_scan(p, v, beta_grid: Sequence[float], tol: float = 1e-13) -> float:
    """The inverse temperature at which the curvature at the origin crosses zero.

    The first bracketing pair in ``beta_grid`` is refined by bisection.
    """
    p, v = np.asarray(p, dtype=float), np.asarray(v, dtype=float)
    grid = sorted(float(b) for b in beta_grid)
    vals = [curvature_at_origin(p, b, v) for b in grid]
    for (b0, c0), (b1, c1) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if c0 == 0:
            return b0
        if c0 * c1 < 0:
            lo, hi = b0, b1
            while hi - lo > tol * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                cm = curvature_at_origin(p, mid, v)
                if (cm < 0) == (c0 < 0):
                    lo = mid
                else:
                    hi = mid
                if mid in (lo, hi) and hi - lo <= 2 * np.spacing(hi):
                    break
            return 0.5 * (lo + hi)
    if vals and vals[-1] == 0:
        return grid[-1]
    raise ValueError("no sign change of the curvature in beta_grid")
