"""Contraction matrix, Perron data and the critical inverse temperature.

The matrix governing one-step contraction of per-partition Hamming
distances under the monotone coupling is

    A = (1 - 1/n) I + (beta / n) M,    M = p 1^T - diag(p),

so everything of interest follows from the n-free matrix ``M``. ``M`` is
similar to the symmetric matrix ``C0 = D^{-1} M D`` with ``D = diag(sqrt p)``
(off-diagonal entries ``sqrt(p_i p_j)``), whose top eigenpair we obtain by
shifted power iteration. A bisection on the secular equation
``sum_j p_j / (lam + p_j) = 1`` gives an independent value of the root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .partition import PartitionSpec


class ConvergenceError(RuntimeError):
    pass


def build_matrix(spec: PartitionSpec) -> np.ndarray:
    """Return the m x m contraction matrix A for ``spec``.

    Diagonal entries are ``1 - 1/n``; row ``k`` has off-diagonal entries
    ``p_k beta / n``.
    """
    n, m = spec.n, spec.m
    p = spec.p_float
    A = np.repeat((p * spec.beta / n)[:, None], m, axis=1)
    np.fill_diagonal(A, 1.0 - 1.0 / n)
    return A


def interaction_matrix(p) -> np.ndarray:
    """The n-free matrix ``p 1^T - diag(p)``."""
    p = np.asarray(p, dtype=float)
    M = np.repeat(p[:, None], len(p), axis=1)
    np.fill_diagonal(M, 0.0)
    return M


def symmetric_interaction(p) -> np.ndarray:
    """``D^{-1} M D`` with ``D = diag(sqrt p)``: off-diagonals ``sqrt(p_i p_j)``."""
    p = np.asarray(p, dtype=float)
    s = np.sqrt(p)
    C = np.outer(s, s)
    np.fill_diagonal(C, 0.0)
    return C


def power_iteration(B, x0=None, tol=1e-14, max_iter=100_000):
    """Dominant eigenpair of a symmetric positive semi-definite matrix.

    Stops once the Rayleigh quotient changes by at most ``tol`` and the
    residual ``||Bx - rho x||`` is below ``10 * tol * max(1, ||B||)``.
    """
    B = np.asarray(B, dtype=float)
    m = B.shape[0]
    x = np.ones(m) if x0 is None else np.array(x0, dtype=float)
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        raise ValueError("starting vector must be non-zero")
    x /= nrm
    scale = max(1.0, float(np.abs(B).sum(axis=1).max()))
    rho_old = np.inf
    for it in range(1, max_iter + 1):
        y = B @ x
        rho = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, x, it
        resid = np.linalg.norm(y - rho * x)
        if abs(rho - rho_old) <= tol * scale and resid <= 10 * tol * scale:
            return rho, x, it
        rho_old = rho
        x = y / ny
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def symmetric_spectrum(C, shift: float, tol=1e-14, max_iter=100_000):
    """All eigenpairs of a small symmetric matrix by power iteration with deflation.

    ``shift`` must make ``C + shift I`` positive semi-definite. Returns
    eigenvalues in descending order and the matching orthonormal vectors
    as columns.
    """
    C = np.asarray(C, dtype=float)
    m = C.shape[0]
    B = C + shift * np.eye(m)
    vals, vecs = [], []
    rng = np.random.default_rng(0)
    for k in range(m):
        x0 = np.ones(m) if k == 0 else rng.standard_normal(m)
        for v in vecs:
            x0 -= (v @ x0) * v
        rho, x, _ = power_iteration(B, x0, tol=tol, max_iter=max_iter)
        for v in vecs:  # re-orthogonalise against rounding drift
            x -= (v @ x) * v
        x /= np.linalg.norm(x)
        rho = float(x @ (B @ x))
        vals.append(rho - shift)
        vecs.append(x)
        B = B - rho * np.outer(x, x)
    return np.array(vals), np.column_stack(vecs)


def secular_root(p, tol=0.0) -> float:
    """Root of ``sum_j p_j / (lam + p_j) = 1`` on ``[0, 1]`` by bisection.

    The left side is strictly decreasing in ``lam``; for a single
    partition the root is 0.
    """
    p = np.asarray(p, dtype=float)
    if len(p) == 1:
        return 0.0

    def h(lam):
        return float(np.sum(p / (lam + p))) - 1.0

    lo, hi = 0.0, 1.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= tol:
            return mid
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid


@dataclass(frozen=True)
class SpectralData:
    """Perron data of the contraction matrix.

    Attributes
    ----------
    lam : float
        Perron root of ``p 1^T - diag(p)``.
    g : float
        Perron root of ``A``, ``1 - 1/n + beta lam / n``.
    a : ndarray
        Positive left Perron vector of ``A``, l1-normalised.
    upsilon : float
        ``n (1 - g) = 1 - beta / beta_cr``.
    beta_cr : float
        Critical inverse temperature, ``math.inf`` for a single partition.
    spectrum : ndarray
        All eigenvalues of the n-free matrix, descending.
    """

    lam: float
    g: float
    a: np.ndarray = field(repr=False)
    upsilon: float
    beta_cr: float
    spectrum: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("a", "spectrum"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "g": self.g,
            "a": [float(x) for x in self.a],
            "upsilon": self.upsilon,
            "beta_cr": "inf" if math.isinf(self.beta_cr) else self.beta_cr,
        }


def perron(spec: PartitionSpec, tol=1e-14, max_iter=100_000) -> SpectralData:
    """Perron root, left eigenvector, upsilon and beta_cr for ``spec``.

    The eigenproblem is solved once on the symmetric n-free matrix; ``a``
    is therefore independent of n and beta.
    """
    p = spec.p_float
    m = spec.m
    if m == 1:
        lam, a, spectrum = 0.0, np.ones(1), np.zeros(1)
    else:
        C = symmetric_interaction(p)
        spectrum, vecs = symmetric_spectrum(C, shift=float(p.max()), tol=tol, max_iter=max_iter)
        lam = float(spectrum[0])
        x = vecs[:, 0]
        x = x if x.sum() > 0 else -x
        a = x / np.sqrt(p)
        a = a / a.sum()
    # upsilon = n(1-g) evaluated without cancellation
    upsilon = 1.0 - spec.beta * lam
    g = 1.0 - upsilon / spec.n
    ap = float(a @ p)
    beta_cr = math.inf if m == 1 else 1.0 / ((m - 1) * ap)
    return SpectralData(lam=lam, g=g, a=a, upsilon=upsilon, beta_cr=beta_cr, spectrum=spectrum)


@dataclass
class IdentityReport:
    """Residuals of the Perron-data identities, keyed by name."""

    residuals: dict
    tol: float
    extra: dict = field(default_factory=dict)

    @property
    def failures(self) -> list:
        return [k for k, r in self.residuals.items() if not (r <= self.tol)]

    @property
    def ok(self) -> bool:
        return not self.failures

    def __str__(self):
        lines = [f"{k:>22s}  {r:.3e}  {'ok' if r <= self.tol else 'FAIL'}" for k, r in self.residuals.items()]
        return "\n".join(lines)


def verify_identities(sd: SpectralData, spec: PartitionSpec, tol: float = 1e-10) -> IdentityReport:
    """Evaluate the identities linking ``a``, ``g``, upsilon and beta_cr.

    Each residual is zero in exact arithmetic. A positive residual for the
    one-sided checks measures the violation.
    """
    p = spec.p_float
    m, beta, n = spec.m, spec.beta, spec.n
    a = np.asarray(sd.a)
    ap = float(a @ p)
    res = {}

    res["a_sorted_normalized"] = max(
        float(np.max(np.maximum(np.diff(a), 0.0), initial=0.0)),
        abs(float(a.sum()) - 1.0),
        float(max(0.0, -a.min())),
    )
    equal_p = bool(np.all(p == p[0]))
    slack = 1.0 / m - ap
    res["chebyshev_sum"] = abs(slack) if equal_p else max(0.0, -slack)

    ups_formula = 1.0 - beta * (m - 1) * ap
    ups_ratio = 1.0 if math.isinf(sd.beta_cr) else 1.0 - beta / sd.beta_cr
    ups_from_g = n * (1.0 - sd.g)
    res["upsilon_formula"] = max(abs(sd.upsilon - ups_formula), abs(sd.upsilon - ups_ratio),
                                 abs(sd.upsilon - ups_from_g))

    balance = (beta * p + 1.0 - sd.upsilon) * a
    res["eigen_balance"] = float(balance.max() - balance.min())

    denom = ap**2 - float((a**2) @ (p**2))
    numer = float((a**2) @ p)
    if math.isinf(sd.beta_cr):
        res["beta_cr_ratio"] = 0.0 if abs(denom) <= tol else abs(denom)
    else:
        res["beta_cr_ratio"] = abs(numer / denom - sd.beta_cr) / sd.beta_cr

    # A a-row check independent of the eigen-solver: a^T A = g a^T
    A = build_matrix(spec)
    res["left_eigenvector"] = float(np.abs(a @ A - sd.g * a).max())

    # K = n(I - A) = I - beta M is positive definite iff beta < beta_cr
    k_eigs = 1.0 - beta * np.asarray(sd.spectrum)
    k_pd = bool(np.all(k_eigs > 0))
    below = beta < sd.beta_cr
    extra = {"k_positive_definite": k_pd, "beta_below_critical": below, "k_min_eigenvalue": float(k_eigs.min())}
    res["k_definiteness"] = 0.0 if (k_pd == below or abs(beta - sd.beta_cr) < 1e-12) else 1.0
    return IdentityReport(res, tol, extra)


@dataclass(frozen=True)
class NormBound:
    lhs: float
    rhs: float
    components: np.ndarray
    component_bounds: np.ndarray

    def holds(self, tol: float = 1e-12) -> bool:
        return self.lhs <= self.rhs + tol and bool(np.all(self.components <= self.component_bounds + tol))


def norm_bound_check(sd: SpectralData, spec: PartitionSpec, s, t: int) -> NormBound:
    """Compare ``||A^t s||_1`` with ``g^t sqrt(sum s_i^2 / p_i)``.

    Also returns the components ``e_j^T A^t s`` next to their bounds
    ``sqrt(p_j)`` times the right-hand side.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    p = spec.p_float
    s = np.asarray(s, dtype=float)
    if s.shape != p.shape or np.any(s < 0) or np.any(s > p + 1e-15):
        raise ValueError("s must satisfy 0 <= s <= p componentwise")
    A = build_matrix(spec)
    x = s.copy()
    for _ in range(t):
        x = A @ x
    rhs = sd.g**t * math.sqrt(float(np.sum(s**2 / p)))
    return NormBound(float(np.abs(x).sum()), rhs, x, np.sqrt(p) * rhs)
