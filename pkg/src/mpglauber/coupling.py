"""Coupling constructions for two Glauber chains and coalescence tails.

A run couples a chain started at a good reference configuration with a
chain started at an arbitrary configuration and proceeds in stages:

1. monotone coupling (shared site and threshold) up to ``t_n``;
2. from ``t_n`` until every partition has ``|u_i - u'_i| <= 1``: sites in
   the close partitions get a modified monotone update with respect to a
   fresh modified matching, sites in the far partitions are updated
   independently in the two chains;
3. modified monotone coupling with a matching frozen at the end of stage 2,
   until the magnetizations agree;
4. once the magnetizations agree, the post-magnetization coupling, which
   keeps them equal and drives the reference-agreement counts together.
   A partition whose counts have met is frozen by pairing sites of equal
   agreement class.

Both chains are always marginally Glauber dynamics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from .coordchain import CoordRef
from .glauber import SpinConfig, _geometry
from .partition import PartitionSpec
from .rng import UniformStream

# agreement class of a site: (spin, reference spin) -> code
#   0: (+,+)  1: (-,+)  2: (+,-)  3: (-,-)
# flipping the spin toggles the low bit
CLASS_A, CLASS_B, CLASS_C, CLASS_D = 0, 1, 2, 3


def class_code(bit: int, ref_bit: int) -> int:
    return (1 - bit) + 2 * (1 - ref_bit)


class ClassIndex:
    """Per-partition lists of sites in each agreement class, with O(1) moves."""

    __slots__ = ("cls", "lists", "pos")

    def __init__(self, spec: PartitionSpec, bits, ref_bits):
        part, _ = _geometry(spec.sizes, spec.beta)
        self.cls = bytearray(spec.n)
        self.pos = [0] * spec.n
        self.lists = [[[], [], [], []] for _ in range(spec.m)]
        for v in range(spec.n):
            c = class_code(bits[v], ref_bits[v])
            L = self.lists[part[v]][c]
            self.cls[v] = c
            self.pos[v] = len(L)
            L.append(v)

    def move(self, v: int, k: int, new_c: int):
        c = self.cls[v]
        if c == new_c:
            return
        L = self.lists[k][c]
        i = self.pos[v]
        last = L.pop()
        if last != v:
            L[i] = last
            self.pos[last] = i
        L2 = self.lists[k][new_c]
        self.pos[v] = len(L2)
        L2.append(v)
        self.cls[v] = new_c

    def counts(self, k: int) -> tuple:
        return tuple(len(L) for L in self.lists[k])

    def coords(self) -> tuple:
        """``(U_1, V_1, ..., U_m, V_m)``."""
        out = []
        for ls in self.lists:
            out += [len(ls[CLASS_A]), len(ls[CLASS_D])]
        return tuple(out)

    def pick(self, k: int, classes, rng: UniformStream) -> int:
        """Uniform site of partition ``k`` among the union of ``classes``."""
        ls = self.lists[k]
        total = 0
        for c in classes:
            total += len(ls[c])
        if total == 0:
            raise RuntimeError("no site available in the requested classes")
        j = rng.index(total)
        for c in classes:
            L = ls[c]
            if j < len(L):
                return L[j]
            j -= len(L)
        raise AssertionError("unreachable")


class CoupledPair:
    """Two configurations on the same spec plus their agreement-class indices."""

    def __init__(self, x: SpinConfig, y: SpinConfig, ref_bits=None):
        if x.spec != y.spec:
            raise ValueError("both configurations must share a PartitionSpec")
        self.spec = x.spec
        self.x, self.y = x.copy(), y.copy()
        self.ref_bits = bytearray(x.bits if ref_bits is None else ref_bits)
        self.part, self.rplus = _geometry(self.spec.sizes, self.spec.beta)
        self.cx = ClassIndex(self.spec, self.x.bits, self.ref_bits)
        self.cy = ClassIndex(self.spec, self.y.bits, self.ref_bits)

    def field_index(self, cfg: SpinConfig, k: int) -> int:
        """Index into ``rplus`` of the field felt by partition ``k``."""
        plus = cfg.plus
        return 2 * sum(plus) - (2 * plus[k] - self.spec.sizes[k])

    def set_x(self, v: int, new: int):
        if self.x.bits[v] != new:
            k = self.part[v]
            self.x.bits[v] = new
            self.x.plus[k] += 1 if new else -1
            self.cx.move(v, k, self.cx.cls[v] ^ 1)

    def set_y(self, v: int, new: int):
        if self.y.bits[v] != new:
            k = self.part[v]
            self.y.bits[v] = new
            self.y.plus[k] += 1 if new else -1
            self.cy.move(v, k, self.cy.cls[v] ^ 1)

    def mags_equal(self) -> bool:
        return self.x.plus == self.y.plus

    def partition_coalesced(self, k: int) -> bool:
        a, b = self.cx.lists[k], self.cy.lists[k]
        return len(a[CLASS_A]) == len(b[CLASS_A]) and len(a[CLASS_D]) == len(b[CLASS_D])

    def y_profile(self, weights) -> np.ndarray:
        """``Y_i = (n/2) w_i |S_i - S'_i| = w_i |u_i - u'_i|``."""
        return np.asarray(weights) * np.abs(np.array(self.x.plus) - np.array(self.y.plus))

    def check(self):
        self.x.check()
        self.y.check()
        for c, cfg in ((self.cx, self.x), (self.cy, self.y)):
            for v in range(self.spec.n):
                assert c.cls[v] == class_code(cfg.bits[v], self.ref_bits[v])


# --- modified matching ------------------------------------------------------

@dataclass
class MatchedPair:
    """Two configurations and a per-partition bijection ``f`` from sites of
    the first onto sites of the second."""

    x: SpinConfig
    y: SpinConfig
    f: list

    def is_valid(self) -> bool:
        spec = self.x.spec
        if sorted(self.f) != list(range(spec.n)):
            return False
        for o, s, ux, uy in zip(spec.offsets, spec.sizes, self.x.plus, self.y.plus):
            for v in range(o, o + s):
                w = self.f[v]
                if not o <= w < o + s:
                    return False
                # the side with fewer plus sites has all of them matched to plus sites
                if ux >= uy and self.y.bits[w] and not self.x.bits[v]:
                    return False
                if ux < uy and self.x.bits[v] and not self.y.bits[w]:
                    return False
        return True


def modified_matching(x: SpinConfig, y: SpinConfig) -> MatchedPair:
    """Per partition, match every plus site of the chain with fewer plus
    sites to a plus site of the other; leftovers are paired in ascending
    site-index order."""
    spec = x.spec
    f = [0] * spec.n
    for o, s in zip(spec.offsets, spec.sizes):
        sites = range(o, o + s)
        xp = [v for v in sites if x.bits[v]]
        yp = [v for v in sites if y.bits[v]]
        paired = min(len(xp), len(yp))
        for v, w in zip(xp[:paired], yp[:paired]):
            f[v] = w
        used_x, used_y = set(xp[:paired]), set(yp[:paired])
        for v, w in zip([v for v in sites if v not in used_x], [w for w in sites if w not in used_y]):
            f[v] = w
    return MatchedPair(x, y, f)


def modified_monotone_step(pair: MatchedPair, site: int, u: float) -> MatchedPair:
    """Update ``site`` in the first chain and its image in the second with a shared threshold.

    Each chain compares ``u`` with its own ``r_+``; when the fields differ
    the chain with the smaller field may go to -1 while the other goes to +1.
    """
    spec = pair.x.spec
    part, rplus = _geometry(spec.sizes, spec.beta)
    n = spec.n
    k = part[site]
    for cfg, v in ((pair.x, site), (pair.y, pair.f[site])):
        x = 2 * sum(cfg.plus) - n - (2 * cfg.plus[k] - spec.sizes[k])
        new = 1 if u < rplus[x + n] else 0
        if new != cfg.bits[v]:
            cfg.bits[v] = new
            cfg.plus[k] += 1 if new else -1
    return pair


# --- one-step moves on a CoupledPair ----------------------------------------

def _thr(pair: CoupledPair, cfg: SpinConfig, k: int) -> float:
    return pair.rplus[pair.field_index(cfg, k)]


def monotone_move(pair: CoupledPair, rng: UniformStream):
    """Shared site, shared threshold."""
    v = rng.index(pair.spec.n)
    u = rng.uniform()
    k = pair.part[v]
    tx, ty = _thr(pair, pair.x, k), _thr(pair, pair.y, k)
    pair.set_x(v, 1 if u < tx else 0)
    pair.set_y(v, 1 if u < ty else 0)


def matched_site(pair: CoupledPair, v: int, rng: UniformStream) -> int:
    """Image of ``v`` under a modified matching drawn uniformly at random.

    Only the image of the chosen site is sampled; the law of the image is
    that of a uniformly random valid modified matching, which is uniform
    over the partition in the second chain.
    """
    k = pair.part[v]
    ux, uy = pair.x.plus[k], pair.y.plus[k]
    size = pair.spec.sizes[k]
    plus_cls, minus_cls = (CLASS_A, CLASS_C), (CLASS_B, CLASS_D)
    if pair.x.bits[v]:
        if ux <= uy:
            to_plus = True
        else:
            to_plus = rng.uniform() * ux < uy
    else:
        if ux >= uy:
            to_plus = False
        else:
            to_plus = rng.uniform() * (size - ux) < (uy - ux)
    return pair.cy.pick(k, plus_cls if to_plus else minus_cls, rng)


def close_far_move(pair: CoupledPair, rng: UniformStream, far: Sequence[int]):
    """Stage-2 step; ``far`` lists partitions with ``|u_i - u'_i| > 1``."""
    spec = pair.spec
    v = rng.index(spec.n)
    u = rng.uniform()
    k = pair.part[v]
    if k not in far:
        w = matched_site(pair, v, rng)
        tx, ty = _thr(pair, pair.x, k), _thr(pair, pair.y, k)
        pair.set_x(v, 1 if u < tx else 0)
        pair.set_y(w, 1 if u < ty else 0)
        return
    tx = _thr(pair, pair.x, k)
    # independent site over the far partitions of the second chain
    sizes, offsets = spec.sizes, spec.offsets
    total = sum(sizes[i] for i in far)
    j = rng.index(total)
    for i in far:
        if j < sizes[i]:
            w, kw = offsets[i] + j, i
            break
        j -= sizes[i]
    uw = rng.uniform()
    ty = _thr(pair, pair.y, kw)
    pair.set_x(v, 1 if u < tx else 0)
    pair.set_y(w, 1 if uw < ty else 0)


def fixed_matching_move(pair: CoupledPair, f: list, rng: UniformStream):
    v = rng.index(pair.spec.n)
    u = rng.uniform()
    k = pair.part[v]
    tx, ty = _thr(pair, pair.x, k), _thr(pair, pair.y, k)
    pair.set_x(v, 1 if u < tx else 0)
    pair.set_y(f[v], 1 if u < ty else 0)


def post_mag_move(pair: CoupledPair, rng: UniformStream, frozen: list):
    """Equal-magnetization step: the second chain copies the new spin onto
    a uniformly chosen site of the same spin (or, in a frozen partition,
    of the same agreement class)."""
    v = rng.index(pair.spec.n)
    u = rng.uniform()
    k = pair.part[v]
    new = 1 if u < _thr(pair, pair.x, k) else 0
    if frozen[k]:
        w = pair.cy.pick(k, (pair.cx.cls[v],), rng)
    else:
        w = pair.cy.pick(k, (CLASS_A, CLASS_C) if pair.x.bits[v] else (CLASS_B, CLASS_D), rng)
    pair.set_x(v, new)
    pair.set_y(w, new)
    return k


# --- R-drift --------------------------------------------------------------

def _frac(num, den):
    return num / den if den else 0.0


def r_hit_probs(tu: int, tv: int, U: int, V: int, R: int, n: int, rp: float, rm: float) -> tuple:
    """One-step probabilities ``(a, b)`` that ``R = U' - U`` moves by -1 and +1.

    The state is the unprimed ``(U, V)`` of one partition, the offset ``R``
    (so ``U' = U + R``, ``V' = V + R``), the reference counts and the
    one-site update probabilities ``rp``/``rm`` under the shared field.
    """
    a = (_frac(tu - U, n) * _frac(V + R, tu - U + V) * rp
         + _frac(tv - V, n) * _frac(U + R, tv - V + U) * rm)
    b = (_frac(U, n) * _frac(tv - V - R, U + tv - V) * rm
         + _frac(V, n) * _frac(tu - U - R, tu - U + V) * rp)
    return a, b


def in_theta(tu: int, tv: int, U: int, V: int) -> bool:
    """All four class sizes are at least a sixteenth of the partition."""
    size = tu + tv
    return 16 * min(U, tu - U, V, tv - V) >= size


# --- runs -----------------------------------------------------------------

@dataclass
class CouplingRecord:
    """Outcome of one coupled run; ``None`` marks a time beyond ``t_max``."""

    tau_mag: int | None
    tau_i_c: list
    tau_tot: int | None
    t_max: int
    phases: list = field(default_factory=list)
    y_log: list | None = None
    pair: "CoupledPair | None" = field(default=None, repr=False)

    @property
    def censored(self) -> bool:
        return self.tau_tot is None


def cutoff_steps(spec: PartitionSpec, upsilon: float) -> int:
    """``t_n`` rounded up to a whole step."""
    return math.ceil(spec.cutoff_time(upsilon))


def _as_config(spec, start):
    if isinstance(start, SpinConfig):
        return start.copy()
    if start == "all-plus":
        return SpinConfig.all_plus(spec)
    if start == "all-minus":
        return SpinConfig.all_minus(spec)
    return SpinConfig.from_counts(spec, start)


def _post_mag(pair, rng, t, t_max, rec):
    m = pair.spec.m
    frozen = [False] * m
    tau = [None] * m
    for k in range(m):
        if pair.partition_coalesced(k):
            frozen[k], tau[k] = True, t
    remaining = m - sum(frozen)
    while remaining and t < t_max:
        k = post_mag_move(pair, rng, frozen)
        t += 1
        if not frozen[k] and pair.partition_coalesced(k):
            frozen[k], tau[k] = True, t
            remaining -= 1
    rec.tau_i_c = tau
    rec.tau_tot = t if remaining == 0 else None
    return rec


def _mag_phases(pair, rng, weights, t_n, t_max, rec, log_y):
    """Stages 1-3; returns the time at which the magnetizations agree (or ``t_max``)."""
    t = 0
    if pair.mags_equal():
        return t
    rec.phases.append(("monotone", 0))
    while t < min(t_n, t_max):
        monotone_move(pair, rng)
        t += 1
        if pair.mags_equal():
            return t
    if t >= t_max:
        return t
    rec.phases.append(("close-far", t))
    m = pair.spec.m
    while t < t_max:
        far = [i for i in range(m) if abs(pair.x.plus[i] - pair.y.plus[i]) > 1]
        if not far:
            break
        if log_y:
            rec.y_log.append((t, float(pair.y_profile(weights).sum())))
        close_far_move(pair, rng, far)
        t += 1
        if pair.mags_equal():
            return t
    if t >= t_max:
        return t
    rec.phases.append(("fixed-matching", t))
    f = modified_matching(pair.x, pair.y).f
    while t < t_max:
        fixed_matching_move(pair, f, rng)
        t += 1
        if pair.mags_equal():
            return t
    return t


def mag_coupling_run(x, y, spec: PartitionSpec, sd, t_max: int, seed: int, replica: int = 0,
                     ref_bits=None, log_y: bool = False) -> CouplingRecord:
    """Run stages 1-3 until the magnetizations agree or ``t_max`` is reached."""
    if spec.beta >= sd.beta_cr:
        warnings.warn("magnetization coupling is only contractive for beta < beta_cr", RuntimeWarning)
    pair = CoupledPair(_as_config(spec, x), _as_config(spec, y), ref_bits)
    rng = UniformStream(seed, replica, 1)
    rec = CouplingRecord(None, [None] * spec.m, None, t_max, y_log=[] if log_y else None)
    t = _mag_phases(pair, rng, sd.a, cutoff_steps(spec, sd.upsilon), t_max, rec, log_y)
    rec.tau_mag = t if pair.mags_equal() else None
    rec.pair = pair
    return rec


def post_mag_coupling_run(x0, y0, ref_bits, t_max: int, seed: int, replica: int = 0) -> CouplingRecord:
    """Post-magnetization coupling from two configurations with equal magnetizations."""
    spec = x0.spec
    pair = CoupledPair(x0, y0, ref_bits)
    if not pair.mags_equal():
        raise ValueError("post-magnetization coupling needs equal magnetizations")
    rng = UniformStream(seed, replica, 2)
    rec = CouplingRecord(0, [None] * spec.m, None, t_max, phases=[("post-mag", 0)])
    _post_mag(pair, rng, 0, t_max, rec)
    rec.pair = pair
    return rec


def coupled_run(spec: PartitionSpec, sd, t_max: int, seed: int, replica: int = 0,
                ref: CoordRef | None = None, adversary="all-minus", log_y: bool = False) -> CouplingRecord:
    """Full run from the reference configuration against ``adversary``."""
    ref = CoordRef.balanced(spec) if ref is None else ref
    ref_bits = ref.config_bits(spec)
    x = SpinConfig(spec, ref_bits)
    pair = CoupledPair(x, _as_config(spec, adversary), ref_bits)
    rng = UniformStream(seed, replica, 0)
    rec = CouplingRecord(None, [None] * spec.m, None, t_max, y_log=[] if log_y else None)
    t = _mag_phases(pair, rng, sd.a, cutoff_steps(spec, sd.upsilon), t_max, rec, log_y)
    if pair.mags_equal():
        rec.tau_mag = t
        rec.phases.append(("post-mag", t))
        _post_mag(pair, rng, t, t_max, rec)
    rec.pair = pair
    return rec


def run_couplings(spec: PartitionSpec, sd, t_max: int, replicas: int, seed: int, **kw) -> list:
    if spec.beta >= sd.beta_cr:
        warnings.warn("coupling tails are only meaningful for beta < beta_cr", RuntimeWarning)
    out = []
    for r in range(replicas):
        rec = coupled_run(spec, sd, t_max, seed, r, **kw)
        rec.pair = None
        out.append(rec)
    return out


# --- tails ----------------------------------------------------------------

def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple:
    """Exact binomial confidence interval for ``k`` successes in ``n`` trials."""
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(beta_dist.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass
class TailPoint:
    t: int
    p_tail: float
    ci_lo: float
    ci_hi: float
    exceed: int
    total: int


def tail_curve(taus: Sequence, t_max: int, t_grid: Sequence[int], level: float = 0.95) -> list:
    """Empirical ``P(tau > t)`` with exact binomial intervals.

    ``None`` entries are runs censored at ``t_max``; they count as
    exceeding every ``t < t_max``. Grid points at or beyond ``t_max`` are
    dropped because the tail is not identified there.
    """
    out = []
    total = len(taus)
    for t in t_grid:
        if t >= t_max:
            continue
        k = sum(1 for tau in taus if tau is None or tau > t)
        lo, hi = clopper_pearson(k, total, level)
        out.append(TailPoint(int(t), k / total, lo, hi, k, total))
    return out


def upper_bound_curve(spec: PartitionSpec, sd, t_grid: Sequence[int], replicas: int, seed: int,
                      t_max: int | None = None, records: list | None = None, **kw) -> list:
    """Empirical tail of the full coalescence time, an upper-bound estimator for ``d_n(t)``."""
    t_max = int(max(t_grid)) + 1 if t_max is None else t_max
    if records is None:
        records = run_couplings(spec, sd, t_max, replicas, seed, **kw)
    return tail_curve([r.tau_tot for r in records], t_max, t_grid)


def mag_tail_profile(records: Sequence[CouplingRecord], t_n: int, n: int, gammas: Sequence[float]) -> list:
    """``(gamma, P(tau_mag > t_n + gamma n), sqrt(gamma) * P)`` rows."""
    out = []
    for g in gammas:
        t = t_n + g * n
        k = sum(1 for r in records if r.tau_mag is None or r.tau_mag > t)
        p = k / len(records)
        out.append((g, p, math.sqrt(g) * p))
    return out


def write_coupling_csv(fh, records: Sequence[CouplingRecord], header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    fh.write("replica,tau_mag,tau_tot,censored\n")
    for r, rec in enumerate(records):
        tm = "inf" if rec.tau_mag is None else str(rec.tau_mag)
        tt = "inf" if rec.tau_tot is None else str(rec.tau_tot)
        fh.write(f"{r},{tm},{tt},{int(rec.censored)}\n")


def write_tail_csv(fh, points: Sequence[TailPoint], header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    fh.write("t,p_tail,ci_lo,ci_hi\n")
    for p in points:
        fh.write(f"{p.t},{p.p_tail!r},{p.ci_lo!r},{p.ci_hi!r}\n")
