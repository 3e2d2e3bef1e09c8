import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from mpglauber.coordchain import CoordRef, brute_kernel, config_index
from mpglauber.coupling import (
    CoupledPair,
    MatchedPair,
    clopper_pearson,
    close_far_move,
    coupled_run,
    cutoff_steps,
    fixed_matching_move,
    in_theta,
    mag_coupling_run,
    mag_tail_profile,
    matched_site,
    modified_matching,
    modified_monotone_step,
    monotone_move,
    post_mag_coupling_run,
    post_mag_move,
    r_hit_probs,
    run_couplings,
    tail_curve,
    upper_bound_curve,
    write_coupling_csv,
    write_tail_csv,
)
from mpglauber.glauber import SpinConfig
from mpglauber.partition import PartitionSpec
from mpglauber.rng import UniformStream
from mpglauber.spectral import perron


def bits_of(spec, pattern):
    return SpinConfig(spec, bytes(int(c) for c in pattern))


# --- modified matching -------------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(
    xb=st.lists(st.booleans(), min_size=12, max_size=12),
    yb=st.lists(st.booleans(), min_size=12, max_size=12),
)
def test_modified_matching_is_valid(xb, yb):
    spec = PartitionSpec.parse("1/4,1/4,1/2", 12, 1.0)
    x, y = SpinConfig(spec, bytes(xb)), SpinConfig(spec, bytes(yb))
    mp = modified_matching(x, y)
    assert mp.is_valid()


def test_matching_validity_rejects_bad_maps():
    spec = PartitionSpec.equal(2, 4, 1.0)
    x, y = bits_of(spec, "1000"), bits_of(spec, "0100")
    assert not MatchedPair(x, y, [2, 1, 0, 3]).is_valid()  # leaves its partition
    assert not MatchedPair(x, y, [0, 1, 2, 3]).is_valid()  # plus site sent to minus site
    assert MatchedPair(x, y, [1, 0, 2, 3]).is_valid()


def test_equal_counts_give_spin_preserving_matching():
    spec = PartitionSpec.parse("1/3,2/3", 9, 1.0)
    x, y = bits_of(spec, "110101100"), bits_of(spec, "011110010")
    mp = modified_matching(x, y)
    assert x.plus == y.plus
    assert all(x.bits[v] == y.bits[mp.f[v]] for v in range(9))


def test_modified_monotone_step_keeps_order_under_matching():
    spec = PartitionSpec.equal(2, 8, 1.0)
    rng = UniformStream(3)
    for _ in range(200):
        x, y = SpinConfig.all_minus(spec), SpinConfig.from_counts(spec, [2, 3])
        for _ in range(30):
            mp = modified_matching(x, y)
            modified_monotone_step(mp, rng.index(8), rng.uniform())
            for xp, yp in zip(x.plus, y.plus):
                assert xp <= yp + 1


def test_equal_configurations_match_plus_to_plus():
    spec = PartitionSpec.parse("1/3,2/3", 9, 1.0)
    x = bits_of(spec, "101011010")
    mp = modified_matching(x, x.copy())
    assert all(x.bits[mp.f[v]] == 1 for v in range(9) if x.bits[v])


def test_extreme_pair_matches_in_index_order():
    spec = PartitionSpec.parse("1/4,3/4", 8, 1.0)
    mp = modified_matching(SpinConfig.all_plus(spec), SpinConfig.all_minus(spec))
    assert mp.f == list(range(8))


def test_equal_fields_update_identically():
    spec = PartitionSpec.equal(2, 8, 1.2)
    rng = UniformStream(5)
    for _ in range(300):
        x, y = bits_of(spec, "11000110"), bits_of(spec, "01010011")
        assert x.plus == y.plus
        mp = modified_matching(x, y)
        v = rng.index(8)
        before = (x.bits[v], y.bits[mp.f[v]])
        modified_monotone_step(mp, v, rng.uniform())
        assert x.bits[v] == y.bits[mp.f[v]] or before[0] != before[1]
        assert x.plus == y.plus


# --- one-step moves: marginals are Glauber kernels ---------------------------

def _flip_site(before, after):
    diff = [v for v in range(len(before)) if before[v] != after[v]]
    assert len(diff) <= 1
    return diff[0] if diff else -1


def _row(spec, cfg):
    """Kernel row of the full chain at ``cfg`` as ``[P(flip v) ..., P(hold)]``."""
    spins = cfg.spins
    K = brute_kernel(spec)
    i = config_index(spins)
    return np.array([K[i, i ^ (1 << v)] for v in range(spec.n)] + [K[i, i]])


def _check_marginals(spec, x, y, ref_bits, move, N=100_000, seed=0):
    rng = UniformStream(seed)
    cx = np.zeros(spec.n + 1)
    cy = np.zeros(spec.n + 1)
    for _ in range(N):
        pair = CoupledPair(x, y, ref_bits)
        move(pair, rng)
        cx[_flip_site(x.bits, pair.x.bits)] += 1
        cy[_flip_site(y.bits, pair.y.bits)] += 1
    for counts, cfg in ((cx, x), (cy, y)):
        expected = _row(spec, cfg) * N
        keep = expected > 0
        assert counts[~keep].sum() == 0
        assert chisquare(counts[keep], expected[keep]).pvalue > 1e-4


SPEC10 = PartitionSpec.equal(2, 10, 1.5)


def test_monotone_move_marginals():
    x, y = bits_of(SPEC10, "1110010000"), bits_of(SPEC10, "0000011111")
    _check_marginals(SPEC10, x, y, None, monotone_move, seed=1)


def test_close_far_move_marginals():
    x, y = bits_of(SPEC10, "1111101000"), bits_of(SPEC10, "1000000110")
    far = [i for i in range(2) if abs(x.plus[i] - y.plus[i]) > 1]
    assert far == [0]
    _check_marginals(SPEC10, x, y, None, lambda p, r: close_far_move(p, r, far), seed=2)


def test_close_far_move_all_close_marginals():
    x, y = bits_of(SPEC10, "1101001100"), bits_of(SPEC10, "0111010100")
    _check_marginals(SPEC10, x, y, None, lambda p, r: close_far_move(p, r, []), seed=3)


def test_fixed_matching_move_marginals():
    x, y = bits_of(SPEC10, "1100010000"), bits_of(SPEC10, "0010111100")
    f = modified_matching(x, y).f
    _check_marginals(SPEC10, x, y, None, lambda p, r: fixed_matching_move(p, f, r), seed=4)


@pytest.mark.parametrize("frozen", [[False, False], [True, False]])
def test_post_mag_move_marginals(frozen):
    ref = bits_of(SPEC10, "1110011100").bits
    x, y = bits_of(SPEC10, "1100111000"), bits_of(SPEC10, "0110101010")
    if frozen[0]:
        y = bits_of(SPEC10, "1010101010")
        pair = CoupledPair(x, y, ref)
        assert pair.partition_coalesced(0)
    assert x.plus == y.plus
    _check_marginals(SPEC10, x, y, ref, lambda p, r: post_mag_move(p, r, frozen), seed=5)


def test_matched_site_image_is_uniform():
    spec = PartitionSpec.equal(2, 12, 1.0)
    x, y = bits_of(spec, "111100" + "000000"), bits_of(spec, "110000" + "000000")
    rng = UniformStream(6)
    pair = CoupledPair(x, y)
    counts = np.zeros(6)
    N = 30000
    for _ in range(N):
        v = rng.index(6)
        w = matched_site(pair, v, rng)
        assert 0 <= w < 6
        # x has more plus sites: every y plus site must receive a plus site
        if not x.bits[v]:
            assert not y.bits[w]
        counts[w] += 1
    assert chisquare(counts).pvalue > 1e-4


# --- coupling behaviour --------------------------------------------------------

def test_discordance_probability():
    beta = 1.2
    spec = PartitionSpec.equal(2, 20, beta)
    # identical in partition 0, different in partition 1
    x = SpinConfig.from_counts(spec, [5, 10])
    y = SpinConfig.from_counts(spec, [5, 2])
    Fx = x.magnetization()[1]
    Fy = y.magnetization()[1]
    expected = 0.5 * (10 / 20) * abs(math.tanh(beta * Fx) - math.tanh(beta * Fy))
    rng = UniformStream(7)
    N = 40000
    hits = 0
    for _ in range(N):
        pair = CoupledPair(x, y)
        monotone_move(pair, rng)
        hits += any(pair.x.bits[v] != pair.y.bits[v] for v in range(10))
    se = math.sqrt(expected * (1 - expected) / N)
    assert abs(hits / N - expected) <= 4 * se


def test_coalesced_pairs_stay_coalesced():
    spec = PartitionSpec.parse("1/4,3/4", 16, 2.0)
    x = SpinConfig.from_counts(spec, [1, 7])
    pair = CoupledPair(x, x)
    rng = UniformStream(8)
    for _ in range(2000):
        monotone_move(pair, rng)
        assert pair.x == pair.y
    pair.check()


def test_equal_starts_give_zero_times():
    spec = PartitionSpec.equal(2, 16, 1.0)
    sd = perron(spec)
    x = SpinConfig.from_counts(spec, [3, 5])
    rec = mag_coupling_run(x, x, spec, sd, 100, seed=1)
    assert rec.tau_mag == 0
    ref = CoordRef.balanced(spec)
    rec = coupled_run(spec, sd, 100, seed=1, ref=ref, adversary=list(ref.tilde_u))
    assert rec.tau_mag == 0 and rec.tau_tot == 0 and rec.tau_i_c == [0, 0]
    rec = post_mag_coupling_run(x, x, x.bits, 100, seed=1)
    assert rec.tau_i_c == [0, 0] and rec.tau_tot == 0


def test_post_mag_requires_equal_magnetizations():
    spec = PartitionSpec.equal(2, 8, 1.0)
    with pytest.raises(ValueError):
        post_mag_coupling_run(SpinConfig.all_plus(spec), SpinConfig.all_minus(spec), None, 10, seed=0)


def test_post_mag_keeps_magnetizations_equal_and_coalesces():
    spec = PartitionSpec.parse("1/4,3/4", 32, 1.0)
    ref = CoordRef.balanced(spec).config_bits(spec)
    x = SpinConfig(spec, ref)
    y = SpinConfig.from_counts(spec, x.plus)
    y.bits[:8] = y.bits[:8][::-1]
    y.bits[8:] = y.bits[8:][::-1]
    y = SpinConfig(spec, y.bits)
    assert x.plus == y.plus
    pair = CoupledPair(x, y, ref)
    rng = UniformStream(9)
    frozen = [pair.partition_coalesced(k) for k in range(2)]
    for _ in range(20000):
        k = post_mag_move(pair, rng, frozen)
        assert pair.mags_equal()
        if pair.partition_coalesced(k):
            frozen[k] = True
        if all(frozen):
            break
    assert all(frozen)
    pair.check()
    rec = post_mag_coupling_run(x, y, ref, 10**6, seed=2)
    assert rec.tau_tot is not None and rec.tau_tot == max(rec.tau_i_c)


def test_r_drift_identity():
    gen = np.random.default_rng(0)
    for _ in range(1000):
        tu, tv = gen.integers(1, 40, size=2)
        U, V = gen.integers(0, tu + 1), gen.integers(0, tv + 1)
        lo, hi = max(-U, -V), min(tu - U, tv - V)
        R = gen.integers(lo, hi + 1)
        n = int(tu + tv + gen.integers(0, 50))
        rp = gen.uniform()
        a, b = r_hit_probs(int(tu), int(tv), int(U), int(V), int(R), n, rp, 1 - rp)
        assert abs((b - a) + R / n) <= 1e-14
        assert a >= 0 and b >= 0


def test_r_moves_on_theta_states():
    gen = np.random.default_rng(1)
    checked = 0
    while checked < 1000:
        size = int(gen.integers(16, 200))
        n = size * int(gen.integers(1, 5))
        tu = int(gen.integers(math.ceil(size / 4), size - math.ceil(size / 4) + 1))
        tv = size - tu
        U, V = int(gen.integers(0, tu + 1)), int(gen.integers(0, tv + 1))
        R = int(gen.integers(-size, size + 1))
        if not (in_theta(tu, tv, U, V) and 0 <= U + R <= tu and 0 <= V + R <= tv
                and in_theta(tu, tv, U + R, V + R)):
            continue
        rp = gen.uniform()
        _, b = r_hit_probs(tu, tv, U, V, R, n, rp, 1 - rp)
        assert b >= (size / n) / 352
        checked += 1


def test_stage_two_weighted_gap_is_supermartingale():
    for p, plus_x, plus_y in [("1/2,1/2", [20, 16], [12, 15]),
                              ("1/2,1/2", [22, 10], [12, 16]),
                              ("1/4,3/4", [12, 30], [4, 31])]:
        spec = PartitionSpec.parse(p, 64, 1.0)
        sd = perron(spec)
        x, y = SpinConfig.from_counts(spec, plus_x), SpinConfig.from_counts(spec, plus_y)
        far = [i for i in range(2) if abs(plus_x[i] - plus_y[i]) > 1]
        Y0 = float(CoupledPair(x, y).y_profile(sd.a).sum())
        rng = UniformStream(10)
        N = 20000
        vals = np.empty(N)
        for j in range(N):
            pair = CoupledPair(x, y)
            close_far_move(pair, rng, far)
            vals[j] = pair.y_profile(sd.a).sum()
        se = vals.std(ddof=1) / math.sqrt(N)
        assert vals.mean() <= sd.g * Y0 + 4 * se, (p, vals.mean(), sd.g * Y0)


def test_coupled_run_is_reproducible_and_phased():
    spec = PartitionSpec.equal(2, 64, 1.0)
    sd = perron(spec)
    a = coupled_run(spec, sd, 10**5, seed=5, replica=3)
    b = coupled_run(spec, sd, 10**5, seed=5, replica=3)
    assert (a.tau_mag, a.tau_tot, a.tau_i_c) == (b.tau_mag, b.tau_tot, b.tau_i_c)
    assert a.tau_mag <= a.tau_tot
    names = [ph for ph, _ in a.phases]
    assert names[0] == "monotone" and names[-1] == "post-mag"
    a.pair.check()
    assert a.pair.x == a.pair.y or all(a.pair.partition_coalesced(k) for k in range(2))


def test_censoring_marks_infinity():
    spec = PartitionSpec.equal(2, 64, 1.0)
    sd = perron(spec)
    rec = coupled_run(spec, sd, 5, seed=0)
    assert rec.censored and rec.tau_tot is None and rec.tau_mag is None
    buf = io.StringIO()
    write_coupling_csv(buf, [rec], ["h"])
    assert buf.getvalue() == "# h\nreplica,tau_mag,tau_tot,censored\n0,inf,inf,1\n"


def test_tail_goes_to_zero_and_starts_near_one():
    spec = PartitionSpec.equal(2, 128, 1.0)
    sd = perron(spec)
    t_n = cutoff_steps(spec, sd.upsilon)
    recs = run_couplings(spec, sd, 40 * t_n, 100, seed=12)
    pts = tail_curve([r.tau_tot for r in recs], 40 * t_n, [t_n // 2, 39 * t_n])
    assert pts[0].p_tail >= 0.9
    assert pts[1].p_tail == 0.0
    curve = upper_bound_curve(spec, sd, [t_n // 2, t_n, 2 * t_n], 100, 12, t_max=40 * t_n, records=recs)
    vals = [p.p_tail for p in curve]
    assert vals == sorted(vals, reverse=True)


def test_mag_tail_profile_columns():
    spec = PartitionSpec.equal(2, 64, 1.0)
    sd = perron(spec)
    recs = run_couplings(spec, sd, 10**5, 30, seed=1)
    t_n = cutoff_steps(spec, sd.upsilon)
    rows = mag_tail_profile(recs, t_n, 64, [0, 1, 4])
    assert [g for g, _, _ in rows] == [0, 1, 4]
    assert rows[0][2] == 0.0
    assert rows[0][1] >= rows[1][1] >= rows[2][1]
    assert rows[2][2] == pytest.approx(2 * rows[2][1])


def test_clopper_pearson_closed_forms():
    lo, hi = clopper_pearson(0, 10)
    assert lo == 0.0 and hi == pytest.approx(1 - 0.025 ** (1 / 10), abs=1e-12)
    lo, hi = clopper_pearson(10, 10)
    assert hi == 1.0 and lo == pytest.approx(0.025 ** (1 / 10), abs=1e-12)
    lo, hi = clopper_pearson(5, 10)
    assert lo < 0.5 < hi and lo == pytest.approx(1 - hi, abs=1e-12)


def test_tail_curve_censoring_and_grid():
    pts = tail_curve([3, None, 10, 1], t_max=20, t_grid=[0, 2, 5, 19, 20, 25])
    assert [p.t for p in pts] == [0, 2, 5, 19]
    assert [p.exceed for p in pts] == [4, 3, 2, 1]
    buf = io.StringIO()
    write_tail_csv(buf, pts[:1])
    assert buf.getvalue().splitlines()[0] == "t,p_tail,ci_lo,ci_hi"


def test_tail_profile_along_n_ladder():
    """Tail of the magnetization time falls like 1/sqrt(gamma) with a constant
    that is stable in n, and the total tail at gamma=10 does not grow with n
    beyond sampling error."""
    from scipy.stats import norm

    reps, gammas = 400, [1, 4, 9, 16]
    chat, tails = [], []
    for n in (128, 256, 512):
        spec = PartitionSpec.equal(2, n, 1.0)
        sd = perron(spec)
        t_n = cutoff_steps(spec, sd.upsilon)
        t = t_n + 10 * n
        recs = run_couplings(spec, sd, t + 1, reps, seed=99)
        (pt,) = tail_curve([r.tau_tot for r in recs], t + 1, [t])
        assert pt.p_tail < 0.3
        prof = mag_tail_profile(recs, t_n, n, gammas)
        probs = [pr for _, pr, _ in prof]
        assert all(b <= a for a, b in zip(probs, probs[1:]))
        chat.append(max(sc for _, _, sc in prof))
        tails.append(pt.p_tail)
    assert max(chat) / min(chat) <= 1.5
    # one-sided two-proportion z-test: no significant increase at the 5% level
    for a, b in zip(tails, tails[1:]):
        pool = (a + b) / 2
        se = math.sqrt(max(pool * (1 - pool) * 2 / reps, 1e-300))
        assert norm.sf((b - a) / se) > 0.05
