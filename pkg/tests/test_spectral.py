import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpglauber.partition import PartitionSpec
from mpglauber.spectral import (
    build_matrix,
    norm_bound_check,
    perron,
    secular_root,
    symmetric_interaction,
    verify_identities,
)

# beta_cr oracles. For m = 2 the symmetric matrix has Perron root sqrt(p1 p2).
# For p = (1/4, 1/4, 1/2) the secular equation becomes lam^2 - lam/4 - 1/4 = 0,
# so lam = (1 + sqrt 17)/8 and beta_cr = (sqrt 17 - 1)/2.
BETA_CR_EQUAL2 = 2.0
BETA_CR_QUARTER = 4 / math.sqrt(3)
A_QUARTER = (0.6339745962155614, 0.3660254037844386)  # a_j ~ 1/(lam + p_j), lam = sqrt(3)/4
BETA_CR_THREE = (math.sqrt(17) - 1) / 2

SPECS = [
    ("1", 4),
    ("1/2,1/2", 4),
    ("1/4,3/4", 4),
    ("1/3,2/3", 6),
    ("1/4,1/4,1/2", 8),
    ("1/6,1/3,1/2", 12),
    ("1/3,1/3,1/3", 6),
    ("1/8,1/8,1/4,1/2", 8),
]


def test_build_matrix_examples():
    A = build_matrix(PartitionSpec.equal(2, 100, 1.0))
    np.testing.assert_allclose(A, [[0.99, 0.005], [0.005, 0.99]], rtol=0, atol=1e-15)
    A0 = build_matrix(PartitionSpec.parse("1/4,3/4", 8, 0.0))
    np.testing.assert_array_equal(A0, (1 - 1 / 8) * np.eye(2))
    A3 = build_matrix(PartitionSpec.parse("1/4,1/4,1/2", 8, 2.0))
    assert A3[2, 0] == A3[2, 1] == 1 / 8


def test_single_partition_has_infinite_critical_beta():
    sd = perron(PartitionSpec.equal(1, 5, 3.0))
    assert math.isinf(sd.beta_cr)
    assert sd.to_dict()["beta_cr"] == "inf"


def test_equal_two_partitions():
    sd = perron(PartitionSpec.equal(2, 10, 1.0))
    assert abs(sd.lam - 0.5) < 1e-14
    np.testing.assert_allclose(sd.a, [0.5, 0.5], atol=1e-14)
    assert abs(sd.beta_cr - BETA_CR_EQUAL2) < 1e-12
    assert abs(sd.upsilon - 0.5) < 1e-14


def test_unequal_two_partitions():
    sd = perron(PartitionSpec.parse("1/4,3/4", 4, 2.0))
    assert abs(sd.beta_cr - BETA_CR_QUARTER) < 1e-12
    np.testing.assert_allclose(sd.a, A_QUARTER, atol=1e-12)


def test_three_partitions_against_dense_solver():
    spec = PartitionSpec.parse("1/4,1/4,1/2", 8, 1.0)
    sd = perron(spec)
    w, V = np.linalg.eigh(symmetric_interaction(spec.p_float))
    assert abs(sd.lam - w[-1]) < 1e-13
    assert abs(sd.beta_cr - BETA_CR_THREE) < 1e-12


@pytest.mark.parametrize("p, n", SPECS)
@pytest.mark.parametrize("beta", [0.0, 0.5, 1.3])
def test_identities_hold(p, n, beta):
    spec = PartitionSpec.parse(p, n, beta)
    rep = verify_identities(perron(spec), spec, tol=1e-10)
    assert rep.ok, str(rep)


def test_identity_examples():
    spec = PartitionSpec.equal(2, 10, 1.0)
    sd = perron(spec)
    assert abs(sd.upsilon - 0.5) < 1e-15 and abs(spec.beta / sd.beta_cr - 0.5) < 1e-15
    sd0 = perron(spec.with_beta(0.0))
    assert sd0.upsilon == 1.0
    spec = PartitionSpec.parse("1/4,3/4", 4, 2.0)
    sd = perron(spec)
    a, p = np.asarray(sd.a), spec.p_float
    rhs = (a**2 @ p) / ((a @ p) ** 2 - (a**2) @ (p**2))
    assert abs(rhs - 1 / sd.lam) < 1e-10


def test_failing_report_names_identity():
    spec = PartitionSpec.equal(2, 10, 1.0)
    sd = perron(spec)
    from dataclasses import replace

    bad = replace(sd, upsilon=0.4)
    rep = verify_identities(bad, spec)
    assert "upsilon_formula" in rep.failures


def test_k_definiteness_flag():
    spec = PartitionSpec.equal(2, 10, 3.0)
    rep = verify_identities(perron(spec), spec)
    assert rep.extra["k_positive_definite"] is False
    assert rep.ok


@pytest.mark.parametrize("p, n", SPECS[1:])
def test_secular_root_matches_power_iteration(p, n):
    spec = PartitionSpec.parse(p, n, 1.0)
    assert abs(perron(spec).lam - secular_root(spec.p_float)) < 1e-12


@pytest.mark.parametrize("p, n", SPECS)
def test_a_does_not_depend_on_n(p, n):
    a1 = perron(PartitionSpec.parse(p, n, 0.7)).a
    a2 = perron(PartitionSpec.parse(p, 2 * n, 0.7)).a
    np.testing.assert_allclose(a1, a2, rtol=0, atol=1e-12)


def test_norm_bound_examples():
    spec = PartitionSpec.equal(2, 100, 1.0)
    sd = perron(spec)
    nb = norm_bound_check(sd, spec, spec.p_float, 0)
    assert abs(nb.lhs - 1) < 1e-15 and abs(nb.rhs - 1) < 1e-15
    nb = norm_bound_check(sd, spec, np.zeros(2), 5)
    assert nb.lhs == nb.rhs == 0
    nb = norm_bound_check(sd, spec, spec.p_float, 100)
    assert nb.lhs <= 0.995**100 + 1e-15
    with pytest.raises(ValueError):
        norm_bound_check(sd, spec, np.array([0.6, 0.1]), 1)


@settings(max_examples=60, deadline=None)
@given(
    pidx=st.integers(1, len(SPECS) - 1),
    beta=st.floats(0, 1.4),
    frac=st.lists(st.floats(0, 1), min_size=4, max_size=4),
    t=st.integers(0, 400),
)
def test_norm_bound_never_violated(pidx, beta, frac, t):
    p, n = SPECS[pidx]
    spec = PartitionSpec.parse(p, n, beta)
    sd = perron(spec)
    s = np.asarray(frac[: spec.m]) * spec.p_float
    assert norm_bound_check(sd, spec, s, t).holds(1e-12)
