import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lllca.apps.sat import CnfFormula, gst_measure, sat_psi
from lllca.conditions import (
    ParameterError,
    TooLargeError,
    check_cluster_expansion,
    check_general_lll,
    check_general_lll_x_form,
    check_shearer,
    derive_params,
    feasible_interval,
    independent_set_polynomial,
    psi_to_x,
    radius_for,
)
from lllca.csp import Clause, Constraint, PredicateConstraint, ProductMeasure, build_instance
from lllca.experiments import gen_ksat, random_tiny_instance

from conftest import chain_instance


def single(mu_forbidden=0.25):
    # one constraint on one 4-valued variable forbidding a value of mass mu_forbidden
    rest = (1 - mu_forbidden) / 3
    inst = build_instance([4], [Constraint([0], [(0,)])])
    return inst, ProductMeasure([[mu_forbidden, rest, rest, rest]])


def test_single_event_general_condition():
    inst, mu = single(0.25)
    chk = check_general_lll(inst, mu, 1.0)
    assert chk.lhs[0] == pytest.approx(0.5)
    assert chk.epsilon == pytest.approx(0.5)
    assert check_general_lll_x_form(inst, mu, psi_to_x([1.0]))[0]


def test_no_bad_events_gives_full_slack():
    inst = build_instance([2, 2], [Constraint([0, 1], []), Constraint([1], [])])
    chk = check_general_lll(inst, ProductMeasure.uniform([2, 2]), 0.3)
    assert np.all(chk.lhs == 0) and chk.epsilon == 1.0


def test_x_form_passes_at_equality():
    # mu(A_0) = x0 (1 - x1) exactly with x = (0.5, 0.5)
    inst = build_instance([2, 2, 2], [Constraint([0, 1], [(1, 1)]), Constraint([1, 2], [(0, 0)])])
    mu = ProductMeasure.uniform([2] * 3)
    assert check_general_lll_x_form(inst, mu, [0.5, 0.5]).tolist() == [True, True]
    assert check_general_lll_x_form(inst, mu, [0.5, 0.51]).tolist() == [False, True]


def test_closed_form_matches_subset_sum():
    psi = np.random.default_rng(1).uniform(0.01, 2.0, 15)
    for size in (0, 1, 5, 15):
        sub = psi[:size]
        total = sum(math.prod(sub[list(S)]) for r in range(size + 1) for S in itertools.combinations(range(size), r))
        assert total == pytest.approx(math.prod(1 + sub), rel=1e-12)


def test_independent_set_polynomial_path():
    # path a-b-c: {}, {a}, {b}, {c}, {a,c}
    adj = {(0, 1), (1, 0), (1, 2), (2, 1)}
    w = [2.0, 3.0, 5.0]
    assert independent_set_polynomial([0, 1, 2], lambda u, v: (u, v) in adj, w) == 1 + 2 + 3 + 5 + 10


def test_cluster_equals_general_without_neighbors():
    inst, mu = single(0.25)
    assert check_cluster_expansion(inst, mu, 1.0).lhs[0] == pytest.approx(check_general_lll(inst, mu, 1.0).lhs[0])


def test_cluster_strictly_below_general_with_adjacent_neighbors():
    # c0 meets c1 and c2, which also meet each other
    inst = build_instance([2] * 3, [Constraint([0], [(1,)]), Constraint([0, 1], [(1, 1)]), Constraint([0, 1, 2], [(1, 1, 1)])])
    mu = ProductMeasure.uniform([2] * 3)
    g = check_general_lll(inst, mu, 0.4).lhs[0]
    c = check_cluster_expansion(inst, mu, 0.4).lhs[0]
    # general sums all 8 subsets of {c0, c1, c2}; only the empty set and
    # singletons are independent in a triangle
    assert g == pytest.approx(0.5 / 0.4 * 1.4**3)
    assert c == pytest.approx(0.5 / 0.4 * (1 + 3 * 0.4))
    assert c < g


def test_cluster_guard_leaves_nan():
    inst = chain_instance(4, 3)
    chk = check_cluster_expansion(inst, ProductMeasure.uniform([2] * inst.n), 0.5, max_neighbors=1)
    assert not chk.complete and chk.epsilon is None


def test_shearer_single_event():
    inst, mu = single(0.3)
    res = check_shearer(inst, mu)
    assert res.satisfied
    assert res.q_empty == pytest.approx(0.7)
    assert res.q[frozenset({0})] == pytest.approx(0.3)
    inst1 = build_instance([1], [Constraint([0], [(0,)])])
    assert not check_shearer(inst1, ProductMeasure([[1.0]])).satisfied


def test_shearer_two_independent_events():
    inst = build_instance([2, 2], [Constraint([0], [(1,)]), Constraint([1], [(1,)])])
    res = check_shearer(inst, ProductMeasure.bernoulli([0.2, 0.4]))
    assert res.q_empty == pytest.approx(0.8 * 0.6)
    assert res.q[frozenset({0, 1})] == pytest.approx(0.08)


def test_shearer_guard():
    inst = chain_instance(21, 2)
    with pytest.raises(TooLargeError):
        check_shearer(inst, ProductMeasure.uniform([2] * inst.n))


def test_mass_free_refused():
    inst = build_instance([2], [PredicateConstraint([0], lambda v: v[0] == 1)])
    with pytest.raises(ValueError):
        check_general_lll(inst, ProductMeasure.uniform([2]), 1.0)


def test_sat_boundary_satisfies_lopsided_condition():
    # k = 8, d = 20: d(k+1) = 180 <= 2^9/e; checked with the lopsided neighbourhood
    cnf = gen_ksat(400, 8, 20, seed=4)
    chk = check_general_lll(cnf.to_instance(), gst_measure(cnf), sat_psi(8), lopsided=True)
    assert chk.holds
    # the plain dependency neighbourhood is too coarse for this psi
    assert not check_general_lll(cnf.to_instance(), gst_measure(cnf), sat_psi(8)).holds


def test_derive_params_examples():
    inst = chain_instance(3, 2)  # k = 2, d = 2
    p = derive_params(inst, 1.0, 0.5)
    assert p.zeta == pytest.approx(math.log(2) / math.log(4)) == pytest.approx(0.5)
    assert p.xi == pytest.approx(math.log(2))
    assert p.lam == 0.0
    assert p.eta == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        derive_params(inst, 1.0, 0.0)


def test_radius_for_examples():
    assert radius_for(1, 0.01, 0.5, 1.0, 100) == 7
    assert radius_for(1, 0.5, 0.5, 0.1, 100) == 0
    with pytest.raises(ParameterError):
        radius_for(1, 1e-4, 0.5, 1.0, 100)


def test_feasible_interval():
    inst = chain_instance(3, 2)
    p = derive_params(inst, 1.0, 0.5)
    p = type(p)(**{**p.__dict__, "n": 100, "eta": 1.0})
    iv = feasible_interval(1, 1e9, 0.01, 0.5, p)
    assert math.ceil(iv.r_lo) == 7
    # r_hi = ln((t - s)/(xi C) ln 2) / ln 4 with C = 4kd = 16, s = 2 ln 100 / ln 2
    s = 2 * math.log(100) / math.log(2)
    assert iv.r_hi == pytest.approx(math.log((1e9 - s) / (math.log(2) * 16) * math.log(2)) / math.log(4))
    assert not iv.empty and iv.radii[0] == 7
    tiny = feasible_interval(1, s + 1.0, 0.01, 0.5, p)
    assert tiny.empty


def test_theorem_inequality_for_large_n():
    inst = chain_instance(3, 2)
    p = derive_params(inst, 1.0, 0.5)
    p = type(p)(**{**p.__dict__, "n": 10**12, "eta": 2.0})
    # q = n^0.1, t = n^4, delta = n^-0.1, zeta = 0.5, lambda = 0: 2 > 0.2
    iv = feasible_interval(int(1e12**0.1), 1e48, 1e12**-0.1, 0.5, p)
    assert iv.theorem_inequality
    assert not iv.empty


@given(st.integers(0, 100_000))
def test_checkers_agree_and_dominate(seed):
    rng = np.random.default_rng(seed)
    inst, mu = random_tiny_instance(rng)
    psi = rng.uniform(0.05, 3.0, inst.m)
    gen = check_general_lll(inst, mu, psi)
    xf = check_general_lll_x_form(inst, mu, psi_to_x(psi))
    assert np.array_equal(gen.passed, xf)
    clu = check_cluster_expansion(inst, mu, psi)
    assert np.all(clu.lhs <= gen.lhs * (1 + 1e-12))
    if gen.holds:
        assert clu.holds
    if clu.holds:
        assert check_shearer(inst, mu).satisfied
