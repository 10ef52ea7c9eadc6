import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lllca.conditions import check_general_lll
from lllca.csp import Constraint, ProductMeasure, build_instance, dependency_neighbors
from lllca.engine import resample_full
from lllca.experiments import random_tiny_instance
from lllca.witness import (
    WitnessTree,
    all_witness_trees,
    count_trees_by_size,
    enumerate_trees,
    gw_probability,
    gw_sample,
    gw_truncation_mass,
    lemma10_bound,
    occurrence_stats,
    occurs,
    parse_tree,
    tree_probability_bound,
    witness_tree,
)

from conftest import chain_instance


@pytest.fixture
def pair():
    # c0 and c1 share x1
    return build_instance([2] * 3, [Constraint([0, 1], [(1, 1)]), Constraint([1, 2], [(1, 1)])])


@pytest.fixture
def apart():
    return build_instance([2] * 4, [Constraint([0, 1], [(1, 1)]), Constraint([1, 2], [(0, 0)]),
                                    Constraint([3], [(1,)])])


def test_single_entry(pair):
    assert witness_tree(pair, [1], 1) == WitnessTree(1)


def test_backward_construction_by_hand(pair):
    assert witness_tree(pair, [0, 1, 0], 3).encoding == "(0 (1 (0)))"


def test_ineligible_entry_skipped(apart):
    assert witness_tree(apart, [0, 2], 2).encoding == "(2)"


def test_tie_goes_to_first_created():
    # c1 touches both c0 and c2; W=(1, 0, 2, 1): from the root 1, attach 2 then 0
    # (both depth 1); the earliest entry 1 is eligible under 0 and 2, both at
    # depth 1, and goes below 2, which was created first
    inst = build_instance([2] * 4, [Constraint([0, 1], [(1, 1)]), Constraint([1, 2], [(1, 1)]),
                                    Constraint([2, 3], [(1, 1)])])
    tau = witness_tree(inst, [1, 0, 2, 1], 4)
    assert tau.encoding == "(1 (0) (2 (1)))"


def test_occurs(pair):
    W = [0, 1, 1, 0]
    for k in range(1, 5):
        assert occurs(pair, W, witness_tree(pair, W, k))
    assert not occurs(pair, [0, 0], WitnessTree(1))


def test_parse_round_trip():
    for text in ["(3)", "(0 (1 (0)))", "(2 (0) (1 (2) (4)))"]:
        assert parse_tree(text).encoding == text
    assert parse_tree("(2 (1 (4) (2)) (0))").encoding == "(2 (0) (1 (2) (4)))"


def _iso(a, b):
    # independent isomorphism test: try every matching of children
    if a.label != b.label or len(a.children) != len(b.children):
        return False
    return any(all(_iso(x, y) for x, y in zip(a.children, perm))
               for perm in itertools.permutations(b.children))


def _random_tree(rng, size, labels=3):
    nodes = [[int(rng.integers(labels)), []]]
    for _ in range(size - 1):
        parent = nodes[int(rng.integers(len(nodes)))]
        kid = [int(rng.integers(labels)), []]
        parent[1].append(kid)
        nodes.append(kid)

    def build(n):
        kids = [build(c) for c in n[1]]
        rng.shuffle(kids)
        return WitnessTree(n[0], tuple(kids))

    return build(nodes[0])


@given(st.integers(0, 10_000))
def test_canonical_form_matches_isomorphism(seed):
    rng = np.random.default_rng(seed)
    a = _random_tree(rng, int(rng.integers(1, 7)))
    b = _random_tree(rng, a.size)
    assert (a == b) == _iso(a, b)
    assert a == parse_tree(a.encoding)


def test_probability_bounds():
    inst = build_instance([2] * 4, [Constraint([0, 1], [(1, 1)]), Constraint([1, 2], [(1, 1)])])
    mu = ProductMeasure.uniform([2] * 4)
    assert tree_probability_bound(WitnessTree(0), inst, mu) == 0.25
    assert tree_probability_bound(parse_tree("(0 (1) (0))"), inst, mu) == 0.015625
    assert lemma10_bound(0.3, 0.2, 0) == 0.3
    assert lemma10_bound(1.0, 0.5, 7) == 0.0078125


def test_gw_singleton():
    inst = build_instance([2], [Constraint([0], [(1,)])])
    assert gw_probability(WitnessTree(0), inst, [1.0]) == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    roots = sum(gw_sample(inst, [1.0], 0, rng).tree.size == 1 for _ in range(4000))
    assert abs(roots / 4000 - 0.5) < 0.03
    # capped at one vertex: a drawn child is reported as truncation
    flags = [gw_sample(inst, [1.0], 0, rng, size_cap=1) for _ in range(200)]
    assert all(f.tree.size == 1 for f in flags)
    assert any(f.truncated for f in flags) and not all(f.truncated for f in flags)


def test_gw_mass_accounting(chain4):
    inst, _ = chain4
    psi = np.full(inst.m, 0.5)
    for j in range(inst.m):
        trees = enumerate_trees(inst, j, 5)
        total = sum(gw_probability(t, inst, psi) for t in trees)
        complete, truncated = gw_truncation_mass(inst, psi, j, 5)
        assert complete == pytest.approx(total, abs=1e-12)
        assert total + truncated <= 1 + 1e-9
        assert complete + truncated == pytest.approx(1.0, abs=1e-12)


def test_gw_refuses_repeated_child_labels(pair):
    with pytest.raises(ValueError):
        gw_probability(parse_tree("(0 (1) (1))"), pair, [0.5, 0.5])


def test_enumeration_small_cases(pair):
    assert enumerate_trees(pair, 0, 1) == [WitnessTree(0)]
    two = {t.encoding for t in enumerate_trees(pair, 0, 2)}
    assert two == {"(0)", "(0 (0))", "(0 (1))"}


def _brute_count(inst, label, size):
    # trees of exactly ``size`` vertices: choose a set of distinct child labels,
    # then split the remaining vertices among them
    if size == 1:
        return 1
    opts = inst.closed_neighborhood(label)
    total = 0
    for r in range(1, len(opts) + 1):
        for kids in itertools.combinations(opts, r):
            for parts in itertools.product(range(1, size), repeat=r):
                if sum(parts) == size - 1:
                    total += math.prod(_brute_count(inst, g, p) for g, p in zip(kids, parts))
    return total


def test_counts_match_independent_counter(chain4):
    inst, _ = chain4
    for j in range(inst.m):
        table = count_trees_by_size(inst, j, 5)
        assert table[1:] == [_brute_count(inst, j, s) for s in range(1, 6)]
        listed = enumerate_trees(inst, j, 4)
        assert len(listed) == sum(table[1:5]) == len(set(listed))


def test_tree_size_condition_chain(chain4):
    # per tree: prod mu <= (1-eps)^|tau| * psi_root * p_tau
    inst, mu = chain4
    psi = np.full(inst.m, 0.5)
    eps = check_general_lll(inst, mu, psi).epsilon
    assert eps > 0
    for j in range(inst.m):
        for tau in enumerate_trees(inst, j, 5):
            lhs = tree_probability_bound(tau, inst, mu)
            rhs = (1 - eps) ** tau.size * psi[j] * gw_probability(tau, inst, psi)
            assert lhs <= rhs * (1 + 1e-12)


@given(st.integers(0, 10_000))
def test_witness_tree_properties(seed):
    rng = np.random.default_rng(seed)
    inst, mu = random_tiny_instance(rng)
    traj = resample_full(inst, mu, rng, 50, log=False)
    W = traj.witness
    trees = all_witness_trees(inst, W)
    for i, tau in enumerate(trees, 1):
        assert tau.size <= i
        assert tau == witness_tree(inst, W, i)
        for level in tau.levels():
            assert len(set(level)) == len(level)
            for a, b in itertools.combinations(level, 2):
                assert b not in dependency_neighbors(inst, a)


def test_occurrence_stats_smoke(chain4):
    inst, mu = chain4
    stats = occurrence_stats(inst, mu, 300, seed=1, max_size=2, sizes=(2,))
    p, se = stats.frequency(WitnessTree(0))
    assert 0 <= p <= 1 and se >= 0
    mass, _ = stats.big_mass(0, 2)
    assert mass >= 0
