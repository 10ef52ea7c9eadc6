"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from lllca.apps.coloring import coloring_instance, coloring_lca_query, is_proper, open_coloring_session, uncolor_and_greedy
from lllca.apps.hypergraph import Hypergraph, edge_psi, edge_x, hypergraph_instance
from lllca.conditions import (
    check_cluster_expansion,
    check_general_lll,
    check_general_lll_x_form,
    check_shearer,
    concentration_extra,
    derive_params,
    psi_to_x,
    radius_for,
)
from lllca.csp import Clause, ProductMeasure, build_instance, event_probabilities, event_probability
from lllca.engine import lemma9_budget, resample_full, theorem7_budget
from lllca.experiments import (
    ExperimentConfig,
    brute_force_solve,
    gen_block_graph,
    gen_ksat,
    ksat_setup,
    random_tiny_instance,
    run_experiment,
    sweep,
)
from lllca.lca import substream
from lllca.witness import (
    enumerate_trees,
    gw_probability,
    gw_sample,
    gw_truncation_mass,
    lemma10_bound,
    occurrence_stats,
    tree_probability_bound,
)

from conftest import ACCEPTANCE, chain_instance

CHAIN_PSI = 0.5


def record(num, ok, detail):
    ACCEPTANCE.append((num, bool(ok), detail))
    assert ok, f"criterion {num}: {detail}"


def tiny(rng):
    return random_tiny_instance(rng, max_forbidden=int(rng.integers(1, 3)))


def tiny_psi(rng, inst, mu):
    return np.maximum(event_probabilities(inst, mu), 1e-3) * rng.uniform(1.2, 3.0)


@pytest.fixture(scope="module")
def chain():
    inst = chain_instance(4, 3)
    return inst, ProductMeasure.uniform([2] * inst.n)


@pytest.fixture(scope="module")
def chain_stats(chain):
    inst, mu = chain
    t0 = time.perf_counter()
    stats = occurrence_stats(inst, mu, 100_000, seed=2024, max_size=3, sizes=(2, 3, 4))
    return stats, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ksat():
    return ksat_setup(gen_ksat(2000, 8, 20, seed=0))


@pytest.fixture(scope="module")
def lca_records(ksat):
    t0 = time.perf_counter()
    recs = list(run_experiment(ExperimentConfig(q=10, delta=0.1, trials=1000, seed=7), ksat))
    return recs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def radius_star(ksat):
    p = derive_params(ksat.inst, np.full(ksat.inst.m, ksat.psi), ksat.epsilon)
    return radius_for(10, 0.1, ksat.epsilon, p.eta, ksat.inst.n)


@pytest.fixture(scope="module")
def sweep_result(ksat, radius_star):
    cfg = ExperimentConfig(q=10, delta=0.1, trials=500, seed=11)
    return sweep(ksat, cfg, range(0, radius_star + 3))


def test_criterion_01_checker_equivalence():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        inst, mu = random_tiny_instance(rng)
        psi = rng.uniform(0.05, 3.0, inst.m)
        a = check_general_lll(inst, mu, psi).passed
        b = check_general_lll_x_form(inst, mu, psi_to_x(psi))
        mismatches += int(np.sum(a != b))
    dt = time.perf_counter() - t0
    record(1, mismatches == 0 and dt < 10, f"1000 instances, {mismatches} disagreements, {dt:.1f}s")


def test_criterion_02_lll_existence():
    rng = np.random.default_rng(2)
    slack = bad = 0
    for _ in range(500):
        inst, mu = tiny(rng)
        if check_general_lll(inst, mu, tiny_psi(rng, inst, mu)).epsilon > 0:
            slack += 1
            bad += brute_force_solve(inst) is None
    record(2, bad == 0 and slack > 0, f"{slack}/500 instances with slack, {bad} without a solution")


def test_criterion_03_witness_tree_bound(chain, chain_stats):
    inst, mu = chain
    stats, dt = chain_stats
    worst, checked, over = -math.inf, 0, 0
    for j in range(inst.m):
        for tau in enumerate_trees(inst, j, 3):
            p, se = stats.frequency(tau)
            bound = tree_probability_bound(tau, inst, mu)
            checked += 1
            over += p > bound + 3 * se
            worst = max(worst, p - bound)
    record(3, over == 0 and dt < 120,
           f"{checked} trees, {over} above bound+3SE, max(freq-bound)={worst:.4f}, {dt:.0f}s for 1e5 runs")


def test_criterion_04_galton_watson(chain):
    inst, _ = chain
    psi = np.full(inst.m, CHAIN_PSI)
    samples = 100_000
    off, checked, mass_ok = 0, 0, True
    worst = 0.0
    for j in range(inst.m):
        rng = substream(404, j)
        counts = {}
        for _ in range(samples):
            t = gw_sample(inst, psi, j, rng, size_cap=4).tree
            if t.size <= 3:
                counts[t] = counts.get(t, 0) + 1
        trees = enumerate_trees(inst, j, 3)
        for tau in trees:
            p = gw_probability(tau, inst, psi)
            se = math.sqrt(p * (1 - p) / samples)
            z = abs(counts.get(tau, 0) / samples - p) / se
            worst = max(worst, z)
            off += z > 3
            checked += 1
        complete, truncated = gw_truncation_mass(inst, psi, j, 3)
        total = sum(gw_probability(t, inst, psi) for t in trees)
        mass_ok &= total + truncated <= 1 + 1e-9 and abs(total - complete) < 1e-12
    record(4, off == 0 and mass_ok, f"{checked} trees, {off} beyond 3SE (max |z|={worst:.2f}), mass ok={mass_ok}")


def test_criterion_05_lemma10(chain, chain_stats):
    inst, mu = chain
    stats, _ = chain_stats
    eps = check_general_lll(inst, mu, CHAIN_PSI).epsilon
    rows, fails = [], 0
    for j in range(inst.m):
        for s in (2, 3, 4):
            mass, se = stats.big_mass(j, s)
            bound = lemma10_bound(CHAIN_PSI, eps, s)
            fails += mass > bound + 3 * se
            rows.append(mass / bound)
    record(5, fails == 0 and eps > 0,
           f"eps={eps:.4f}, 12 (root, s) pairs, {fails} above bound+3SE, max ratio {max(rows):.3f}")


def theorem7_instance():
    # 50 variables, 20 positive 5-clauses, each variable in exactly two clauses
    blocks = [[5 * j + t + 1 for t in range(5)] for j in range(10)]
    strided = [[j + 10 * t + 1 for t in range(5)] for j in range(10)]
    return build_instance([2] * 50, [Clause(c) for c in blocks + strided])


def test_criterion_06_theorem7_tail():
    inst = theorem7_instance()
    mu = ProductMeasure.uniform([2] * 50)
    psi = 0.2
    eps = check_general_lll(inst, mu, psi).epsilon
    params = derive_params(inst, psi, eps)
    runs = 10_000
    steps = np.array([
        resample_full(inst, mu, substream(606, r), sigma=np.zeros(50, dtype=np.int64), log=False).n_steps
        for r in range(runs)
    ])
    parts, ok = [], eps > 0
    for s in (5, 10, 15):
        frac = float(np.mean(steps > theorem7_budget(params, s)))
        se = math.sqrt(frac * (1 - frac) / runs)
        ok &= frac <= (1 - eps) ** s + 3 * se
        parts.append(f"s={s}: {frac:.4f} vs {(1 - eps) ** s:.2e}")
    record(6, ok, f"eps={eps:.3f}, max steps {steps.max()}, " + "; ".join(parts))


def test_criterion_07_lca_accuracy(ksat, lca_records):
    recs, dt = lca_records
    n = len(recs)
    err = sum(r["error_event"] for r in recs) / n
    aborts = sum(bool(r.get("aborted")) for r in recs)
    limit = 0.1 + 3 * math.sqrt(0.1 / n)
    record(7, err <= limit and n >= 1000 and dt < 600,
           f"{n} trials, error rate {err:.4f} (aborts {aborts}) <= {limit:.4f}, eps={ksat.epsilon:.4f}, "
           f"r={recs[0]['r']}, {dt:.0f}s")


def test_criterion_08_radius_monotonicity(sweep_result, radius_star):
    res = sweep_result
    head = ", ".join(f"r={r}:{x.p:.3f}" for r, x in list(zip(res.radii, res.rates))[:4])
    record(8, res.monotone(0.01),
           f"r=0..{radius_star + 2}, {head}, ...; Spearman rho={res.rho:.3f}, "
           f"p(increasing)={res.p_increasing:.3g}, p(decreasing)={res.p_decreasing:.3g}")


def test_criterion_09_locality(ksat, lca_records, sweep_result):
    recs = lca_records[0] + sweep_result.records
    params = derive_params(ksat.inst, np.full(ksat.inst.m, ksat.psi), ksat.epsilon)
    s = concentration_extra(ksat.epsilon, ksat.inst.n)
    viol = 0
    for r in recs:
        budget = lemma9_budget(params, r["r"], s)
        log_ball = (r["r"] + 1) * math.log(params.kd)
        viol += any(x > budget for x in r["resamples"])
        viol += any(b > 0 and math.log(b) > log_ball + 1e-12 for b in r["ball_sizes"])
        viol += not (r["budget_ok"] and r["ball_ok"])
    record(9, viol == 0, f"{len(recs)} trial records, {viol} violations")


def test_criterion_10_applications():
    lll = hypergraph_instance(Hypergraph(5, ((0, 1, 2), (2, 3, 4))))
    hyper_ok = (edge_x(3) == 0.5 and edge_psi(3) == 2.0 and list(lll.psi) == [2.0, 2.0]
                and event_probability(lll.inst, lll.measure, 0) == 0.25)
    greedy_runs = improper = failures = 0
    lca_trials = lca_conflicts = lca_aborts = 0
    for seed in range(100):
        g = gen_block_graph(200, 4 + seed % 2, seed)
        col = coloring_instance(g)
        traj = resample_full(col.inst, col.measure, substream(seed, 0), 20_000, log=False)
        state = traj.final if traj.terminated else None
        if state is not None:
            res = uncolor_and_greedy(g, state, col.problem.palette)
            if res.ok:
                greedy_runs += 1
                improper += not is_proper(g, res.coloring)
            else:
                failures += 1
        cs = open_coloring_session(col, 50, 0.1, 0.5, r=2, t=20_000, seed=seed)
        answers = {}
        for v in substream(seed, 1).choice(200, 50, replace=False).tolist():
            a = coloring_lca_query(cs, v)
            if a.aborted or a.failed:
                lca_aborts += 1
                break
            answers[v] = a.color
        else:
            lca_trials += 1
            lca_conflicts += any(answers[u] == answers[w] for u in answers for w in g.adj[u] if w in answers)
    ok = hyper_ok and improper == 0 and greedy_runs > 0 and lca_conflicts == 0 and lca_trials > 0
    record(10, ok, f"hypergraph exact={hyper_ok}; greedy proper in {greedy_runs}/{greedy_runs} "
                   f"(failures {failures}); LCA: {lca_trials} trials, {lca_conflicts} conflicts, {lca_aborts} aborted")


def test_criterion_11_condition_hierarchy():
    rng = np.random.default_rng(11)
    g_pass = c_pass = bad_gc = bad_cs = 0
    for _ in range(500):
        inst, mu = tiny(rng)
        psi = tiny_psi(rng, inst, mu)
        g = check_general_lll(inst, mu, psi).holds
        c = check_cluster_expansion(inst, mu, psi).holds
        s = check_shearer(inst, mu).satisfied
        g_pass += g
        c_pass += c
        bad_gc += g and not c
        bad_cs += c and not s
    record(11, bad_gc == 0 and bad_cs == 0 and g_pass > 0,
           f"general passes {g_pass}, cluster passes {c_pass}; counterexamples: {bad_gc} (gen=>clu), {bad_cs} (clu=>shearer)")
