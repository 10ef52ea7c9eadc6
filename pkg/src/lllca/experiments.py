"""Instance generators, an exhaustive solver, and the trial driver behind the CLI."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from scipy import stats

from .apps.coloring import Graph
from .apps.sat import CnfFormula, gst_measure, sat_psi, sat_slack
from .conditions import ParameterError, concentration_extra
from .csp import Constraint, Instance, ProductMeasure, build_instance, induced_subproblem
from .engine import BUDGET_CAP, lemma9_budget
from .lca import (
    BudgetExhausted,
    continue_to_completion,
    open_session,
    query,
    substream,
    verify_consistency,
)

BRUTE_FORCE_LIMIT = 1 << 25


# ---------------------------------------------------------------------------
# generators


def gen_ksat(n: int, k: int, d: int, seed: int, m: int | None = None) -> CnfFormula:
    """Random k-CNF where every variable occurs in at most ``d`` clauses.

    Each variable gets ``d`` slots; slots are shuffled and cut into clauses of
    width ``k``, then clauses that repeat a variable swap slots with random
    other clauses until none does. Signs are uniform.
    """
    if min(n, k, d) <= 0:
        raise ParameterError("n, k, d must be positive")
    if k > n:
        raise ParameterError(f"clause width k={k} exceeds n={n}")
    m = n * d // k if m is None else int(m)
    if m * k > n * d:
        raise ParameterError(f"need n*d >= m*k, got {n * d} < {m * k}")
    rng = substream(seed, 0)
    slots = rng.permutation(np.repeat(np.arange(n), d))[: m * k].reshape(m, k)
    for _ in range(100 * m + 1000):
        bad = [c for c in range(m) if len(set(slots[c].tolist())) < k]
        if not bad:
            break
        for c in bad:
            row = slots[c].tolist()
            pos = next((p for p in range(k) if row.index(row[p]) != p), None)
            if pos is None:  # fixed by an earlier swap in this pass
                continue
            other = int(rng.integers(m))
            if other == c:
                continue
            op = int(rng.integers(k))
            a, b = slots[c, pos], slots[other, op]
            if b in slots[c] or a in np.delete(slots[other], op):
                continue
            slots[c, pos], slots[other, op] = b, a
    else:
        raise ParameterError("could not remove repeated variables; loosen n, k, d")
    signs = np.where(rng.random((m, k)) < 0.5, -1, 1)
    lits = (slots + 1) * signs
    cnf = CnfFormula(n, tuple(tuple(int(l) for l in row) for row in lits))
    assert cnf.d <= d
    return cnf


def gen_block_graph(n: int, block: int, seed: int) -> Graph:
    """Disjoint complete bipartite graphs ``K_{block,block}`` on shuffled vertices.

    Neighborhoods are independent sets, so the deficiency is ``C(block, 2)``.
    Leftover vertices form a path.
    """
    rng = substream(seed, 1)
    order = rng.permutation(n).tolist()
    edges = []
    size = 2 * block
    full = n - n % size
    for s in range(0, full, size):
        left, right = order[s : s + block], order[s + block : s + size]
        edges += [(a, b) for a in left for b in right]
    rest = order[full:]
    edges += list(zip(rest, rest[1:]))
    return Graph.from_edges(n, edges)


def random_tiny_instance(
    rng: np.random.Generator, max_constraints: int = 6, max_vars: int = 8, max_forbidden: int | None = None
):
    """Small random CSP over boolean variables with random forbidden sets and a random measure.

    Each constraint forbids between one and half of its tuples, or at most
    ``max_forbidden`` of them.
    """
    n = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(1, max_constraints + 1))
    cons = []
    for _ in range(m):
        w = int(rng.integers(1, min(n, 4) + 1))
        scope = sorted(rng.choice(n, size=w, replace=False).tolist())
        tuples = [tuple(int(b) for b in np.binary_repr(t, w)) for t in range(2**w)]
        cap = max(1, 2 ** (w - 1)) if max_forbidden is None else min(max_forbidden, max(1, 2 ** (w - 1)))
        nf = int(rng.integers(1, cap + 1))
        pick = rng.choice(len(tuples), size=min(nf, len(tuples) - 1) or 1, replace=False)
        cons.append(Constraint(scope, [tuples[p] for p in pick]))
    p = rng.uniform(0.2, 0.8, size=n)
    return build_instance([2] * n, cons), ProductMeasure.bernoulli(p)


# ---------------------------------------------------------------------------
# exhaustive search


def brute_force_solve(inst: Instance, limit: int = BRUTE_FORCE_LIMIT, chunk: int = 1 << 16):
    """First flawless assignment in mixed-radix order, or None if there is none."""
    doms = np.asarray(inst.domain_sizes, dtype=np.int64)
    total = math.prod(int(x) for x in doms)
    if total > limit:
        raise ParameterError(f"assignment space {total} exceeds limit {limit}")
    strides = np.concatenate([[1], np.cumprod(doms[:-1])]) if inst.n else np.zeros(0, np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        grid = (idx[:, None] // strides[None, :]) % doms[None, :]
        ok = np.ones(len(idx), dtype=bool)
        for c in inst.constraints:
            if not ok.any():
                break
            scope = list(c.scope)
            sub = grid[:, scope]
            if c.has_mass:
                for f in c.forbidden_tuples():
                    ok &= ~np.all(sub == np.asarray(f), axis=1)
            else:
                ok &= ~np.array([c.forbids(row) for row in sub.tolist()])
        hit = np.flatnonzero(ok)
        if hit.size:
            return grid[hit[0]].copy()
    return None


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class Rate:
    successes: int
    n: int

    @property
    def p(self) -> float:
        return self.successes / self.n if self.n else math.nan

    @property
    def stderr(self) -> float:
        p = self.p
        return math.sqrt(p * (1 - p) / self.n) if self.n else math.nan

    def wilson(self, z: float = 1.96) -> tuple[float, float]:
        if not self.n:
            return (math.nan, math.nan)
        p, n = self.p, self.n
        den = 1 + z * z / n
        mid = (p + z * z / (2 * n)) / den
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
        return (max(0.0, mid - half), min(1.0, mid + half))

    def as_dict(self) -> dict:
        lo, hi = self.wilson()
        return {"p": self.p, "n": self.n, "stderr": self.stderr, "ci95": [lo, hi]}


def mean_with_se(xs) -> dict:
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return {"mean": math.nan, "n": 0, "stderr": math.nan}
    se = float(xs.std(ddof=1) / math.sqrt(xs.size)) if xs.size > 1 else math.nan
    return {"mean": float(xs.mean()), "n": int(xs.size), "stderr": se}


# ---------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class KsatSource:
    n: int = 2000
    k: int = 8
    d: int = 20
    seed: int = 0
    m: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: ``source`` is a DIMACS path or a :class:`KsatSource`."""

    source: str | KsatSource = field(default_factory=KsatSource)
    mode: str = "verify"
    q: int = 10
    delta: float = 0.1
    epsilon: float | None = None
    r: int | None = None
    t: int | None = None
    C: float | None = None
    seed: int = 0
    trials: int = 100
    output: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.mode not in ("lca", "verify"):
            raise ParameterError(f"unsupported trial mode {self.mode!r}")


@dataclass(eq=False)
class KsatSetup:
    cnf: CnfFormula
    inst: Instance
    measure: ProductMeasure
    psi: float
    epsilon: float


def ksat_setup(cnf: CnfFormula, epsilon: float | None = None) -> KsatSetup:
    """Instance, biased measure and psi for a k-CNF; ``epsilon`` defaults to its slack."""
    eps = sat_slack(cnf.k, cnf.d) if epsilon is None else epsilon
    return KsatSetup(cnf, cnf.to_instance(), gst_measure(cnf), sat_psi(cnf.k), eps)


def load_source(source) -> CnfFormula:
    if isinstance(source, KsatSource):
        return gen_ksat(source.n, source.k, source.d, source.seed, source.m)
    from .io import parse_dimacs

    with open(source, "rb") as fh:
        return parse_dimacs(fh.read())


def log_ball_bound(kd: int, r: int) -> float:
    """``ln (kd)^(r+1)``."""
    return (r + 1) * math.log(kd)


def run_trial(setup: KsatSetup, cfg: ExperimentConfig, trial: int, *, chosen=None) -> dict:
    """One seeded trial: ``q`` distinct random queries, then (verify mode) completion and comparison."""
    inst = setup.inst
    t0 = time.perf_counter()
    pick = substream(cfg.seed, trial, 0)
    chosen = pick.choice(inst.n, size=min(cfg.q, inst.n), replace=False) if chosen is None else chosen
    session = open_session(inst, setup.measure, setup.psi, cfg.q, cfg.delta, setup.epsilon,
                           r=cfg.r, t=cfg.t, C=cfg.C, seed=(cfg.seed, trial, 1), keep_log=False)
    params = session.params
    budget_cap = lemma9_budget(params, session.r, concentration_extra(setup.epsilon, inst.n), C=cfg.C)
    log_bound = log_ball_bound(params.kd, session.r)
    answers, resamples, balls = [], [], []
    budget_ok = ball_ok = True
    for x in chosen.tolist():
        res = query(session, int(x))
        answers.append(res.value)
        resamples.append(res.resamples)
        balls.append(res.ball_size)
        budget_ok &= res.resamples <= min(session.t, budget_cap)
        ball_ok &= res.ball_size == 0 or math.log(res.ball_size) <= log_bound + 1e-12
        if res.aborted:
            break
    rec = {
        "trial": trial,
        "seed": cfg.seed,
        "r": session.r,
        "t": session.t,
        "queries": [int(x) for x in chosen[: len(answers)].tolist()],
        "answers": answers,
        "aborted": session.aborted,
        "resamples": resamples,
        "ball_sizes": balls,
        "budget_ok": bool(budget_ok),
        "ball_ok": bool(ball_ok),
    }
    if cfg.mode == "verify" and not session.aborted:
        try:
            final = continue_to_completion(session, substream(cfg.seed, trial, 2))
            rep = verify_consistency(session, final)
            rec["inconsistent"] = not rep.consistent
            rec["first_violation"] = rep.first_violation
            rec["late_resampled"] = list(rep.late_resampled)
            rec["completion_resamples"] = session.completion.n_steps
        except BudgetExhausted as e:
            rec["error"] = str(e)
    rec["error_event"] = bool(rec["aborted"] or rec.get("inconsistent", False) or "error" in rec)
    rec["wall"] = time.perf_counter() - t0
    return rec


def run_experiment(cfg: ExperimentConfig, setup: KsatSetup | None = None) -> Iterator[dict]:
    """Yield one record per trial. Failures inside a trial are recorded, not raised."""
    if setup is None:
        setup = ksat_setup(load_source(cfg.source), cfg.epsilon)
    for trial in range(cfg.trials):
        try:
            yield run_trial(setup, cfg, trial)
        except (ParameterError, BudgetExhausted) as e:
            yield {"trial": trial, "seed": cfg.seed, "error": str(e), "error_event": True}


def summarize(records: list[dict]) -> dict:
    n = len(records)
    err = Rate(sum(r["error_event"] for r in records), n)
    ab = Rate(sum(bool(r.get("aborted")) for r in records), n)
    per_query = [x for r in records for x in r.get("resamples", [])]
    return {
        "summary": True,
        "trials": n,
        "error_rate": err.as_dict(),
        "abort_rate": ab.as_dict(),
        "resamples_per_query": mean_with_se(per_query),
        "budget_violations": sum(not r.get("budget_ok", True) for r in records),
        "ball_violations": sum(not r.get("ball_ok", True) for r in records),
    }


@dataclass
class SweepResult:
    """Per-radius error rates and Spearman trend tests against the radius.

    ``p_increasing`` tests for a rising error rate, ``p_decreasing`` for a
    falling one (both one-sided).
    """

    radii: list[int]
    rates: list[Rate]
    rho: float
    p_increasing: float
    p_decreasing: float
    records: list[dict]

    def monotone(self, alpha: float = 0.01) -> bool:
        """Non-increasing up to noise: no significant upward trend at ``alpha``."""
        return self.p_increasing >= alpha


def sweep(setup: KsatSetup, cfg: ExperimentConfig, radii) -> SweepResult:
    """Error rate per radius with the step budget ``t`` held fixed.

    Once ``r`` reaches the depth at which a queried variable's ball stops
    growing, larger radii build the same balls and replay the same run, so
    each trial is computed once per distinct tuple of effective radii.
    """
    if cfg.t is None:
        cfg = replace(cfg, t=BUDGET_CAP)
    radii = list(radii)
    inst = setup.inst
    sat: dict[int, int] = {}

    def saturation(x: int) -> int:
        if x not in sat:
            sat[x] = induced_subproblem(inst, x, math.inf).saturation
        return sat[x]

    cache: dict[tuple, dict] = {}
    rates, records = [], []
    for r in radii:
        c = replace(cfg, r=r)
        recs = []
        for i in range(c.trials):
            chosen = substream(c.seed, i, 0).choice(inst.n, size=min(c.q, inst.n), replace=False)
            key = (i, tuple(min(r, saturation(int(x))) for x in chosen.tolist()))
            if key not in cache:
                cache[key] = run_trial(setup, c, i, chosen=chosen)
            recs.append(dict(cache[key], r=r))
        records.extend(recs)
        rates.append(Rate(sum(x["error_event"] for x in recs), len(recs)))
    ps = [x.p for x in rates]
    if len(set(ps)) > 1:
        down = stats.spearmanr(radii, ps, alternative="less")
        up = stats.spearmanr(radii, ps, alternative="greater")
        rho, p_up, p_down = float(down.statistic), float(up.pvalue), float(down.pvalue)
    else:
        rho, p_up, p_down = math.nan, 1.0, 1.0
    return SweepResult(radii, rates, rho, p_up, p_down, records)
