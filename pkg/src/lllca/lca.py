"""Local computation algorithm answering variable queries one at a time.

For each query ``x`` the session builds ``I(x, r)``, samples the variables of
it that were never touched before, runs depth-first resampling on ``I(x, r)``
for at most ``t`` steps, and answers the current value of ``x`` (or aborts).
Earlier values are never discarded, so the whole session is a prefix of one
complete resampling run; :func:`continue_to_completion` finishes that run and
:func:`verify_consistency` compares the answers against its output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditions import Params, ParameterError, concentration_extra, derive_params, radius_for
from .csp import UNSET, Instance, ProductMeasure, SubProblem, induced_subproblem, new_assignment
from .engine import BUDGET_CAP, Trajectory, depth_first_mt, lemma9_budget


class SessionError(RuntimeError):
    """Query issued after an abort or beyond the declared query cap."""


class BudgetExhausted(RuntimeError):
    pass


class InvalidOracleError(ValueError):
    """The reference assignment handed to verification violates a constraint."""


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for ``(seed, *path)``; identical inputs replay identically."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def seed_path(seed) -> tuple[int, ...]:
    return tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)


@dataclass
class QueryResult:
    variable: int
    value: int | None  # None marks an abort
    resamples: int
    ball_size: int
    replayed: bool = False

    @property
    def aborted(self) -> bool:
        return self.value is None


@dataclass
class QueryLog:
    """What one query did, kept for verification and replay."""

    index: int
    variable: int
    sub: SubProblem
    fresh: np.ndarray
    trajectory: Trajectory | None


@dataclass
class LcaSession:
    inst: Instance
    measure: ProductMeasure
    psi: np.ndarray
    params: Params | None
    r: int
    t: int
    q_max: int
    seed: int | tuple[int, ...] = 0
    S: np.ndarray = field(init=False)
    touched: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)
    answers: list[tuple[int, int, int]] = field(default_factory=list)
    aborted: bool = False
    queries: int = 0
    log: list[QueryLog] = field(default_factory=list)
    keep_log: bool = True
    # variable -> index of the query that first answered it
    answered: dict[int, int] = field(default_factory=dict)
    # (query index, variable) pairs resampled after being answered
    late_resamples: set[tuple[int, int]] = field(default_factory=set)
    completion: Trajectory | None = None

    def __post_init__(self):
        self.S = np.zeros(self.inst.m, dtype=bool)
        self.touched = np.zeros(self.inst.n, dtype=bool)
        self.sigma = new_assignment(self.inst.n)

    def query(self, x: int) -> QueryResult:
        return query(self, x)

    def transcript(self) -> list[dict]:
        """One record per query: index, variable, ball size, resamples, answer."""
        out = []
        for ql in self.log:
            traj = ql.trajectory
            ans = self.answers[ql.index][1] if ql.index < len(self.answers) else None
            out.append({
                "query": ql.index,
                "variable": ql.variable,
                "ball": ql.sub.m,
                "resamples": traj.n_steps if traj is not None else 0,
                "answer": ans if ans is not None else "abort",
            })
        return out


def open_session(
    inst: Instance,
    measure: ProductMeasure,
    psi,
    q: int,
    delta: float,
    epsilon: float,
    *,
    t: int | None = None,
    r: int | None = None,
    C: float | None = None,
    seed: int | tuple[int, ...] = 0,
    keep_log: bool = True,
) -> LcaSession:
    """Set up a session for up to ``q`` queries with error target ``delta``.

    The radius comes from :func:`radius_for`; the per-query step budget from
    :func:`lemma9_budget` with ``s = 2 ln n / ln(1/(1-eps))``. Both can be
    overridden.
    """
    if epsilon <= 0:
        raise ParameterError("the LCA needs positive slack")
    n = inst.n
    if delta <= q / n**2:
        raise ParameterError(f"delta={delta} must exceed q/n^2={q / n**2}")
    psi = np.broadcast_to(np.asarray(psi, dtype=float), (inst.m,)).copy()
    params = derive_params(inst, psi, epsilon) if inst.k * inst.d >= 2 else None
    if r is None:
        eta = params.eta if params is not None else float(psi.max(initial=0.0))
        r = radius_for(q, delta, epsilon, eta, n)
    if t is None:
        t = lemma9_budget(params, r, concentration_extra(epsilon, n), C=C) if params else BUDGET_CAP
    return LcaSession(inst, measure, psi, params, int(r), int(t), int(q), seed=seed, keep_log=keep_log)


def query(session: LcaSession, x: int) -> QueryResult:
    """Answer the value of variable ``x`` (see module docstring)."""
    if session.aborted:
        raise SessionError("session aborted; no further answers")
    if session.queries >= session.q_max:
        raise SessionError(f"query cap q={session.q_max} reached")
    idx = session.queries
    session.queries += 1
    if x in session.answered:
        # repeated variable: replay the recorded answer
        value = session.answers[session.answered[x]][1]
        session.answers.append((x, value, idx))
        if session.keep_log:
            sub = SubProblem.of(session.inst, np.empty(0, dtype=np.int64))
            session.log.append(QueryLog(idx, x, sub, np.empty(0, dtype=np.int64), None))
        return QueryResult(x, value, 0, 0, replayed=True)

    inst, sigma = session.inst, session.sigma
    rng = substream(*seed_path(session.seed), idx)
    sub = induced_subproblem(inst, x, session.r)
    vars_ = sub.variable_indices
    if not inst.var_to_constraints[x] and not session.touched[x]:
        vars_ = np.append(vars_, x)
    fresh = vars_[~session.touched[vars_]]
    session.measure.sample_into(sigma, fresh, rng)
    session.touched[fresh] = True
    session.S[sub.constraint_indices] = True

    answered = session.answered
    late = session.late_resamples

    def watch(i, _sigma, _stack):
        for v in inst.constraint_to_vars[i]:
            j = answered.get(v)
            if j is not None:
                late.add((j, v))

    traj = depth_first_mt(sub, sigma, session.measure, rng, session.t,
                          log=session.keep_log, on_step=watch if answered else None)
    if session.keep_log:
        session.log.append(QueryLog(idx, x, sub, fresh, traj))
    if not traj.terminated:
        session.aborted = True
        session.answers.append((x, None, idx))
        return QueryResult(x, None, traj.n_steps, sub.m)
    value = int(sigma[x])
    session.answers.append((x, value, idx))
    answered[x] = idx
    return QueryResult(x, value, traj.n_steps, sub.m)


def continue_to_completion(
    session: LcaSession, rng: np.random.Generator, max_steps: int = BUDGET_CAP
) -> np.ndarray:
    """Extend the session's partial run to a complete one and return its final state.

    Never-touched variables are sampled, then depth-first resampling runs over
    the whole instance. Only for verification; the session's state is
    advanced in place.
    """
    if session.aborted:
        raise SessionError("cannot complete an aborted session")
    inst, sigma = session.inst, session.sigma
    fresh = np.flatnonzero(~session.touched)
    session.measure.sample_into(sigma, fresh, rng)
    session.touched[:] = True
    answered, late = session.answered, session.late_resamples

    def watch(i, _sigma, _stack):
        for v in inst.constraint_to_vars[i]:
            j = answered.get(v)
            if j is not None:
                late.add((j, v))

    traj = depth_first_mt(SubProblem.full(inst), sigma, session.measure, rng, max_steps,
                          log=session.keep_log, on_step=watch if answered else None)
    session.completion = traj
    if not traj.terminated:
        raise BudgetExhausted(f"completion did not terminate within {max_steps} resamplings")
    return sigma.copy()


@dataclass(frozen=True)
class ConsistencyReport:
    consistent: bool
    first_violation: int | None
    late_resampled: tuple[int, ...] = ()


def verify_consistency(session: LcaSession, final: np.ndarray) -> ConsistencyReport:
    """Compare every recorded answer with ``final``; report the earliest mismatch.

    ``late_resampled`` lists query indices whose variable was resampled after
    being answered (the error event charged to ``delta``), whether or not the
    value changed.
    """
    inst = session.inst
    bad = inst.violated_among(np.arange(inst.m), final)
    if bad.size or np.any(final == UNSET):
        raise InvalidOracleError("reference assignment is not flawless")
    first = None
    for x, value, idx in session.answers:
        if value is None or int(final[x]) != value:
            first = idx
            break
    late = tuple(sorted({j for j, _ in session.late_resamples}))
    return ConsistencyReport(first is None, first, late)


def replay_is_legal(session: LcaSession) -> bool:
    """Check the logged run (queries then completion) is a legal resampling run.

    Every resampled constraint must be violated by the logged pre-state, each
    pre-state must match the replayed state, and the replay must end at the
    session's current state.
    """
    inst = session.inst
    state = new_assignment(inst.n)
    trajs = [ql for ql in session.log if ql.trajectory is not None]
    for ql in trajs:
        init = ql.trajectory.initial
        for v in ql.fresh.tolist():
            if state[v] != UNSET:
                return False
            state[v] = init[v]
        vs = ql.sub.variable_indices
        if vs.size and not np.array_equal(state[vs], init[vs]):
            return False
        if not _replay_steps(inst, state, ql.trajectory):
            return False
    if session.completion is not None:
        init = session.completion.initial
        unset = state == UNSET
        state[unset] = init[unset]
        if not np.array_equal(state, init):
            return False
        if not _replay_steps(inst, state, session.completion):
            return False
    touched = session.touched
    return bool(np.array_equal(state[touched], session.sigma[touched]))


def _replay_steps(inst: Instance, state: np.ndarray, traj: Trajectory) -> bool:
    for step in traj.steps:
        c = inst.constraints[step.constraint]
        scope = list(c.scope)
        if tuple(state[scope].tolist()) != step.old or not c.forbids(step.old):
            return False
        state[scope] = step.new
    return True


def session_memory(session: LcaSession) -> dict[str, int]:
    """Element counts of the session's mutable state (flags, values, answers)."""
    return {
        "constraint_flags": int(session.S.size),
        "variable_flags": int(session.touched.size),
        "values": int(session.sigma.size),
        "answers": len(session.answers),
    }


def error_bound(session: LcaSession) -> float:
    """``q * eta * (1-eps)^r + 1/n^2``: the union bound the radius was chosen against."""
    p = session.params
    if p is None:
        return math.nan
    return session.q_max * p.eta * (1 - p.epsilon) ** session.r + 1 / session.inst.n**2
