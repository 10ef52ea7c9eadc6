"""Moser-Tardos resampling with a stack of violated constraints.

The stack is seeded by one scan of the working constraints. After each
resampling only ``D(i) ∪ {i}`` is re-examined, so maintenance costs O(kd).
Stale entries (pushed, later fixed by another resampling) are dropped when
popped and never count as steps. Only resamplings count toward budgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditions import Params, ParameterError, default_polylog_constant
from .csp import UNSET, Instance, InstanceError, ProductMeasure, SubProblem, new_assignment

BUDGET_CAP = 1 << 62


@dataclass
class Step:
    constraint: int
    old: tuple[int, ...]
    new: tuple[int, ...]


@dataclass
class Trajectory:
    """One run: starting state, resampling log, and outcome.

    ``steps`` holds :class:`Step` records when logging is on; ``witness`` always
    holds the resampled constraint indices in order.
    """

    initial: np.ndarray
    witness: list[int] = field(default_factory=list)
    steps: list[Step] = field(default_factory=list)
    terminated: bool = False
    final: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.witness)


class ViolatedStack:
    """LIFO of constraint indices with membership flags (no duplicates)."""

    def __init__(self, m: int):
        self._items: list[int] = []
        self._on = bytearray(m)

    def push(self, i: int) -> None:
        if not self._on[i]:
            self._on[i] = 1
            self._items.append(i)

    def pop(self) -> int:
        i = self._items.pop()
        self._on[i] = 0
        return i

    def __contains__(self, i: int) -> bool:
        return bool(self._on[i])

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


def _run(
    inst: Instance,
    constraints: np.ndarray,
    sigma: np.ndarray,
    measure: ProductMeasure,
    rng: np.random.Generator,
    max_steps: int,
    log: bool,
    allowed: bytearray | None,
    on_step=None,
) -> Trajectory:
    traj = Trajectory(initial=sigma.copy())
    stack = ViolatedStack(inst.m)
    for i in inst.violated_among(constraints, sigma).tolist():
        stack.push(i)
    cons = inst.constraints
    scopes = inst.scope_arrays
    nbhd = inst.closed_neighborhood
    while stack:
        i = stack.pop()
        c = cons[i]
        if not c.is_violated_by(sigma):
            continue
        if traj.n_steps >= max_steps:
            stack.push(i)
            break
        scope = scopes[i]
        if log:
            old = tuple(sigma[scope].tolist())
        measure.sample_into(sigma, scope, rng)
        traj.witness.append(i)
        if log:
            traj.steps.append(Step(i, old, tuple(sigma[scope].tolist())))
        if on_step is not None:
            on_step(i, sigma, stack)
        for j in nbhd(i):
            if allowed is not None and not allowed[j]:
                continue
            if j not in stack and cons[j].is_violated_by(sigma):
                stack.push(j)
    traj.terminated = len(stack) == 0
    if traj.terminated:
        traj.final = sigma.copy()
    return traj


def resample_full(
    inst: Instance,
    measure: ProductMeasure,
    rng: np.random.Generator,
    max_steps: int = BUDGET_CAP,
    *,
    log: bool = True,
    sigma: np.ndarray | None = None,
) -> Trajectory:
    """Sample every variable from ``measure`` and resample violated constraints.

    Runs until no constraint is violated (``terminated``) or ``max_steps``
    resamplings have been made. Passing ``sigma`` skips the initial sampling
    and starts from that (fully assigned) state instead.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    if sigma is None:
        sigma = new_assignment(inst.n)
        measure.sample_into(sigma, np.arange(inst.n), rng)
    elif np.any(sigma == UNSET):
        raise InstanceError("starting state must assign every variable")
    return _run(inst, np.arange(inst.m, dtype=np.int64), sigma, measure, rng, max_steps, log, None)


def depth_first_mt(
    sub: SubProblem,
    sigma: np.ndarray,
    measure: ProductMeasure,
    rng: np.random.Generator,
    max_steps: int,
    *,
    log: bool = True,
    on_step=None,
) -> Trajectory:
    """Depth-first resampling restricted to ``sub``, starting from ``sigma`` as is.

    ``sigma`` is modified in place. Constraints outside ``sub`` are never
    examined.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    inst = sub.parent
    if sub.variable_indices.size and np.any(sigma[sub.variable_indices] == UNSET):
        raise InstanceError("every variable of the subproblem must be assigned")
    if sub.m == inst.m:
        allowed = None
    else:
        mask = np.zeros(inst.m, dtype=np.uint8)
        mask[sub.constraint_indices] = 1
        allowed = bytearray(mask.tobytes())
    return _run(inst, sub.constraint_indices, sigma, measure, rng, max_steps, log, allowed, on_step)


def theorem7_budget(params: Params, s: int, *, n: int | None = None, m: int | None = None) -> int:
    """``ceil((n + m*xi) / ln(1/(1-eps))) + s`` resamplings.

    From an arbitrary start, the run exceeds this with probability at most
    ``(1-eps)^s``. ``n`` and ``m`` default to the instance counts in ``params``.
    """
    if params.epsilon <= 0:
        raise ParameterError("budget needs positive slack")
    n = params.n if n is None else n
    m = params.m if m is None else m
    return math.ceil((n + m * params.xi) / params.log_inv_slack) + int(s)


def lemma9_t0(params: Params, r: int) -> float:
    """``T0 = (kd)^r * xi / ln(1/(1-eps))``."""
    if params.epsilon <= 0:
        raise ParameterError("budget needs positive slack")
    log_t0 = r * math.log(params.kd) + math.log(params.xi) - math.log(params.log_inv_slack)
    return math.exp(log_t0) if log_t0 < 700 else math.inf


def lemma9_budget(params: Params, r: int, s: float, *, C: float | None = None) -> int:
    """Per-query step budget ``C * (T0 + s)``, rounded up and capped at :data:`BUDGET_CAP`."""
    C = default_polylog_constant(params) if C is None else C
    total = C * (lemma9_t0(params, r) + s)
    if not math.isfinite(total) or total >= BUDGET_CAP:
        return BUDGET_CAP
    return math.ceil(total)
