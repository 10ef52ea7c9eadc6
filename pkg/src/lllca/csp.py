"""Constraint satisfaction instances in the variable setting.

Variables take values ``0..|D|-1``. A state is a numpy ``int64`` array of
length ``n`` where :data:`UNSET` marks variables that have not been sampled
yet. Constraints come in three flavours:

* :class:`Constraint` -- an explicit set of forbidden value tuples;
* :class:`Clause` -- a CNF clause over boolean variables (one forbidden tuple);
* :class:`PredicateConstraint` -- a black-box violation predicate with no
  exact mass. Such constraints run fine under the resampling engine but the
  condition checkers refuse them.

The dependency graph is never built globally; neighbours are read off the
variable/constraint incidence lists and cached per constraint on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np

UNSET = -1


class InstanceError(ValueError):
    """Malformed instance, measure or state."""


class MassFreeError(InstanceError):
    """Exact event probability requested for a predicate-only constraint."""


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class Constraint:
    """Constraint given by the set of value tuples (over ``scope``) it forbids."""

    scope: tuple[int, ...]
    forbidden: frozenset[tuple[int, ...]]

    def __init__(self, scope: Iterable[int], forbidden: Iterable[Sequence[int]]):
        object.__setattr__(self, "scope", tuple(int(v) for v in scope))
        object.__setattr__(
            self, "forbidden", frozenset(tuple(int(a) for a in f) for f in forbidden)
        )

    @property
    def has_mass(self) -> bool:
        return True

    def forbidden_tuples(self) -> frozenset[tuple[int, ...]]:
        return self.forbidden

    def is_violated_by(self, sigma) -> bool:
        return tuple(int(sigma[v]) for v in self.scope) in self.forbidden

    def forbids(self, values: Sequence[int]) -> bool:
        return tuple(int(a) for a in values) in self.forbidden


@dataclass(frozen=True)
class Clause:
    """Disjunction of literals over boolean variables.

    ``literals`` are signed, 1-based DIMACS style (``-3`` is "not x3", i.e.
    variable index 2 negated). The clause is violated by exactly one
    assignment of its scope: every literal false.
    """

    literals: tuple[int, ...]

    def __init__(self, literals: Iterable[int]):
        lits = tuple(int(l) for l in literals)
        if any(l == 0 for l in lits):
            raise InstanceError("literal 0 is not a variable")
        object.__setattr__(self, "literals", lits)

    @cached_property
    def scope(self) -> tuple[int, ...]:
        return tuple(abs(l) - 1 for l in self.literals)

    @cached_property
    def falsifying(self) -> tuple[int, ...]:
        # positive literal is false at 0, negative literal at 1
        return tuple(0 if l > 0 else 1 for l in self.literals)

    @property
    def has_mass(self) -> bool:
        return True

    @property
    def forbidden(self) -> frozenset[tuple[int, ...]]:
        return frozenset([self.falsifying])

    def forbidden_tuples(self) -> frozenset[tuple[int, ...]]:
        return self.forbidden

    def is_violated_by(self, sigma) -> bool:
        for v, f in zip(self.scope, self.falsifying):
            if sigma[v] != f:
                return False
        return True

    def forbids(self, values: Sequence[int]) -> bool:
        return tuple(int(a) for a in values) == self.falsifying


@dataclass(frozen=True, eq=False)
class PredicateConstraint:
    """Constraint whose violation is decided by ``predicate(values)``.

    ``values`` is the tuple of scope values in scope order. These constraints
    carry no exact mass.
    """

    scope: tuple[int, ...]
    predicate: Callable[[tuple[int, ...]], bool] = field(repr=False)

    def __init__(self, scope: Iterable[int], predicate: Callable[[tuple[int, ...]], bool]):
        object.__setattr__(self, "scope", tuple(int(v) for v in scope))
        object.__setattr__(self, "predicate", predicate)

    @property
    def has_mass(self) -> bool:
        return False

    def forbidden_tuples(self):
        raise MassFreeError("predicate constraint has no explicit forbidden set")

    def is_violated_by(self, sigma) -> bool:
        return bool(self.predicate(tuple(int(sigma[v]) for v in self.scope)))

    def forbids(self, values: Sequence[int]) -> bool:
        return bool(self.predicate(tuple(int(a) for a in values)))


AnyConstraint = Constraint | Clause | PredicateConstraint


# ---------------------------------------------------------------------------
# product measure


@dataclass(frozen=True, eq=False)
class ProductMeasure:
    """Independent per-variable distributions; ``probs[x][a] = Pr[x = a]``."""

    probs: tuple[np.ndarray, ...]

    def __init__(self, probs: Iterable[Sequence[float]]):
        vecs = []
        for x, p in enumerate(probs):
            p = np.asarray(p, dtype=float)
            if p.ndim != 1 or p.size == 0:
                raise InstanceError(f"variable {x}: empty distribution")
            if np.any(p < 0) or not np.all(np.isfinite(p)):
                raise InstanceError(f"variable {x}: negative or non-finite probability")
            if abs(p.sum() - 1.0) > 1e-12:
                raise InstanceError(f"variable {x}: probabilities sum to {p.sum()!r}")
            p.setflags(write=False)
            vecs.append(p)
        object.__setattr__(self, "probs", tuple(vecs))

    @classmethod
    def uniform(cls, domain_sizes: Sequence[int]) -> ProductMeasure:
        return cls(np.full(s, 1.0 / s) for s in domain_sizes)

    @classmethod
    def bernoulli(cls, p_true: Sequence[float]) -> ProductMeasure:
        return cls([1.0 - p, p] for p in p_true)

    @property
    def n(self) -> int:
        return len(self.probs)

    @property
    def domain_sizes(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.probs)

    def prob(self, x: int, value: int) -> float:
        return float(self.probs[x][value])

    @cached_property
    def _thresholds(self) -> np.ndarray:
        # thresholds[x, j] = Pr[x <= j]; a uniform u maps to #{j : u >= thresholds[x, j]}
        width = max((p.size for p in self.probs), default=1)
        th = np.ones((self.n, max(width - 1, 1)))
        for x, p in enumerate(self.probs):
            c = np.minimum(np.cumsum(p)[:-1], 1.0)
            th[x, : c.size] = c
        return th

    def draw(self, variables: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Independent draws for each entry of ``variables`` (one uniform each)."""
        u = rng.random(len(variables))
        th = self._thresholds[variables]
        return (u[:, None] >= th).sum(axis=1)

    def sample_into(self, sigma: np.ndarray, variables, rng: np.random.Generator) -> None:
        variables = np.asarray(variables, dtype=np.int64)
        if variables.size:
            sigma[variables] = self.draw(variables, rng)


def sample_variable(measure: ProductMeasure, x: int, rng: np.random.Generator) -> int:
    """One draw of variable ``x`` from ``measure``; reproducible for a seeded ``rng``."""
    return int(measure.draw(np.array([x]), rng)[0])


def new_assignment(n: int) -> np.ndarray:
    return np.full(n, UNSET, dtype=np.int64)


# ---------------------------------------------------------------------------
# instance


def _csr(lists: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(l) for l in lists])
    idx = np.fromiter((v for l in lists for v in l), dtype=np.int64, count=int(ptr[-1]))
    return ptr, idx


def _rows_of(ptr: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Flat positions covered by CSR rows ``rows``, in row order."""
    starts = ptr[rows]
    counts = ptr[rows + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(starts - np.cumsum(counts) + counts, counts)
    return offsets + np.arange(total)


def _gather(ptr: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Concatenate CSR rows ``rows`` without a Python loop."""
    return idx[_rows_of(ptr, rows)]


@dataclass(frozen=True, eq=False)
class Instance:
    """An immutable CSP ``(X, C)`` with its incidence lists.

    Build with :func:`build_instance`; do not call the constructor directly.
    """

    domain_sizes: tuple[int, ...]
    constraints: tuple[AnyConstraint, ...]
    var_to_constraints: tuple[tuple[int, ...], ...]
    constraint_to_vars: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return len(self.domain_sizes)

    @property
    def m(self) -> int:
        return len(self.constraints)

    @cached_property
    def k(self) -> int:
        return max((len(s) for s in self.constraint_to_vars), default=0)

    @cached_property
    def d(self) -> int:
        return max((len(c) for c in self.var_to_constraints), default=0)

    @cached_property
    def has_mass(self) -> bool:
        return all(c.has_mass for c in self.constraints)

    @cached_property
    def _var_csr(self):
        return _csr(self.var_to_constraints)

    @cached_property
    def _con_csr(self):
        return _csr(self.constraint_to_vars)

    @cached_property
    def scope_arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(np.asarray(s, dtype=np.int64) for s in self.constraint_to_vars)

    @cached_property
    def _closed_nbhd_cache(self) -> dict[int, tuple[int, ...]]:
        return {}

    def closed_neighborhood(self, i: int) -> tuple[int, ...]:
        """``D(i) ∪ {i}`` in ascending order (memoised)."""
        cache = self._closed_nbhd_cache
        got = cache.get(i)
        if got is None:
            s: set[int] = set()
            for v in self.constraint_to_vars[i]:
                s.update(self.var_to_constraints[v])
            got = tuple(sorted(s))
            cache[i] = got
        return got

    @cached_property
    def _forbidden_table(self):
        # one row per forbidden tuple of a mass-carrying constraint
        width = max(self.k, 1)
        owner, rvars, rvals, pad = [], [], [], []
        row_ptr = np.zeros(self.m + 1, dtype=np.int64)
        for i, c in enumerate(self.constraints):
            rows = 0
            if c.has_mass:
                s = c.scope
                for f in sorted(c.forbidden_tuples()):
                    owner.append(i)
                    rvars.append(list(s) + [0] * (width - len(s)))
                    rvals.append(list(f) + [0] * (width - len(s)))
                    pad.append([False] * len(s) + [True] * (width - len(s)))
                    rows += 1
            row_ptr[i + 1] = row_ptr[i] + rows
        return (
            row_ptr,
            np.asarray(owner, dtype=np.int64),
            np.asarray(rvars, dtype=np.int64).reshape(-1, width),
            np.asarray(rvals, dtype=np.int64).reshape(-1, width),
            np.asarray(pad, dtype=bool).reshape(-1, width),
        )

    def violated_among(self, constraints: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        """Ascending indices of ``constraints`` violated by ``sigma``.

        Unset scope variables never match, so a partially assigned scope is
        reported as satisfied; callers check assignment separately.
        """
        constraints = np.unique(np.asarray(constraints, dtype=np.int64))
        if constraints.size < 48 or not self.has_mass:
            cons = self.constraints
            out = []
            for i in constraints.tolist():
                c = cons[i]
                if all(sigma[v] >= 0 for v in c.scope) and c.is_violated_by(sigma):
                    out.append(i)
            return np.asarray(out, dtype=np.int64)
        row_ptr, owner, rvars, rvals, pad = self._forbidden_table
        rows = _rows_of(row_ptr, constraints)
        hit = ((sigma[rvars[rows]] == rvals[rows]) | pad[rows]).all(axis=1)
        return np.unique(owner[rows[hit]])


def build_instance(domain_sizes: Sequence[int], constraints: Sequence[AnyConstraint]) -> Instance:
    """Validate constraints against the domains and build incidence lists."""
    domain_sizes = tuple(int(s) for s in domain_sizes)
    if any(s < 1 for s in domain_sizes):
        raise InstanceError("every domain must be finite and nonempty")
    n = len(domain_sizes)
    v2c: list[list[int]] = [[] for _ in range(n)]
    c2v: list[tuple[int, ...]] = []
    for i, c in enumerate(constraints):
        scope = c.scope
        if not scope:
            raise InstanceError(f"constraint {i} has an empty scope")
        if len(set(scope)) != len(scope):
            raise InstanceError(f"constraint {i} repeats a variable in its scope")
        for v in scope:
            if not 0 <= v < n:
                raise InstanceError(f"constraint {i} references variable {v} outside [0, {n})")
        if c.has_mass:
            for f in c.forbidden_tuples():
                if len(f) != len(scope):
                    raise InstanceError(f"constraint {i}: forbidden tuple of wrong arity")
                for v, a in zip(scope, f):
                    if not 0 <= a < domain_sizes[v]:
                        raise InstanceError(
                            f"constraint {i}: value {a} outside the domain of variable {v}"
                        )
        for v in scope:
            v2c[v].append(i)
        c2v.append(tuple(scope))
    return Instance(
        domain_sizes=domain_sizes,
        constraints=tuple(constraints),
        var_to_constraints=tuple(tuple(l) for l in v2c),
        constraint_to_vars=tuple(c2v),
    )


def _check_constraint(inst: Instance, i: int) -> None:
    if not 0 <= i < inst.m:
        raise IndexError(f"constraint index {i} outside [0, {inst.m})")


def dependency_neighbors(inst: Instance, i: int) -> set[int]:
    """``D(i)``: constraints other than ``i`` sharing a variable with it."""
    _check_constraint(inst, i)
    return set(inst.closed_neighborhood(i)) - {i}


def lopsided_neighbors(inst: Instance, i: int) -> set[int]:
    """Constraints that share a variable with ``i`` and can disagree with it there.

    ``j`` is kept iff some forbidden tuple of ``i`` and some forbidden tuple of
    ``j`` assign different values to a common variable. For clauses this is
    "shares a variable with opposite sign". Constraints that are compatible on
    every shared variable are dropped (they are positively correlated).
    """
    _check_constraint(inst, i)
    ci = inst.constraints[i]
    fi = ci.forbidden_tuples()
    pos_i = {v: p for p, v in enumerate(ci.scope)}
    out = set()
    for j in inst.closed_neighborhood(i):
        if j == i:
            continue
        cj = inst.constraints[j]
        shared = [(pos_i[v], q) for q, v in enumerate(cj.scope) if v in pos_i]
        fj = cj.forbidden_tuples()
        if any(a[p] != b[q] for a in fi for b in fj for p, q in shared):
            out.add(j)
    return out


def _bfs(inst: Instance, start: np.ndarray, r: float) -> tuple[np.ndarray, int | None]:
    """Constraints within distance ``r`` of ``start``.

    Returns the sorted constraint indices and, if the search ran out of new
    constraints before reaching depth ``r``, the depth at which it saturated
    (``None`` otherwise).
    """
    var_ptr, var_idx = inst._var_csr
    con_ptr, con_idx = inst._con_csr
    seen_c = np.zeros(inst.m, dtype=bool)
    seen_v = np.zeros(inst.n, dtype=bool)
    frontier = np.unique(start)
    seen_c[frontier] = True
    found = [frontier]
    depth = 0
    while frontier.size:
        vs = _gather(con_ptr, con_idx, frontier)
        vs = np.unique(vs[~seen_v[vs]])
        seen_v[vs] = True
        cs = _gather(var_ptr, var_idx, vs)
        cs = np.unique(cs[~seen_c[cs]])
        if cs.size == 0:
            return np.sort(np.concatenate(found)), depth
        if depth >= r:
            break
        seen_c[cs] = True
        found.append(cs)
        frontier = cs
        depth += 1
    return np.sort(np.concatenate(found)), (depth if frontier.size == 0 else None)


def ball(inst: Instance, i: int, r: int) -> set[int]:
    """``Ball(i, r)``: constraints at dependency-graph distance at most ``r`` from ``i``."""
    _check_constraint(inst, i)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    cons, _ = _bfs(inst, np.array([i], dtype=np.int64), r)
    return set(cons.tolist())


@dataclass(frozen=True, eq=False)
class SubProblem:
    """Sub-CSP induced by a set of constraints and the variables they touch."""

    parent: Instance
    constraint_indices: np.ndarray
    variable_indices: np.ndarray
    saturation: int | None = None

    @classmethod
    def of(cls, inst: Instance, constraints, saturation: int | None = None) -> SubProblem:
        cons = np.unique(np.asarray(constraints, dtype=np.int64))
        con_ptr, con_idx = inst._con_csr
        vs = np.unique(_gather(con_ptr, con_idx, cons))
        return cls(inst, cons, vs, saturation)

    @classmethod
    def full(cls, inst: Instance) -> SubProblem:
        return cls.of(inst, np.arange(inst.m, dtype=np.int64))

    @property
    def m(self) -> int:
        return int(self.constraint_indices.size)

    @property
    def n(self) -> int:
        return int(self.variable_indices.size)


def induced_subproblem(inst: Instance, x: int, r: int) -> SubProblem:
    """``I(x, r)``: the union of ``Ball(i, r)`` over constraints ``i`` containing ``x``.

    A variable in no constraint yields an empty subproblem.
    """
    if not 0 <= x < inst.n:
        raise IndexError(f"variable index {x} outside [0, {inst.n})")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    start = np.asarray(inst.var_to_constraints[x], dtype=np.int64)
    if start.size == 0:
        return SubProblem.of(inst, start, saturation=0)
    cons, sat = _bfs(inst, start, r)
    return SubProblem.of(inst, cons, saturation=sat)


def violated(inst: Instance, i: int, sigma: np.ndarray) -> bool:
    """Whether ``sigma`` restricted to ``var(i)`` is forbidden by constraint ``i``."""
    _check_constraint(inst, i)
    c = inst.constraints[i]
    for v in c.scope:
        if sigma[v] == UNSET:
            raise InstanceError(f"variable {v} of constraint {i} is unset")
    return c.is_violated_by(sigma)


def event_probability(inst: Instance, measure: ProductMeasure, i: int) -> float:
    """Exact ``mu(A_i)``: total product mass of the forbidden tuples."""
    _check_constraint(inst, i)
    c = inst.constraints[i]
    if not c.has_mass:
        raise MassFreeError(f"constraint {i} is predicate-only; its mass is not exact")
    total = 0.0
    for f in c.forbidden_tuples():
        p = 1.0
        for v, a in zip(c.scope, f):
            p *= measure.probs[v][a]
        total += p
    return total


def event_probabilities(inst: Instance, measure: ProductMeasure) -> np.ndarray:
    return np.array([event_probability(inst, measure, i) for i in range(inst.m)])


def enumerate_event_probability(inst: Instance, measure: ProductMeasure, i: int) -> float:
    """Brute-force ``mu(A_i)`` by walking every scope assignment."""
    c = inst.constraints[i]
    total = 0.0
    for values in product(*(range(inst.domain_sizes[v]) for v in c.scope)):
        if c.forbids(values):
            p = 1.0
            for v, a in zip(c.scope, values):
                p *= measure.probs[v][a]
            total += p
    return total
