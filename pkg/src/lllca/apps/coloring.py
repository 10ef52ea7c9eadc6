"""Graph coloring with few neighborhood edges.

A uniformly random coloring from a palette of ``Delta + 1 - Z`` colors is
repaired until every vertex sees more than ``Z`` stable colors; vertices on
monochromatic edges are then uncolored and recolored greedily.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from ..csp import UNSET, Instance, InstanceError, PredicateConstraint, ProductMeasure, build_instance
from ..lca import LcaSession, open_session


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    adj: tuple[tuple[int, ...], ...]

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        nb: list[set[int]] = [set() for _ in range(n)]
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise InstanceError(f"self-loop at {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise InstanceError(f"edge ({a}, {b}) outside [0, {n})")
            nb[a].add(b)
            nb[b].add(a)
        return cls(n, tuple(tuple(sorted(s)) for s in nb))

    @cached_property
    def adj_sets(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(a) for a in self.adj)

    @cached_property
    def edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a in range(self.n) for b in self.adj[a] if a < b]

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adj), default=0)

    def neighborhood_edges(self, v: int) -> int:
        nb = self.adj[v]
        s = self.adj_sets
        return sum(1 for a, b in combinations(nb, 2) if b in s[a])

    def within(self, v: int, radius: int) -> tuple[int, ...]:
        """Vertices at distance at most ``radius`` from ``v``, sorted."""
        seen = {v}
        frontier = [v]
        for _ in range(radius):
            nxt = []
            for u in frontier:
                for w in self.adj[u]:
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
            frontier = nxt
        return tuple(sorted(seen))


def deficiency(g: Graph) -> int:
    """Largest ``B`` with every neighborhood spanning at most ``C(Delta, 2) - B`` edges."""
    full = math.comb(g.max_degree, 2)
    return min((full - g.neighborhood_edges(v) for v in range(g.n)), default=full)


def _in_mono_edge(g: Graph, col, u: int) -> bool:
    cu = col[u]
    return any(col[w] == cu for w in g.adj[u])


def _stable_count(g: Graph, col, v: int) -> int:
    groups: dict[int, list[int]] = defaultdict(list)
    for u in g.adj[v]:
        groups[col[u]].append(u)
    s = g.adj_sets
    count = 0
    for members in groups.values():
        if len(members) < 2:
            continue
        if not any(b not in s[a] for a, b in combinations(members, 2)):
            continue
        if any(_in_mono_edge(g, col, u) for u in members):
            continue
        count += 1
    return count


def stable_color_count(g: Graph, sigma, v: int) -> int:
    """``X_v``: colors on two non-adjacent neighbors of ``v``, none of whose holders is on a monochromatic edge."""
    return _stable_count(g, sigma, v)


@dataclass(frozen=True, eq=False)
class ColoringProblem:
    graph: Graph
    delta: int
    B: int
    Z: float
    palette: int

    @property
    def theorem_regime(self) -> bool:
        """Whether ``B >= Delta log^4 Delta``."""
        return self.delta >= 2 and self.B >= self.delta * math.log(self.delta) ** 4


def coloring_problem(
    g: Graph, B: int | None = None, *, palette: int | None = None, threshold: float | None = None
) -> ColoringProblem:
    """Palette ``Delta + 1 - Z`` (rounded down) with ``Z = B / (e^6 Delta)``.

    ``palette`` and ``threshold`` override the derived palette size and ``Z``.
    """
    delta = g.max_degree
    if delta < 2:
        raise InstanceError("need maximum degree >= 2")
    B = deficiency(g) if B is None else int(B)
    Z = B / (math.e**6 * delta) if threshold is None else float(threshold)
    size = math.floor(delta + 1 - Z) if palette is None else int(palette)
    if size < 1:
        raise InstanceError("palette is empty")
    return ColoringProblem(g, delta, B, Z, size)


@dataclass(frozen=True, eq=False)
class ColoringLll:
    problem: ColoringProblem
    inst: Instance
    measure: ProductMeasure
    psi: np.ndarray


def _bad_event(g: Graph, v: int, scope: tuple[int, ...], Z: float, palette: int):
    if len(g.adj[v]) < palette:
        # greedy always finds a free color for v; nothing to protect
        return lambda values: False

    def pred(values):
        return _stable_count(g, dict(zip(scope, values)), v) <= Z
    return pred


def coloring_instance(
    g: Graph, B: int | None = None, *, palette: int | None = None, threshold: float | None = None
) -> ColoringLll:
    """One variable per vertex; the constraint of ``v`` spans its distance-2 ball.

    It is violated iff ``X_v <= Z`` and ``v`` has at least as many neighbours
    as there are colors (otherwise the greedy phase can always color ``v``).
    """
    prob = coloring_problem(g, B, palette=palette, threshold=threshold)
    constraints = []
    for v in range(g.n):
        scope = g.within(v, 2)
        constraints.append(PredicateConstraint(scope, _bad_event(g, v, scope, prob.Z, prob.palette)))
    inst = build_instance([prob.palette] * g.n, constraints)
    psi = np.full(g.n, 1.0 / (prob.delta**4 - 1))
    return ColoringLll(prob, inst, ProductMeasure.uniform([prob.palette] * g.n), psi)


@dataclass(frozen=True)
class EventEstimate:
    p: float
    stderr: float
    samples: int

    def interval(self, z: float = 1.96) -> tuple[float, float]:
        return max(0.0, self.p - z * self.stderr), min(1.0, self.p + z * self.stderr)


def estimate_event_probability(lll: ColoringLll, v: int, samples: int, rng: np.random.Generator) -> EventEstimate:
    """Monte-Carlo estimate of ``mu(A_v)`` under the uniform palette measure."""
    c = lll.inst.constraints[v]
    draws = rng.integers(0, lll.problem.palette, size=(samples, len(c.scope)))
    hits = sum(c.forbids(row) for row in draws.tolist())
    p = hits / samples
    return EventEstimate(p, math.sqrt(p * (1 - p) / samples), samples)


@dataclass
class GreedyResult:
    coloring: np.ndarray
    uncolored: list[int]
    failed_at: int | None = None

    @property
    def ok(self) -> bool:
        return self.failed_at is None


def uncolor_and_greedy(g: Graph, sigma, palette: int) -> GreedyResult:
    """Uncolor every vertex on a monochromatic edge, then recolor them in index order.

    Each vertex gets the smallest palette color missing from its colored
    neighbors. If none is free the result reports the vertex it stuck on.
    """
    sigma = np.asarray(sigma)
    bad = [u for u in range(g.n) if _in_mono_edge(g, sigma, u)]
    col = sigma.astype(np.int64, copy=True)
    col[bad] = UNSET
    for u in bad:
        used = {int(col[w]) for w in g.adj[u]}
        c = next((c for c in range(palette) if c not in used), None)
        if c is None:
            return GreedyResult(col, bad, failed_at=u)
        col[u] = c
    return GreedyResult(col, bad)


def is_proper(g: Graph, col) -> bool:
    return all(col[a] != UNSET and col[a] != col[b] for a, b in g.edges) and all(
        col[v] != UNSET for v in range(g.n)
    )


@dataclass
class ColoringAnswer:
    vertex: int
    color: int | None
    guessed: bool = False
    aborted: bool = False

    @property
    def failed(self) -> bool:
        return self.color is None and not self.aborted


@dataclass
class ColoringSession:
    lll: ColoringLll
    session: LcaSession
    # colors handed out to vertices guessed to be uncolored, in query order
    guessed: dict[int, int] = field(default_factory=dict)


def open_coloring_session(lll: ColoringLll, q: int, delta: float, epsilon: float, **kw) -> ColoringSession:
    """Open a generic session over ``lll``; ``kw`` goes to :func:`open_session`."""
    return ColoringSession(lll, open_session(lll.inst, lll.measure, lll.psi, q, delta, epsilon, **kw))


def coloring_lca_query(cs: ColoringSession, v: int) -> ColoringAnswer:
    """Color of ``v`` in the final proper coloring, as far as the local run predicts.

    A vertex on a monochromatic edge is guessed to be uncolored and gets the
    smallest color not used by a neighbor that is either guessed earlier or
    predicted to keep its color.
    """
    res = cs.session.query(v)
    if res.aborted:
        return ColoringAnswer(v, None, aborted=True)
    if v in cs.guessed:
        return ColoringAnswer(v, cs.guessed[v], guessed=True)
    g = cs.lll.problem.graph
    sigma = cs.session.sigma
    if not _in_mono_edge(g, sigma, v):
        return ColoringAnswer(v, int(sigma[v]))
    used = set()
    for u in g.adj[v]:
        if u in cs.guessed:
            used.add(cs.guessed[u])
        elif not _in_mono_edge(g, sigma, u):
            used.add(int(sigma[u]))
    c = next((c for c in range(cs.lll.problem.palette) if c not in used), None)
    if c is None:
        return ColoringAnswer(v, None, guessed=True)
    cs.guessed[v] = c
    return ColoringAnswer(v, c, guessed=True)
