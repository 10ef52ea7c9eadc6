"""Witness trees of a resampling log and the branching process that generates them.

Trees are unordered and labelled by constraint indices; :class:`WitnessTree`
stores children in canonical order so ``==`` and ``hash`` are isomorphism
tests. The text form is a nested parenthesised label list, e.g. ``(0 (1 (0)))``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .csp import Instance, ProductMeasure, event_probability
from .engine import resample_full

TREE_GUARD = 100_000


@dataclass(frozen=True)
class WitnessTree:
    label: int
    children: tuple[WitnessTree, ...] = ()

    def __post_init__(self):
        kids = tuple(sorted(self.children, key=lambda t: t.encoding))
        object.__setattr__(self, "children", kids)

    @cached_property
    def encoding(self) -> str:
        if not self.children:
            return f"({self.label})"
        return f"({self.label} " + " ".join(c.encoding for c in self.children) + ")"

    @cached_property
    def size(self) -> int:
        return 1 + sum(c.size for c in self.children)

    @cached_property
    def depth(self) -> int:
        return 1 + max((c.depth for c in self.children), default=0)

    def __eq__(self, other):
        return isinstance(other, WitnessTree) and self.encoding == other.encoding

    def __hash__(self):
        return hash(self.encoding)

    def __str__(self):
        return self.encoding

    def vertices(self) -> Iterable[WitnessTree]:
        yield self
        for c in self.children:
            yield from c.vertices()

    def labels(self) -> list[int]:
        return [v.label for v in self.vertices()]

    def levels(self) -> list[list[int]]:
        """Labels grouped by depth (root level first)."""
        out: list[list[int]] = []
        frontier = [self]
        while frontier:
            out.append([v.label for v in frontier])
            frontier = [c for v in frontier for c in v.children]
        return out


def parse_tree(text: str) -> WitnessTree:
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def node() -> WitnessTree:
        nonlocal pos
        if tokens[pos] != "(":
            raise ValueError(f"expected '(' at token {pos}")
        label = int(tokens[pos + 1])
        pos += 2
        kids = []
        while tokens[pos] != ")":
            kids.append(node())
        pos += 1
        return WitnessTree(label, tuple(kids))

    tree = node()
    if pos != len(tokens):
        raise ValueError("trailing tokens after tree")
    return tree


def _eligible(inst: Instance, child: int, parent: int) -> bool:
    return child in inst.closed_neighborhood(parent)


def witness_tree(inst: Instance, W: Sequence[int], i: int) -> WitnessTree:
    """``tau_W(i)`` for the 1-based position ``i`` of the witness sequence ``W``.

    Going backwards from ``i-1``, ``w_j`` is attached below the deepest vertex
    whose label is ``w_j`` or a neighbour of it; ties go to the vertex created
    first.
    """
    if not 1 <= i <= len(W):
        raise IndexError(f"position {i} outside [1, {len(W)}]")
    labels = [W[i - 1]]
    depth = [0]
    parent = [-1]
    for j in range(i - 2, -1, -1):
        w = W[j]
        best = -1
        for v in range(len(labels)):
            if _eligible(inst, w, labels[v]) and (best < 0 or depth[v] > depth[best]):
                best = v
        if best >= 0:
            labels.append(w)
            depth.append(depth[best] + 1)
            parent.append(best)
    return _assemble(labels, parent)


def _assemble(labels: list[int], parent: list[int]) -> WitnessTree:
    kids: list[list[int]] = [[] for _ in labels]
    for v, p in enumerate(parent):
        if p >= 0:
            kids[p].append(v)

    def build(v: int) -> WitnessTree:
        return WitnessTree(labels[v], tuple(build(c) for c in kids[v]))

    return build(0)


def all_witness_trees(inst: Instance, W: Sequence[int]) -> list[WitnessTree]:
    return [witness_tree(inst, W, i) for i in range(1, len(W) + 1)]


def occurs(inst: Instance, W: Sequence[int], tau: WitnessTree) -> bool:
    """Whether ``tau_W(k) == tau`` for some ``k``."""
    for k in range(tau.size, len(W) + 1):
        if W[k - 1] == tau.label and witness_tree(inst, W, k) == tau:
            return True
    return False


def tree_probability_bound(tau: WitnessTree, inst: Instance, measure: ProductMeasure) -> float:
    """``prod over vertices of mu(A_label)``, the occurrence bound for ``tau``."""
    p = 1.0
    for lab in tau.labels():
        p *= event_probability(inst, measure, lab)
    return p


def lemma10_bound(psi_j: float, epsilon: float, s: int) -> float:
    """``psi_j * (1-eps)^s``: total occurrence mass of trees of size ``>= s`` rooted at ``j``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("slack must lie in (0, 1)")
    return psi_j * (1.0 - epsilon) ** s


# ---------------------------------------------------------------------------
# branching process


def _include_prob(psi: np.ndarray, g: int) -> float:
    return psi[g] / (1.0 + psi[g])


@dataclass(frozen=True)
class GwSample:
    tree: WitnessTree
    truncated: bool


def gw_sample(
    inst: Instance, psi, j: int, rng: np.random.Generator, size_cap: int = TREE_GUARD
) -> GwSample:
    """Draw a tree rooted at ``j``.

    Vertices are expanded breadth first; a vertex labelled ``l`` gets a child
    labelled ``g`` for each ``g`` in ``D(l) ∪ {l}`` independently with
    probability ``psi_g / (1 + psi_g)``. Generation stops at ``size_cap``
    vertices, flagging ``truncated`` if a further child was drawn.
    """
    if size_cap < 1:
        raise ValueError("size_cap must be at least 1")
    psi = np.asarray(psi, dtype=float)
    labels = [j]
    parent = [-1]
    truncated = False
    v = 0
    while v < len(labels) and not truncated:
        lab = labels[v]
        for g in inst.closed_neighborhood(lab):
            if rng.random() < _include_prob(psi, g):
                if len(labels) >= size_cap:
                    truncated = True
                    break
                labels.append(g)
                parent.append(v)
        v += 1
    return GwSample(_assemble(labels, parent), truncated)


def _check_children(inst: Instance, tau: WitnessTree) -> None:
    for v in tau.vertices():
        kid_labels = [c.label for c in v.children]
        if len(set(kid_labels)) != len(kid_labels):
            raise ValueError(f"vertex {v.label} has repeated child labels")
        allowed = set(inst.closed_neighborhood(v.label))
        for lab in kid_labels:
            if lab not in allowed:
                raise ValueError(f"child label {lab} not in D({v.label}) + {{{v.label}}}")


def gw_probability(tau: WitnessTree, inst: Instance, psi) -> float:
    """Exact probability that :func:`gw_sample` (uncapped) outputs ``tau``.

    Equals ``psi_root^-1 * prod_v psi_v / prod_{g in D(v)+v} (1 + psi_g)``.
    """
    _check_children(inst, tau)
    psi = np.asarray(psi, dtype=float)
    log_p = -math.log(psi[tau.label])
    for v in tau.vertices():
        log_p += math.log(psi[v.label])
        log_p -= float(sum(math.log1p(psi[g]) for g in inst.closed_neighborhood(v.label)))
    return math.exp(log_p)


def gw_truncation_mass(inst: Instance, psi, j: int, size_cap: int) -> tuple[float, float]:
    """Exact (complete mass, truncated mass) of :func:`gw_sample` at ``size_cap``.

    Walks the generator's decision tree directly; the two numbers sum to one up
    to round-off.
    """
    psi = np.asarray(psi, dtype=float)
    complete = 0.0
    truncated = 0.0

    def walk(labels: list[int], v: int, prob: float) -> None:
        nonlocal complete, truncated
        if v == len(labels):
            complete += prob
            return
        opts = inst.closed_neighborhood(labels[v])
        room = size_cap - len(labels)
        # enumerate which options are drawn, in order, up to the first overflow
        def choose(pos: int, chosen: list[int], p: float) -> None:
            nonlocal truncated
            if pos == len(opts):
                walk(labels + chosen, v + 1, p)
                return
            g = opts[pos]
            x = _include_prob(psi, g)
            if len(chosen) >= room:
                # drawing g would overflow: truncation; not drawing continues
                truncated += p * x
                choose(pos + 1, chosen, p * (1 - x))
            else:
                choose(pos + 1, chosen + [g], p * x)
                choose(pos + 1, chosen, p * (1 - x))

        choose(0, [], prob)

    walk([j], 0, 1.0)
    return complete, truncated


def enumerate_trees(inst: Instance, j: int, max_size: int, *, guard: int = TREE_GUARD) -> list[WitnessTree]:
    """All trees rooted at ``j`` with at most ``max_size`` vertices whose children
    carry distinct labels from ``D(parent) ∪ {parent}``."""
    memo: dict[tuple[int, int], list[WitnessTree]] = {}

    def trees(label: int, budget: int) -> list[WitnessTree]:
        key = (label, budget)
        if key in memo:
            return memo[key]
        out = [WitnessTree(label)]
        opts = inst.closed_neighborhood(label)
        for r in range(1, min(len(opts), budget - 1) + 1):
            for kids in combinations(opts, r):
                out.extend(WitnessTree(label, c) for c in _combine(kids, budget - 1, trees))
                if len(out) > guard:
                    raise OverflowError(f"more than {guard} trees; lower max_size")
        memo[key] = out
        return out

    if max_size < 1:
        return []
    return sorted(set(trees(j, max_size)), key=lambda t: (t.size, t.encoding))


def _combine(kid_labels, budget: int, trees) -> list[WitnessTree]:
    # choose one subtree per child label with total size <= budget
    out = []

    def rec(pos: int, left: int, acc: list[WitnessTree]):
        if pos == len(kid_labels):
            out.append(tuple(acc))
            return
        remaining_kids = len(kid_labels) - pos - 1
        for sub in trees(kid_labels[pos], left - remaining_kids):
            if sub.size <= left - remaining_kids:
                rec(pos + 1, left - sub.size, acc + [sub])

    rec(0, budget, [])
    return out


def count_trees_by_size(inst: Instance, j: int, max_size: int) -> list[int]:
    """Number of trees (as in :func:`enumerate_trees`) of each size ``0..max_size``.

    Independent of the enumerator: a size-generating-function recursion over
    child subsets, with no trees materialised.
    """
    # table[l][s] = number of trees rooted at l with exactly s vertices; the
    # children form a forest over distinct labels of D(l)+l, i.e. the
    # coefficient of z^(s-1) in prod_g (1 + T_g(z)).
    labels = range(inst.m)
    table = {l: [0] * (max_size + 1) for l in labels}
    for s in range(1, max_size + 1):
        for l in labels:
            forest = [1] + [0] * (s - 1)
            for g in inst.closed_neighborhood(l):
                new = forest[:]
                for a in range(s):
                    if forest[a]:
                        for b in range(1, s - a):
                            new[a + b] += forest[a] * table[g][b]
                forest = new
            table[l][s] = forest[s - 1]
    return table[j]


# ---------------------------------------------------------------------------
# Monte-Carlo occurrence statistics


@dataclass
class OccurrenceStats:
    """Per-run occurrence counts of witness trees over ``runs`` seeded MT runs."""

    runs: int
    tree_runs: Counter  # tree -> number of runs in which it occurred
    big_counts: dict[tuple[int, int], list[int]]  # (root, s) -> per-run count of trees of size >= s

    def frequency(self, tau: WitnessTree) -> tuple[float, float]:
        """Occurrence frequency of ``tau`` and its standard error."""
        p = self.tree_runs.get(tau, 0) / self.runs
        return p, math.sqrt(max(p * (1 - p), 0.0) / self.runs)

    def big_mass(self, root: int, s: int) -> tuple[float, float]:
        """Mean number of occurring trees rooted at ``root`` with size ``>= s``, with its SE."""
        counts = np.asarray(self.big_counts[(root, s)], dtype=float)
        return float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(counts.size))


def occurrence_stats(
    inst: Instance,
    measure: ProductMeasure,
    runs: int,
    seed: int,
    *,
    max_size: int = 3,
    sizes: Sequence[int] = (),
    max_steps: int = 10_000,
) -> OccurrenceStats:
    """Run ``runs`` seeded MT executions and tally the witness trees that occur.

    Trees with at most ``max_size`` vertices are counted per tree; for every
    root ``j`` and ``s`` in ``sizes`` the number of occurring trees of size at
    least ``s`` is recorded per run.
    """
    from .lca import substream

    tree_runs: Counter = Counter()
    big = {(j, s): [0] * runs for j in range(inst.m) for s in sizes}
    for run in range(runs):
        traj = resample_full(inst, measure, substream(seed, run), max_steps, log=False)
        W = traj.witness
        seen = set()
        for k in range(1, len(W) + 1):
            tau = witness_tree(inst, W, k)
            if tau.size <= max_size:
                seen.add(tau)
            for s in sizes:
                if tau.size >= s:
                    big[(tau.label, s)][run] += 1
        for tau in seen:
            tree_runs[tau] += 1
    return OccurrenceStats(runs, tree_runs, big)
