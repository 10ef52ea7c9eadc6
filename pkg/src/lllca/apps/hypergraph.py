"""Non-uniform hypergraph 2-coloring."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..csp import Constraint, Instance, InstanceError, ProductMeasure, build_instance

CONDITION_RHS = 1.0 / (6.0 * math.sqrt(2.0))


@dataclass(frozen=True)
class Hypergraph:
    n: int
    edges: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        edges = tuple(tuple(sorted(int(v) for v in e)) for e in self.edges)
        for idx, e in enumerate(edges):
            if len(set(e)) != len(e):
                raise InstanceError(f"edge {idx} repeats a vertex")
            if e and (e[0] < 0 or e[-1] >= self.n):
                raise InstanceError(f"edge {idx} has a vertex outside [0, {self.n})")
        object.__setattr__(self, "edges", edges)

    @cached_property
    def delta_profile(self) -> dict[int, int]:
        """``size -> Delta_size``: the most size-``i`` edges any vertex lies in."""
        per: dict[int, Counter] = {}
        for e in self.edges:
            c = per.setdefault(len(e), Counter())
            c.update(e)
        return {i: max(c.values()) for i, c in sorted(per.items())}


def edge_x(size: int) -> float:
    return 0.5 ** (0.5 * (size - 1))


def edge_psi(size: int) -> float:
    """``2 x_e / (1 - x_e)`` with ``x_e = 2^-(|e|-1)/2``."""
    x = edge_x(size)
    return 2.0 * x / (1.0 - x)


@dataclass(frozen=True)
class HypergraphCondition:
    lhs: float
    rhs: float
    epsilon: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def hypergraph_condition(h: Hypergraph) -> HypergraphCondition:
    """``sum_i Delta_i 2^(-i/2) <= (1 - eps) / (6 sqrt 2)``; reports the largest such ``eps``."""
    lhs = sum(delta * 2.0 ** (-i / 2.0) for i, delta in h.delta_profile.items())
    return HypergraphCondition(lhs, CONDITION_RHS, 1.0 - lhs / CONDITION_RHS)


@dataclass(frozen=True, eq=False)
class HypergraphLll:
    inst: Instance
    measure: ProductMeasure
    psi: np.ndarray
    condition: HypergraphCondition


def hypergraph_instance(h: Hypergraph) -> HypergraphLll:
    """One constraint per edge forbidding both monochromatic colorings; uniform measure."""
    constraints = []
    for idx, e in enumerate(h.edges):
        if len(e) < 3:
            raise InstanceError(f"edge {idx} has size {len(e)} < 3")
        constraints.append(Constraint(e, [(0,) * len(e), (1,) * len(e)]))
    inst = build_instance([2] * h.n, constraints)
    psi = np.array([edge_psi(len(e)) for e in h.edges])
    return HypergraphLll(inst, ProductMeasure.uniform([2] * h.n), psi, hypergraph_condition(h))
