"""Bounded-occurrence k-CNF formulas as LLL instances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..csp import Clause, Instance, InstanceError, ProductMeasure, build_instance


@dataclass(frozen=True)
class CnfFormula:
    """``n`` boolean variables and clauses of signed 1-based literals."""

    n: int
    clauses: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(tuple(int(l) for l in c) for c in self.clauses))
        for idx, c in enumerate(self.clauses):
            if not c:
                raise InstanceError(f"clause {idx} is empty")
            vs = [abs(l) for l in c]
            if 0 in vs:
                raise InstanceError(f"clause {idx} contains literal 0")
            if len(set(vs)) != len(vs):
                raise InstanceError(f"clause {idx} contains a variable twice")
            if max(vs) > self.n:
                raise InstanceError(f"clause {idx} references variable {max(vs)} > n={self.n}")

    @property
    def m(self) -> int:
        return len(self.clauses)

    @cached_property
    def k(self) -> int:
        return max((len(c) for c in self.clauses), default=0)

    @cached_property
    def positive_counts(self) -> np.ndarray:
        pos = np.zeros(self.n, dtype=np.int64)
        for c in self.clauses:
            for l in c:
                if l > 0:
                    pos[l - 1] += 1
        return pos

    @cached_property
    def occurrences(self) -> np.ndarray:
        """``d_i``: number of clauses containing variable ``i`` (0-based)."""
        occ = np.zeros(self.n, dtype=np.int64)
        for c in self.clauses:
            for l in c:
                occ[abs(l) - 1] += 1
        return occ

    @cached_property
    def theta(self) -> np.ndarray:
        """Fraction of each variable's occurrences that are positive (0 if unused)."""
        occ = self.occurrences
        return np.divide(self.positive_counts, occ, out=np.zeros(self.n), where=occ > 0)

    @cached_property
    def d(self) -> int:
        return int(self.occurrences.max(initial=0))

    def to_instance(self) -> Instance:
        return build_instance([2] * self.n, [Clause(c) for c in self.clauses])


def gst_measure(cnf: CnfFormula) -> ProductMeasure:
    """Product measure setting ``x_i`` true w.p. ``1/2 + (2(1-theta_i)d_i - d) / (2dk)``.

    Variables that occur mostly negated lean true and vice versa.
    """
    k, d = cnf.k, cnf.d
    if k <= 0 or d <= 0:
        raise InstanceError("gst measure needs k, d > 0")
    negatives = cnf.occurrences - cnf.positive_counts  # (1 - theta_i) d_i
    p = 0.5 + (2 * negatives - d) / (2 * d * k)
    if np.any(p < 0) or np.any(p > 1):
        raise InstanceError("measure outside [0, 1]; malformed occurrence counts")
    return ProductMeasure.bernoulli(p)


def sat_psi(k: int) -> float:
    """``e / (2^k - e)``, the per-clause psi."""
    if k <= 1:
        raise ValueError("need 2^k > e, i.e. k >= 2")
    return math.e / (2.0**k - math.e)


def sat_slack(k: int, d: int) -> float:
    """Largest ``eps`` with ``d(k+1) <= (1-eps) 2^(k+1)/e`` (negative if none)."""
    return 1.0 - math.e * d * (k + 1) / 2.0 ** (k + 1)


@dataclass(frozen=True)
class SatTheoremCheck:
    holds: bool
    lhs: float
    rhs: float
    slack: float


def check_sat_theorem(k: int, d: int, eta: float = 0.0, epsilon: float = 0.0) -> SatTheoremCheck:
    """Test ``[d(k+1)]^(1+eta) <= (1-eps) 2^(k+1) / e``.

    With ``eta > 0`` (and ``eps = 0``) this is the polynomial-query regime and
    ``slack`` is ``1 - (kd)^-eta``; with ``eta = 0`` it is the polylog-query
    regime and ``slack`` is :func:`sat_slack`.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    lhs = float(d * (k + 1)) ** (1.0 + eta)
    rhs = (1.0 - epsilon) * 2.0 ** (k + 1) / math.e
    slack = 1.0 - float(k * d) ** (-eta) if eta > 0 else sat_slack(k, d)
    return SatTheoremCheck(lhs <= rhs, lhs, rhs, slack)
