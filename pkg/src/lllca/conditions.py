"""LLL condition checkers and the scalar parameters the LCA is tuned by.

All logarithms are natural. Every formula here is either a ratio of
logarithms (base-free) or uses ``ln`` consistently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .csp import Instance, ProductMeasure, dependency_neighbors, event_probabilities, lopsided_neighbors

CLUSTER_NEIGHBOR_LIMIT = 25
SHEARER_LIMIT = 20


class ParameterError(ValueError):
    """Parameters for which a formula is undefined (e.g. ``delta <= q/n^2``)."""


class TooLargeError(ValueError):
    """An exact checker refused an instance beyond its size guard."""


def _psi_array(inst: Instance, psi) -> np.ndarray:
    psi = np.broadcast_to(np.asarray(psi, dtype=float), (inst.m,)).copy()
    if inst.m and (not np.all(np.isfinite(psi)) or np.any(psi <= 0)):
        raise ValueError("psi entries must be finite and strictly positive")
    return psi


@dataclass(frozen=True)
class ConditionCheck:
    """Per-constraint left-hand sides of an LLL-type condition.

    ``epsilon = 1 - max(lhs)``; negative means the condition fails. Entries of
    ``lhs`` that could not be computed are ``nan`` and then ``epsilon`` is
    ``None``.
    """

    lhs: np.ndarray
    epsilon: float | None

    @property
    def passed(self) -> np.ndarray:
        return self.lhs <= 1.0

    @property
    def holds(self) -> bool:
        return self.epsilon is not None and self.epsilon >= 0.0

    @property
    def complete(self) -> bool:
        return not np.any(np.isnan(self.lhs))


def _slack(lhs: np.ndarray) -> float | None:
    if np.any(np.isnan(lhs)):
        return None
    return 1.0 - float(lhs.max()) if lhs.size else 1.0


def _neighbors(inst: Instance, i: int, lopsided: bool) -> set[int]:
    return lopsided_neighbors(inst, i) if lopsided else dependency_neighbors(inst, i)


def check_general_lll(
    inst: Instance, measure: ProductMeasure, psi, *, lopsided: bool = False
) -> ConditionCheck:
    """Evaluate ``L_i = (mu(A_i)/psi_i) * prod_{j in D(i)+i} (1 + psi_j)`` for every ``i``.

    The subset sum over ``D(i) ∪ {i}`` is taken in its product closed form and
    accumulated in log space. With ``lopsided=True`` the neighbourhood is the
    lopsided one (see :func:`lllca.csp.lopsided_neighbors`).
    """
    psi = _psi_array(inst, psi)
    mu = event_probabilities(inst, measure)
    log1p_psi = np.log1p(psi)
    lhs = np.zeros(inst.m)
    for i in range(inst.m):
        if mu[i] == 0.0:
            continue
        nb = _neighbors(inst, i, lopsided)
        log_l = math.log(mu[i]) - math.log(psi[i]) + log1p_psi[i]
        log_l += float(sum(log1p_psi[j] for j in nb))
        lhs[i] = math.exp(log_l) if log_l < 700 else math.inf
    return ConditionCheck(lhs, _slack(lhs))


def check_general_lll_x_form(inst: Instance, measure: ProductMeasure, x) -> np.ndarray:
    """Classical form ``mu(A_i) <= x_i * prod_{j in D(i)} (1 - x_j)`` per constraint."""
    x = np.broadcast_to(np.asarray(x, dtype=float), (inst.m,))
    if inst.m and (np.any(x <= 0) or np.any(x >= 1)):
        raise ValueError("x entries must lie strictly inside (0, 1)")
    mu = event_probabilities(inst, measure)
    out = np.zeros(inst.m, dtype=bool)
    for i in range(inst.m):
        rhs = x[i]
        for j in sorted(dependency_neighbors(inst, i)):
            rhs *= 1.0 - x[j]
        out[i] = mu[i] <= rhs
    return out


def psi_to_x(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    return psi / (1.0 + psi)


def independent_set_polynomial(vertices: Sequence[int], adjacent, weight) -> float:
    """``sum over independent S of prod_{v in S} weight[v]`` (empty set counts 1).

    ``adjacent(u, v)`` decides edges. Uses the deletion recurrence
    ``Z(G) = Z(G - v) + w_v Z(G - N[v])``.
    """
    vs = tuple(vertices)
    if not vs:
        return 1.0
    v, rest = vs[0], vs[1:]
    without_v = independent_set_polynomial(rest, adjacent, weight)
    non_nbrs = tuple(u for u in rest if not adjacent(u, v))
    return without_v + weight[v] * independent_set_polynomial(non_nbrs, adjacent, weight)


def check_cluster_expansion(
    inst: Instance, measure: ProductMeasure, psi, *, max_neighbors: int = CLUSTER_NEIGHBOR_LIMIT
) -> ConditionCheck:
    """Cluster-expansion left-hand sides, exact.

    Only independent subsets of ``D(i) ∪ {i}`` contribute. Constraints with more
    than ``max_neighbors`` neighbours are left as ``nan`` (not computed).
    """
    psi = _psi_array(inst, psi)
    mu = event_probabilities(inst, measure)
    nbhd = [inst.closed_neighborhood(i) for i in range(inst.m)]
    nbset = [set(c) for c in nbhd]

    def adjacent(a: int, b: int) -> bool:
        return b in nbset[a]

    lhs = np.zeros(inst.m)
    for i in range(inst.m):
        if len(nbhd[i]) - 1 > max_neighbors:
            lhs[i] = math.nan
            continue
        if mu[i] == 0.0:
            continue
        # i is adjacent to all of D(i): Ind(D(i)+i) = Ind(D(i)) plus {i}
        others = [j for j in nbhd[i] if j != i]
        total = psi[i] + independent_set_polynomial(others, adjacent, psi)
        lhs[i] = mu[i] / psi[i] * total
    return ConditionCheck(lhs, _slack(lhs))


@dataclass(frozen=True)
class ShearerCheck:
    """Shearer polynomials ``q_S`` for every independent ``S`` (bitmask keyed).

    ``q_S`` for a dependent ``S`` is an empty sum, hence zero, and is not stored.
    """

    satisfied: bool
    q: dict[frozenset[int], float]

    @property
    def q_empty(self) -> float:
        return self.q[frozenset()]


def _apply_bitwise(arr: np.ndarray, m: int, fn) -> None:
    # view arr (length 2^m) as (high, 2, low) for each bit and let fn combine halves
    for b in range(m):
        view = arr.reshape(-1, 2, 1 << b)
        fn(view[:, 0, :], view[:, 1, :])


def independent_mask_table(inst: Instance) -> np.ndarray:
    """Boolean table over all ``2^m`` subsets: is the subset independent?"""
    m = inst.m
    masks = np.arange(1 << m, dtype=np.int64)
    indep = np.ones(1 << m, dtype=bool)
    for i in range(m):
        adj = 0
        for j in dependency_neighbors(inst, i):
            adj |= 1 << j
        has_i = (masks >> i) & 1
        indep &= ~((has_i == 1) & ((masks & adj) != 0))
    return indep


def check_shearer(
    inst: Instance, measure: ProductMeasure, *, scale: float = 1.0, tol: float = 1e-12,
    max_events: int = SHEARER_LIMIT,
) -> ShearerCheck:
    """Exact Shearer test: ``q_S >= 0`` for all ``S`` and ``q_empty > 0``.

    ``scale`` multiplies every ``mu(A_i)``; ``scale = 1 + eps`` tests the
    condition with ``eps``-slack. ``tol`` absorbs round-off at exact zeros.
    """
    m = inst.m
    if m > max_events:
        raise TooLargeError(f"Shearer check enumerates 2^m subsets; m={m} > {max_events}")
    mu = event_probabilities(inst, measure) * scale
    indep = independent_mask_table(inst)
    size = 1 << m
    prod = np.ones(size)
    popcount = np.zeros(size, dtype=np.int64)
    for b in range(m):
        prod.reshape(-1, 2, 1 << b)[:, 1, :] *= mu[b]
        popcount.reshape(-1, 2, 1 << b)[:, 1, :] += 1
    sign = np.where(popcount % 2 == 0, 1.0, -1.0)
    f = np.where(indep, sign * prod, 0.0)

    # superset sums: f[S] <- sum_{I ⊇ S} f[I]
    def push_down(lo, hi):
        lo += hi

    _apply_bitwise(f, m, push_down)
    q_arr = sign * f
    q = {
        frozenset(b for b in range(m) if (s >> b) & 1): float(q_arr[s])
        for s in np.flatnonzero(indep).tolist()
    }
    satisfied = bool(np.all(q_arr[indep] >= -tol) and q_arr[0] > tol)
    return ShearerCheck(satisfied, q)


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Params:
    """Scalars governing radius and step budgets.

    zeta = ln(1/(1-eps)) / ln(kd); eta = max_x sum_{c_j ∋ x} psi_j;
    xi = max_i ln(1 + psi_i); lam = max(0, ln(max psi) / ln n).
    """

    epsilon: float
    zeta: float
    eta: float
    xi: float
    lam: float
    k: int
    d: int
    n: int
    m: int

    @property
    def kd(self) -> int:
        return self.k * self.d

    @property
    def log_inv_slack(self) -> float:
        return -math.log1p(-self.epsilon)


def derive_params(inst: Instance, psi, epsilon: float) -> Params:
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"slack must lie in (0, 1), got {epsilon!r}")
    kd = inst.k * inst.d
    if kd < 2:
        raise ParameterError("k*d < 2 leaves zeta undefined")
    psi = _psi_array(inst, psi)
    li = -math.log1p(-epsilon)
    eta = max((float(sum(psi[j] for j in cs)) for cs in inst.var_to_constraints), default=0.0)
    xi = float(np.log1p(psi).max()) if inst.m else 0.0
    pmax = float(psi.max()) if inst.m else 0.0
    lam = max(0.0, math.log(pmax) / math.log(inst.n)) if inst.n > 1 and pmax > 0 else 0.0
    return Params(
        epsilon=epsilon, zeta=li / math.log(kd), eta=eta, xi=xi, lam=lam,
        k=inst.k, d=inst.d, n=inst.n, m=inst.m,
    )


def radius_lower_bound(q: int, delta: float, epsilon: float, eta: float, n: int) -> float:
    """Unrounded ``ln(q*eta / (delta - q/n^2)) / ln(1/(1-eps))``."""
    margin = delta - q / n**2
    if margin <= 0:
        raise ParameterError(f"delta={delta} must exceed q/n^2={q / n**2}")
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"slack must lie in (0, 1), got {epsilon!r}")
    arg = q * eta / margin
    if arg <= 0:
        return -math.inf
    return math.log(arg) / -math.log1p(-epsilon)


def radius_for(q: int, delta: float, epsilon: float, eta: float, n: int) -> int:
    """Smallest integer radius meeting the error target (never negative)."""
    r = radius_lower_bound(q, delta, epsilon, eta, n)
    return max(0, math.ceil(r)) if math.isfinite(r) else 0


def default_polylog_constant(params: Params) -> float:
    return 4.0 * params.kd


def concentration_extra(epsilon: float, n: int) -> float:
    """``s = 2 ln n / ln(1/(1-eps))``: extra steps making abort probability ``<= 1/n^2``."""
    return 2.0 * math.log(n) / -math.log1p(-epsilon)


@dataclass(frozen=True)
class RadiusInterval:
    r_lo: float
    r_hi: float
    s: float
    radii: range
    theorem_inequality: bool | None

    @property
    def empty(self) -> bool:
        return len(self.radii) == 0


def feasible_interval(
    q: int, t: float, delta: float, epsilon: float, params: Params, *, C: float | None = None,
) -> RadiusInterval:
    """Integer radii that meet both the error target and the time budget ``t``.

    Also reports whether ``beta*zeta > alpha + gamma + lambda`` with
    ``q = n^alpha``, ``t = n^beta``, ``delta = n^-gamma``.
    """
    n = params.n
    C = default_polylog_constant(params) if C is None else C
    r_lo = radius_lower_bound(q, delta, epsilon, params.eta, n)
    li = -math.log1p(-epsilon)
    s = concentration_extra(epsilon, n)
    arg = (t - s) / (params.xi * C) * li if params.xi > 0 else math.inf
    r_hi = math.log(arg) / math.log(params.kd) if arg > 0 else -math.inf
    lo = max(0, math.ceil(r_lo)) if math.isfinite(r_lo) else 0
    hi = math.floor(r_hi) if math.isfinite(r_hi) else (10**9 if r_hi > 0 else -1)
    ineq = None
    if n > 1 and q >= 1 and t > 1 and delta > 0:
        ln_n = math.log(n)
        alpha, beta, gamma = math.log(q) / ln_n, math.log(t) / ln_n, -math.log(delta) / ln_n
        ineq = beta * params.zeta > alpha + gamma + params.lam
    return RadiusInterval(r_lo, r_hi, s, range(lo, hi + 1), ineq)
