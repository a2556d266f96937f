"""End-to-end Nash social welfare solver and the guarantee formulas.

`solve_nsw` chains the five phases: pick every agent a most preferred item
(the set H), solve the weighted Eisenberg-Gale relaxation over the leftover
items, sparsify its support (or cancel cycles exactly on additive
instances), reassign H on top of the fractional values, and round to
integer bundles via single-owner reduction plus interval rematching.  Every
proven per-phase inequality is asserted in exact arithmetic along the way.

The module also exposes the guarantee constants: `guaranteed_factor` with
its gamma / psi / n trade-off, the Lambert-W based `psi_bound`, and the
weighted-product bound used by the analysis (`product_bound_holds`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ._rat import (QQ, Q0, Q1, qq, as_fraction, geometric_mean_float,
                   power_product_cmp, rat_str)
from .errors import DomainError, NotConverged
from .eg import (DEFAULT_EPSILON, DEFAULT_SLACK, MAX_ORACLE_CALLS, EGInstance,
                 cycle_cancel_additive, extract_vertex, solve_eg,
                 solve_eg_additive_exact)
from .matching import NONE, most_preferred_items
from .rounding import (FinalAllocation, MixedSolution, Reduction,
                       assign_best_h, check_reduction_bound, finalize,
                       mixed_solution, reduce, rematch)
from .sparsify import sparsify_half
from .valuation import AdditiveValuation, Valuation

E_TO_3_OVER_E = math.exp(3.0 / math.e)     # the symmetric-case constant
PSI_GAMMA_FLOOR = 2.0 + 1e-9               # below this, fall back to min(gamma, n)


# ---------------------------------------------------------------------------
# instances


class Instance:
    """Agents with positive rational weights and additive or Rado valuations.

    Weights are normalized so the smallest equals 1 (the Nash objective is
    invariant under scaling all weights); gamma is 1 plus the largest
    normalized weight, and `exponents` are the weights scaled to a common
    integer denominator -- the form every exact product comparison uses.
    """

    def __init__(self, weights: Sequence, valuations: Sequence[Valuation]):
        self.weights = [qq(w) for w in weights]
        self.valuations = list(valuations)
        self.n = len(self.valuations)
        if self.n < 1:
            raise ValueError("need at least one agent")
        if len(self.weights) != self.n:
            raise ValueError("one weight per agent")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        self.m = self.valuations[0].num_items
        if self.m < 1:
            raise ValueError("need at least one item")
        if any(v.num_items != self.m for v in self.valuations):
            raise ValueError("valuations disagree on the number of items")

        wmin = min(self.weights)
        self.norm_weights = [w / wmin for w in self.weights]
        self.gamma = 1 + max(self.norm_weights)
        scale = 1
        for w in self.norm_weights:
            scale = math.lcm(scale, int(as_fraction(w).denominator))
        self.exponents = [int(as_fraction(w * scale)) for w in self.norm_weights]
        self.symmetric = len(set(self.norm_weights)) == 1
        self.additive = all(isinstance(v, AdditiveValuation)
                            for v in self.valuations)

    @property
    def kind(self) -> str:
        return "additive" if self.additive else "rado"

    def guarantee_kind(self) -> str:
        if self.additive:
            return "additive"
        return "symmetric" if self.symmetric else "general"


# ---------------------------------------------------------------------------
# guarantee formulas


def lambert_w(x: float, rel_tol: float = 1e-12) -> float:
    """Principal branch of w*e^w = x for x >= 0, by Newton iteration."""
    if x < 0:
        raise DomainError("lambert_w defined here for nonnegative x only")
    if x == 0.0:
        return 0.0
    w = math.log1p(x)    # decent start on all of [0, inf)
    for _ in range(200):
        ew = math.exp(w)
        step = (w * ew - x) / (ew * (w + 1.0))
        w -= step
        if abs(step) <= rel_tol * max(1.0, abs(w)):
            return w
    raise ArithmeticError(f"lambert_w failed to converge for {x}")  # pragma: no cover


def psi_bound(gamma) -> float:
    """The improved weight-dependent constant: an upper bound on
    sup_xi xi^((gamma-1)/(gamma-2+xi)) that grows like gamma/log(gamma).

    Defined for gamma comfortably above 2; the caller is expected to fall
    back to min(gamma, n) below that.
    """
    g = float(gamma)
    if g <= PSI_GAMMA_FLOOR:
        raise DomainError(f"psi_bound needs gamma > {PSI_GAMMA_FLOOR}")
    x = g - 2.0
    omega = lambert_w(x / math.e)
    xi_star = x / omega                  # the maximizing xi = e^(W+1)
    return xi_star ** (g / (x + xi_star))


def guaranteed_factor(kind: str, gamma, n: int) -> float:
    """Proven approximation factor for an instance class.

    `kind` is one of "general", "symmetric", "additive".  The base constant
    gets the best of gamma, the psi bound, and the number of agents.
    """
    g = float(gamma)
    if kind == "symmetric":
        return 256.0 * E_TO_3_OVER_E
    b = min(g, float(n))
    if g > PSI_GAMMA_FLOOR:
        b = min(b, psi_bound(g))
    if kind == "general":
        return 256.0 * b ** 3
    if kind == "additive":
        return 16.0 * b
    raise ValueError(f"unknown guarantee kind {kind!r}")


def product_bound_holds(kind: str, k_values: Sequence, weights: Sequence,
                        c: int) -> bool:
    """Check the weighted-product upper bound behind the factor analysis.

    `k_values[i]` is agent i's count (None when the agent does not
    participate; non-participants still weigh into the normalizing
    exponent).  Requires sum of participating counts <= c * n.  For
    kind "general" compares (prod k_i^{w_i})^{1/sum w} against c * gamma
    exactly; for kind "symmetric" against c * e^(1/e) in floats.
    """
    n = len(k_values)
    if len(weights) != n:
        raise ValueError("weights and counts must align")
    ks = [None if k is None else qq(k) for k in k_values]
    total = sum((k for k in ks if k is not None), Q0)
    if total > c * n:
        raise ValueError("precondition violated: sum of counts exceeds c*n")

    if kind == "symmetric":
        acc = 0.0
        for k in ks:
            if k is None:
                continue
            if k == 0:
                return True
            acc += math.log(float(k))
        return acc / n <= math.log(c) + 1.0 / math.e + 1e-12

    if kind != "general":
        raise ValueError(f"unknown bound kind {kind!r}")
    ws = [qq(w) for w in weights]
    wmin = min(ws)
    norm = [w / wmin for w in ws]
    gamma = 1 + max(norm)
    scale = 1
    for w in norm:
        scale = math.lcm(scale, int(as_fraction(w).denominator))
    exps = [int(as_fraction(w * scale)) for w in norm]
    lhs = [(k, e) for k, e in zip(ks, exps) if k is not None]
    return power_product_cmp(lhs, [(c * gamma, sum(exps))]) <= 0


# ---------------------------------------------------------------------------
# the solver


@dataclass
class SolveReport:
    """Everything the run produced, reproducible bit-for-bit.

    `values` are exact; `nsw` and the phase chain are float renderings of
    exact quantities.  `factor` is the proven constant for the instance
    class; `factor_with_tolerance` additionally folds in the convex-phase
    epsilon and the vertex slack on runs that used them.  No wall-clock
    data lives here, so identical inputs serialize identically.
    """

    bundles: List[List[int]]
    values: List["QQ"]
    exponents: List[int]
    nsw: float
    factor: float
    factor_with_tolerance: float
    kind: str
    guarantee: str
    symmetric: bool
    gamma: float
    phases: List[Tuple[str, float]]
    stats: Dict[str, object]
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "guarantee": self.guarantee,
            "symmetric": self.symmetric,
            "gamma": self.gamma,
            "bundles": [list(b) for b in self.bundles],
            "values": [rat_str(v) for v in self.values],
            "exponents": list(self.exponents),
            "nsw": self.nsw,
            "factor": self.factor,
            "factor_with_tolerance": self.factor_with_tolerance,
            "phases": [[name, val] for name, val in self.phases],
            "stats": dict(self.stats),
            "converged": self.converged,
        }


def solve_nsw(inst: Instance, epsilon: float = DEFAULT_EPSILON,
              slack: float = DEFAULT_SLACK,
              max_oracle_calls: int = MAX_ORACLE_CALLS,
              trace: Optional[List[dict]] = None) -> SolveReport:
    """Run the five-phase pipeline and return the integral allocation.

    Raises InfeasibleInstance when no allocation has positive welfare.  If
    the convex phase hits its oracle budget, the pipeline still rounds the
    best iterate and raises NotConverged carrying the finished report in
    ``.best``.
    """
    vals = inst.valuations
    n, m, W = inst.n, inst.m, inst.exponents
    sing = [[v.singleton(j) for j in range(m)] for v in vals]

    # Phase I: most preferred items
    tau, h_sorted = most_preferred_items(W, sing)
    h_set = set(tau)
    f_items = [j for j in range(m) if j not in h_set]
    if trace is not None:
        trace.append({"phase": "preferred", "tau": list(tau)})

    # Phase III: Eisenberg-Gale relaxation over F, for agents that care
    a_prime = [i for i in range(n)
               if f_items and vals[i].eval_discrete(f_items) > 0]
    converged = True
    failure: Optional[str] = None
    sol = None
    eginst = None
    if a_prime:
        eginst = EGInstance.from_valuations(
            a_prime, [inst.norm_weights[i] for i in a_prime],
            [vals[i] for i in a_prime], f_items)
        try:
            if inst.additive:
                sol = solve_eg_additive_exact(eginst, epsilon, max_oracle_calls)
            else:
                sol = solve_eg(eginst, epsilon, max_oracle_calls)
        except NotConverged as err:
            sol = err.best
            converged = False
            failure = str(err)

    u_full = [Q0] * n
    if sol is not None:
        for ap, agent in enumerate(eginst.agents):
            u_full[agent.orig] = sol.u[ap]

    # reference completion of the relaxation, used by the quarter check
    pi_ref = assign_best_h(u_full, sing, W, h_sorted)
    ref_bases = [u_full[i] + (sing[i][pi_ref[i]] if pi_ref[i] is not NONE else Q0)
                 for i in range(n)]

    # Phase IV: sparsify.  Additive instances with an exact equilibrium get
    # the cycle-cancelling route (forest support, losses of at most one
    # item); everything else goes through vertex extraction + pair scaling.
    forest_route = inst.additive and converged
    knockout = 0
    if sol is None:
        y4: Dict[Tuple[int, int], "QQ"] = {}
        pair_util: Dict[Tuple[int, int], "QQ"] = {}
    elif forest_route:
        rows = [vals[a.orig].values for a in eginst.agents]
        y4_pos = cycle_cancel_additive(sol.y, rows)
        knockout = sum(1 for v in sol.y.values() if v > 0) - len(y4_pos)
        y4 = {(eginst.agents[ap].orig, j): v for (ap, j), v in y4_pos.items()}
        pair_util = {(i, j): v * vals[i].values[j] for (i, j), v in y4.items()}
    else:
        vsol = extract_vertex(eginst, sol, slack)
        sparse = sparsify_half(eginst, vsol)
        knockout = sparse.knockout
        y4 = {(eginst.agents[ap].orig, j): v
              for (ap, j), v in sparse.y.items() if v > 0}
        pair_util = {}
        for (ap, j, _k), c, zv in zip(eginst.var_index, eginst.var_cost,
                                      sparse.z):
            if zv > 0:
                key = (eginst.agents[ap].orig, j)
                pair_util[key] = pair_util.get(key, Q0) + c * zv

    y4_values = []
    for i in range(n):
        frac = [Q0] * m
        for (a, j), mass in y4.items():
            if a == i:
                frac[j] = mass
        y4_values.append(vals[i].eval_extension(frac).value)

    pi4 = assign_best_h(y4_values, sing, W, h_sorted)
    assert all(p is not NONE for p in pi4), "H assignment must be perfect here"
    mixed_pre = mixed_solution(vals, W, y4, pi4, pair_util=pair_util,
                               forest=forest_route)

    # quarter check: the sparse solution with its best H assignment keeps at
    # least 1/4 of the relaxation's own completed objective
    total_w = sum(W)
    assert power_product_cmp(
        list(zip(ref_bases, W)),
        [(qq(4), total_w)] + list(zip(mixed_pre.bar_bases(), W))) <= 0, \
        "sparsification lost more than 3/4 of the relaxation value"

    # Phase V: reduce, rematch, finalize
    red = reduce(mixed_pre)
    sub_trace: Optional[List[dict]] = [] if trace is not None else None
    rho = rematch(mixed_pre.y_values, pi4, tau, red.dbar, W, sing, f_items,
                  trace=sub_trace)
    mixed_post = mixed_solution(vals, W, red.y_r, rho)
    check_reduction_bound(mixed_pre, mixed_post, red, inst.gamma,
                          additive_forest=forest_route)
    fin = finalize(red, rho, vals, W, h_sorted,
                   trace=sub_trace)
    if trace is not None:
        trace.append({"phase": "rounding", "steps": sub_trace,
                      "d": list(red.d)})
    for i in range(n):
        assert fin.values[i] >= mixed_post.merged_values[i], \
            "an integral bundle fell below its fractional value"

    guarantee = inst.guarantee_kind()
    factor = guaranteed_factor(guarantee, inst.gamma, n)
    if forest_route or sol is None:
        degraded = factor
    else:
        degraded = factor * math.exp(epsilon) / (1.0 - slack)

    phases = [
        ("relaxation", geometric_mean_float(zip(ref_bases, W), total_w)),
        ("sparse", mixed_pre.nsw_bar),
        ("rounded", mixed_post.nsw_bar),
        ("final", fin.nsw),
    ]
    stats = {
        "oracle_calls": 0 if sol is None else sol.oracle_calls,
        "lp_solves": 0 if sol is None else sol.lp_solves,
        "eg_rel_gap": 0.0 if sol is None else sol.rel_gap,
        "purified": bool(sol is not None and sol.purified),
        "route": "forest" if forest_route else "vertex",
        "knockout": knockout,
        "d_total": sum(red.d),
        "agents_in_relaxation": len(a_prime),
    }
    report = SolveReport(
        bundles=fin.bundles, values=fin.values, exponents=list(W),
        nsw=fin.nsw, factor=factor,
        factor_with_tolerance=degraded, kind=inst.kind, guarantee=guarantee,
        symmetric=inst.symmetric, gamma=float(inst.gamma), phases=phases,
        stats=stats, converged=converged)
    if not converged:
        raise NotConverged(failure or "convex phase hit its oracle budget",
                           best=report)
    return report
