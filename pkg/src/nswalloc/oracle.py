"""Brute-force Nash-welfare oracle plus a deterministic instance generator.

``exact_nsw`` walks every item->agent assignment (n^m of them, capped) and
returns an exactly-optimal partition, so desk-scale runs of the approximate
solver can be certified against the true optimum instead of eyeballed.
Discarding items is never beneficial under monotone valuations, which is why
full assignments suffice and the search space is n^m rather than (n+1)^m.

The search prunes with float logarithms but decides with exact rational
comparisons: a subtree is abandoned only when even the "utopia" completion
(every agent keeps its bundle and additionally receives *all* unassigned
items) sits a comfortable margin below the incumbent, and any leaf that
survives the screen is compared via ``power_product_cmp``.  Ties go to the
lexicographically smallest assignment vector, which the DFS visits first.
"""

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ._rat import Q0, geometric_mean_float, power_product_cmp, qlog, qq, rat_str
from .errors import TooLarge
from .pipeline import Instance
from .valuation import AdditiveValuation, random_rado_valuation

# Prune / screen margin on log scale.  Leaf logs are sums of <= n terms
# W_i*log(v_i) computed in doubles, so their error is ~1e-12; anything this
# far below the incumbent cannot win an exact comparison.
_LOG_MARGIN = 1e-9

DEFAULT_CAP = 10_000_000


@dataclass
class OracleResult:
    """An exactly optimal partition of all items.

    ``values``/``exponents`` give the optimum as a power product
    prod values[i]^exponents[i]; ``opt`` is its geometric-mean float
    rendering (same scale as ``SolveReport.nsw``).  ``leaves`` counts the
    full assignments whose objective was actually evaluated (pruning makes
    this at most, and usually far below, ``search_space``).
    """

    assignment: List[int]
    bundles: List[List[int]]
    values: List[object]
    exponents: List[int]
    leaves: int
    search_space: int

    @property
    def terms(self) -> List[Tuple[object, int]]:
        return list(zip(self.values, self.exponents))

    @property
    def opt(self) -> float:
        return geometric_mean_float(self.terms, sum(self.exponents))

    @property
    def is_zero(self) -> bool:
        return any(v == 0 for v in self.values)

    def to_dict(self) -> dict:
        return {
            "assignment": list(self.assignment),
            "bundles": [list(b) for b in self.bundles],
            "values": [rat_str(v) for v in self.values],
            "exponents": list(self.exponents),
            "nsw": self.opt,
            "leaves": self.leaves,
            "search_space": self.search_space,
        }


def exact_nsw(inst: Instance, cap: int = DEFAULT_CAP) -> OracleResult:
    """Exhaustively maximize prod v_i(S_i)^{W_i} over partitions of all items.

    Raises TooLarge when n^m exceeds ``cap``.  The returned assignment is the
    lexicographically smallest among the exact argmaxes.
    """
    n = inst.n
    m = inst.m
    space = n ** m
    if space > cap:
        raise TooLarge(
            f"{n} agents on {m} items spans {space} assignments (cap {cap})")

    vals = inst.valuations
    exps = inst.exponents
    memo: List[Dict[int, object]] = [{} for _ in range(n)]

    def value_of(i: int, mask: int):
        got = memo[i].get(mask)
        if got is None:
            got = vals[i].eval_discrete_mask(mask)
            memo[i][mask] = got
        return got

    def log_of(i: int, mask: int) -> float:
        v = value_of(i, mask)
        return float("-inf") if v == 0 else exps[i] * qlog(v)

    best: dict = {"terms": None, "log": float("-inf"), "assignment": None,
                  "leaves": 0}
    masks = [0] * n
    assign = [0] * m
    rest = (1 << m) - 1  # items not yet assigned, as a mask

    def leaf():
        best["leaves"] += 1
        cand_log = sum(log_of(i, masks[i]) for i in range(n))
        if cand_log < best["log"] - _LOG_MARGIN:
            return
        cand = [(value_of(i, masks[i]), exps[i]) for i in range(n)]
        if best["terms"] is None or power_product_cmp(cand, best["terms"]) > 0:
            best["terms"] = cand
            best["log"] = cand_log
            best["assignment"] = assign.copy()

    def walk(j: int, rest: int):
        if j == m:
            leaf()
            return
        if best["terms"] is not None and best["log"] > float("-inf"):
            utopia = sum(log_of(i, masks[i] | rest) for i in range(n))
            if utopia < best["log"] - _LOG_MARGIN:
                return
        bit = 1 << j
        for i in range(n):
            masks[i] |= bit
            assign[j] = i
            walk(j + 1, rest & ~bit)
            masks[i] &= ~bit

    walk(0, rest)

    assignment = best["assignment"]
    bundles: List[List[int]] = [[] for _ in range(n)]
    for j, i in enumerate(assignment):
        bundles[i].append(j)
    values = [value_of(i, masks_from(bundles[i])) for i in range(n)]
    return OracleResult(assignment=assignment, bundles=bundles, values=values,
                        exponents=list(exps), leaves=best["leaves"],
                        search_space=space)


def masks_from(items: Sequence[int]) -> int:
    mask = 0
    for j in items:
        mask |= 1 << j
    return mask


def gen_instance(seed: int, num_agents: int, num_items: int,
                 kind: str = "additive",
                 weight_range: Tuple[int, int] = (1, 3),
                 symmetric: bool = False) -> Instance:
    """Deterministic random instance: same arguments, same instance.

    Weights are quarter-integer rationals drawn from [lo, hi] (all 1 when
    ``symmetric``).  Additive values are integers in [0, 20]; every agent is
    guaranteed at least one positive singleton so the instance cannot fail
    for the trivial reason of an all-zero agent.  Rado valuations use up to
    5 right-nodes and integer costs up to 20, redrawn until the positive-
    singleton guarantee holds.
    """
    if num_agents < 1 or num_items < 1:
        raise ValueError("need at least one agent and one item")
    if kind not in ("additive", "rado"):
        raise ValueError(f"unknown instance kind {kind!r}")
    lo, hi = weight_range
    if not (1 <= lo <= hi):
        raise ValueError("weight range must satisfy 1 <= lo <= hi")
    rng = random.Random(f"nswalloc-{kind}-{num_agents}x{num_items}-{seed}")

    if symmetric:
        weights = [qq(1)] * num_agents
    else:
        weights = [qq(f"{rng.randint(4 * lo, 4 * hi)}/4")
                   for _ in range(num_agents)]

    valuations = []
    for _ in range(num_agents):
        if kind == "additive":
            values = [rng.randint(0, 20) for _ in range(num_items)]
            if not any(values):
                values[rng.randrange(num_items)] = rng.randint(1, 20)
            valuations.append(AdditiveValuation(values))
        else:
            for _attempt in range(200):
                v = random_rado_valuation(rng, num_items,
                                          right_max=5, cost_max=20)
                if any(v.singleton(j) > 0 for j in range(num_items)):
                    valuations.append(v)
                    break
            else:  # pragma: no cover - 200 consecutive zero draws
                raise RuntimeError("could not draw a non-zero Rado valuation")
    return Instance(weights, valuations)


def approximation_report(inst: Instance, report, cap: int = DEFAULT_CAP) -> dict:
    """Certify a solver run against the brute-force optimum.

    ``passed`` is decided by an exact rational comparison
    OPT <= factor * ALG, with the solver's end-to-end factor (a float)
    converted to a rational through its exact binary value.
    """
    oracle = exact_nsw(inst, cap=cap)
    alg_terms = [(v, w) for v, w in zip(report.values, report.exponents)]
    exp_sum = sum(report.exponents)
    factor = report.factor_with_tolerance
    bound_terms = [(qq(factor), exp_sum)] + alg_terms
    passed = power_product_cmp(oracle.terms, bound_terms) <= 0
    opt = oracle.opt
    alg = report.nsw
    return {
        "opt": opt,
        "alg": alg,
        "ratio": (opt / alg) if alg > 0 else (0.0 if opt == 0 else float("inf")),
        "factor": factor,
        "passed": passed,
        "opt_exact": [rat_str(v) for v in oracle.values],
        "alg_exact": [rat_str(v) for v in report.values],
        "exponents": list(report.exponents),
        "leaves": oracle.leaves,
    }


def best_single_item_product(inst: Instance) -> Optional[List[int]]:
    """Brute-force maximizer of prod v_i(item_i)^{W_i} over injective
    one-item-per-agent assignments; None when no positive assignment exists.

    Cross-checks the matching phase on small instances (n <= 5 keeps the
    number of arrangements tame).
    """
    import itertools

    n, m = inst.n, inst.m
    best_terms = None
    best_pick: Optional[List[int]] = None
    for pick in itertools.permutations(range(m), n):
        terms = [(inst.valuations[i].singleton(j), inst.exponents[i])
                 for i, j in enumerate(pick)]
        if any(t[0] == 0 for t in terms):
            continue
        if best_terms is None or power_product_cmp(terms, best_terms) > 0:
            best_terms = terms
            best_pick = list(pick)
    return best_pick
