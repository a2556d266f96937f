"""Support sparsification of a vertex allocation at the cost of at most half
of each agent's value.

Shared items (two designated owners each) get their flows rescaled by a basic
solution of a small feasibility LP whose agent rows protect half of every
affected agent's shared value and whose pair rows force the two scale factors
of each shared item to sum to one.  Basicness knocks out at least
|D| - |A''| support edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

from . import lp as lpmod
from ._rat import QQ, Q0, Q1
from .eg import EGInstance, VertexSolution, _aggregate, certify_feasible
from .errors import LPInfeasible


@dataclass
class SupportStats:
    f_plus: List[int]          # items with positive total allocation
    f_one: List[int]           # items with exactly one owner
    d_items: List[int]         # shared items, F+ minus F1
    pair: Dict[int, Tuple[int, int]]   # item -> its two designated agents
    a_dd: List[int]            # agents appearing in some designated pair


def support_stats(y: Dict[Tuple[int, int], "QQ"]) -> SupportStats:
    """Classify the support of an allocation; designated pairs take the two
    largest shares (lowest agent index on ties)."""
    owners: Dict[int, List[Tuple[int, "QQ"]]] = {}
    for (i, j), v in y.items():
        if v > 0:
            owners.setdefault(j, []).append((i, v))
    f_plus = sorted(owners)
    f_one = sorted(j for j, os in owners.items() if len(os) == 1)
    d_items = sorted(j for j, os in owners.items() if len(os) >= 2)
    pair: Dict[int, Tuple[int, int]] = {}
    agents = set()
    for j in d_items:
        ranked = sorted(owners[j], key=lambda t: (-t[1], t[0]))
        a, b = ranked[0][0], ranked[1][0]
        pair[j] = (min(a, b), max(a, b))
        agents.update(pair[j])
    return SupportStats(f_plus, f_one, d_items, pair, sorted(agents))


@dataclass
class SparseSolution:
    z: List["QQ"]
    y: Dict[Tuple[int, int], "QQ"]
    u: List["QQ"]                       # per-agent flow value after scaling
    q: Dict[Tuple[int, int], "QQ"]      # chosen scale per designated (i, j)
    stats: SupportStats
    knockout: int


def sparsify_half(inst: EGInstance, vsol: VertexSolution) -> SparseSolution:
    """Rescale the designated-pair flows by a basic solution of the halving
    LP.  Exact guarantees, all asserted: each agent keeps at least half its
    flow value, |supp| <= 2|A'| + |F+|, F+ unchanged, item totals never
    increase, and at least |D| - |A''| edges disappear."""
    stats = support_stats(vsol.y)
    n_a = len(inst.agents)

    # per-(agent, item) flow value under the fixed flow z'
    uij: Dict[Tuple[int, int], "QQ"] = {}
    for (ap, j, _k), c, v in zip(inst.var_index, inst.var_cost, vsol.z):
        if v:
            uij[(ap, j)] = uij.get((ap, j), Q0) + c * v

    if not stats.d_items:
        sol = SparseSolution(list(vsol.z), dict(vsol.y), list(vsol.u),
                             {}, stats, 0)
        _check_post(inst, vsol, sol)
        return sol

    qvars: List[Tuple[int, int]] = []
    for j in stats.d_items:
        a, b = stats.pair[j]
        qvars.append((a, j))
        qvars.append((b, j))
    col = {e: idx for idx, e in enumerate(qvars)}

    rows = []
    for i in stats.a_dd:
        coeffs = [Q0] * len(qvars)
        total = Q0
        for j in stats.d_items:
            if i in stats.pair[j]:
                val = uij.get((i, j), Q0)
                coeffs[col[(i, j)]] = val
                total += val
        rows.append((coeffs, lpmod.GE, total / 2))
    for j in stats.d_items:
        a, b = stats.pair[j]
        coeffs = [Q0] * len(qvars)
        coeffs[col[(a, j)]] = Q1
        coeffs[col[(b, j)]] = Q1
        rows.append((coeffs, lpmod.EQ, Q1))

    lpsol = lpmod.solve(lpmod.LinearProgram([Q0] * len(qvars), rows))
    if not lpsol.optimal:
        raise LPInfeasible(
            "halving LP infeasible; q = 1/2 satisfies every row, so this "
            "is an internal bug")
    q = {e: lpsol.x[idx] for e, idx in col.items()}

    pair_lookup = {(i, j) for j in stats.d_items for i in stats.pair[j]}
    z = []
    for (ap, j, _k), v in zip(inst.var_index, vsol.z):
        if v and (ap, j) in pair_lookup:
            z.append(v * q[(ap, j)])
        else:
            z.append(v)
    y, u = _aggregate(inst, z)
    knockout = len(vsol.y) - len(y)
    sol = SparseSolution(z, y, u, q, stats, knockout)
    _check_post(inst, vsol, sol)
    return sol


def _check_post(inst: EGInstance, vsol: VertexSolution,
                sol: SparseSolution) -> None:
    certify_feasible(inst, sol.z)
    for ap in range(len(inst.agents)):
        assert 2 * sol.u[ap] >= vsol.u[ap], (
            f"agent {inst.agents[ap].orig} kept less than half its value")
    n_a = len(inst.agents)
    stats = sol.stats
    assert len(sol.y) <= 2 * n_a + len(stats.f_plus), (
        "sparsified support exceeds 2|A'| + |F+|")
    new_plus = {j for (_i, j) in sol.y}
    assert new_plus == set(stats.f_plus), "F+ changed under sparsification"
    assert sol.knockout >= len(stats.d_items) - len(stats.a_dd), (
        "basic solution knocked out fewer edges than the row count promises")
    old_tot: Dict[int, "QQ"] = {}
    new_tot: Dict[int, "QQ"] = {}
    for (_i, j), v in vsol.y.items():
        old_tot[j] = old_tot.get(j, Q0) + v
    for (_i, j), v in sol.y.items():
        new_tot[j] = new_tot.get(j, Q0) + v
    for j, t in new_tot.items():
        assert t <= old_tot.get(j, Q0), "item total increased"
