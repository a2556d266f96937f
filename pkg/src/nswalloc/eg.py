"""Eisenberg-Gale relaxation over the positive-value agents and leftover
items, solved by fully-corrective Frank-Wolfe over an exact LP oracle.

Decisions are exact: the linear oracle is an exact simplex over the packing +
matroid-rank row family (rows generated on demand via minimize_rank_slack),
atoms are exact LP vertices, and the reported Frank-Wolfe gap is an exact
rational computed from exact gradients, so it is a true optimality bound no
matter what the float inner solver did.  Only the inner convex-combination
search runs in floats, and its output is rationalized before use.

The additive path goes further: after Frank-Wolfe converges numerically, the
equilibrium is *purified* -- exact prices are reconstructed per spending
component, an exact transportation LP re-spends budgets, and the market KKT
conditions are verified exactly, certifying a true optimum (gap 0).  This is
what lets cycle canceling preserve utilities exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import lp as lpmod
from ._rat import QQ, Q0, Q1, qq, qlog
from .errors import LPInfeasible, NotConverged, NotMBBCycle
from .matroid import minimize_rank_slack
from .valuation import AdditiveValuation, RadoValuation, Valuation

DEFAULT_EPSILON = 1e-6
DEFAULT_SLACK = 1e-3
MAX_ORACLE_CALLS = 100_000

_SNAP = 1 << 60   # dyadic grid for rationalizing inner-solver weights


@dataclass
class EGAgent:
    orig: int                 # index in the full instance
    weight: "QQ"              # normalized weight w~
    valuation: Valuation
    edges: List[Tuple[int, Optional[int], "QQ"]]   # (item, right-node, cost)


class EGInstance:
    """Relaxation data: agents with positive value on the leftover items F."""

    def __init__(self, agents: List[EGAgent], items: Sequence[int]):
        self.agents = agents
        self.items = sorted(items)
        for a in agents:
            usable = False
            for (_, k, c) in a.edges:
                if c <= 0:
                    continue
                if k is None or a.valuation.matroid.rank_mask(1 << k) == 1:
                    usable = True
                    break
            if not usable:
                raise ValueError(
                    f"agent {a.orig} has no positive-cost edge into F "
                    "with a unit-rank right endpoint")
        self.total_weight = sum((a.weight for a in agents), Q0)
        # variable layout: one column per (agent position, item, right node)
        self.var_index: List[Tuple[int, int, Optional[int]]] = []
        self.var_cost: List["QQ"] = []
        for ap, agent in enumerate(agents):
            for (j, k, c) in agent.edges:
                self.var_index.append((ap, j, k))
                self.var_cost.append(c)
        self.n_vars = len(self.var_index)
        self.all_additive = all(
            isinstance(a.valuation, AdditiveValuation) for a in agents)

    @classmethod
    def from_valuations(cls, agent_ids: Sequence[int], weights: Sequence,
                        valuations: Sequence[Valuation], items: Sequence[int]
                        ) -> "EGInstance":
        agents = []
        items = sorted(items)
        for i, w, v in zip(agent_ids, weights, valuations):
            edges: List[Tuple[int, Optional[int], "QQ"]] = []
            if isinstance(v, AdditiveValuation):
                for j in items:
                    if v.values[j] > 0:
                        edges.append((j, None, v.values[j]))
            elif isinstance(v, RadoValuation):
                fset = set(items)
                for (j, k), c in sorted(v.edges.items()):
                    if j in fset and c > 0:
                        edges.append((j, k, c))
            else:
                raise TypeError(
                    "EG relaxation needs additive or Rado valuations")
            agents.append(EGAgent(i, qq(w), v, edges))
        return cls(agents, items)


@dataclass
class EGSolution:
    z: List["QQ"]                        # aligned with inst.var_index
    y: Dict[Tuple[int, int], "QQ"]       # (agent position, item) -> mass
    u: List["QQ"]                        # exact utilities per agent position
    gap: "QQ"                            # exact Frank-Wolfe duality gap
    rel_gap: float
    oracle_calls: int
    lp_solves: int
    rank_masks: List[Set[int]]           # discovered rank rows per agent
    purified: bool = False

    def y_list(self, n_agents: int, items: Sequence[int]) -> Dict[Tuple[int, int], "QQ"]:
        return dict(self.y)


def _aggregate(inst: EGInstance, z: Sequence) -> Tuple[Dict, List]:
    y: Dict[Tuple[int, int], "QQ"] = {}
    u = [Q0] * len(inst.agents)
    for (ap, j, _k), c, v in zip(inst.var_index, inst.var_cost, z):
        if v:
            y[(ap, j)] = y.get((ap, j), Q0) + v
            u[ap] += c * v
    return y, u


def certify_feasible(inst: EGInstance, z: Sequence) -> None:
    """Exact feasibility check for an edge-flow vector: nonnegativity,
    packing rows, and per-agent polymatroid rows via minimize_rank_slack.
    Raises AssertionError on violation (internal invariant)."""
    assert all(v >= 0 for v in z), "negative edge flow"
    per_item: Dict[int, "QQ"] = {}
    for (ap, j, k), v in zip(inst.var_index, z):
        if v:
            per_item[j] = per_item.get(j, Q0) + v
    assert all(t <= 1 for t in per_item.values()), "packing row violated"
    for ap, agent in enumerate(inst.agents):
        if not isinstance(agent.valuation, RadoValuation):
            continue
        load = [Q0] * agent.valuation.right_size
        touched = False
        for (a, _, k), v in zip(inst.var_index, z):
            if a == ap and v and k is not None:
                load[k] += v
                touched = True
        if touched:
            _, slack = minimize_rank_slack(agent.valuation.matroid, load)
            assert slack >= 0, f"polymatroid row violated for agent {agent.orig}"


class _Oracle:
    """Exact linear maximization over the EG polytope, warm-started.

    Keeps one simplex tableau alive across objective changes; matroid rank
    rows are separated on demand and accumulate (they describe the polytope,
    not the objective).
    """

    def __init__(self, inst: EGInstance):
        self.inst = inst
        self.lp_solves = 0
        self.rank_masks: List[Set[int]] = [set() for _ in inst.agents]
        if inst.all_additive:
            self.engine = None
            return
        rows = []
        # packing rows per item
        for j in inst.items:
            coeffs = [Q1 if vj == j else Q0 for (_, vj, _) in inst.var_index]
            if any(coeffs):
                rows.append((coeffs, lpmod.LE, Q1))
        # initial rank rows: singletons and full ground, per Rado agent
        self._row_meta: List[Tuple[str, object]] = [("packing", j) for j in inst.items
                                                    if any(vj == j for (_, vj, _) in inst.var_index)]
        init_rows = []
        for ap, agent in enumerate(inst.agents):
            if not isinstance(agent.valuation, RadoValuation):
                continue
            rights = sorted({k for (_, k, _) in agent.edges})
            masks = [1 << k for k in rights]
            if rights:
                masks.append((1 << agent.valuation.right_size) - 1)
            for tm in masks:
                if tm not in self.rank_masks[ap]:
                    self.rank_masks[ap].add(tm)
                    init_rows.append(self._rank_row(ap, tm))
                    self._row_meta.append(("rank", (ap, tm)))
        rows.extend(init_rows)
        zero_obj = [Q0] * inst.n_vars
        self.engine = lpmod.Simplex(lpmod.LinearProgram(zero_obj, rows))
        self.engine.solve()
        self.lp_solves += 1

    def _rank_row(self, ap: int, tmask: int):
        coeffs = [Q1 if (a == ap and k is not None and (tmask >> k) & 1) else Q0
                  for (a, _, k) in self.inst.var_index]
        rank = self.inst.agents[ap].valuation.matroid.rank_mask(tmask)
        return (coeffs, lpmod.LE, QQ(rank))

    def maximize(self, objective: Sequence) -> List["QQ"]:
        """Return an exact vertex maximizing objective . z over the full
        (implicitly described) polytope."""
        if self.inst.all_additive:
            return self._maximize_additive(objective)
        eng = self.engine
        status = eng.set_objective(objective)
        self.lp_solves += 1
        if status != "optimal":    # pragma: no cover - polytope is bounded
            raise LPInfeasible(f"EG oracle LP became {status}")
        while True:
            cut = self._separate(eng.primal())
            if cut is None:
                return eng.primal()
            (ap, tmask), row = cut
            self.rank_masks[ap].add(tmask)
            self._row_meta.append(("rank", (ap, tmask)))
            status = eng.add_row(*row)
            self.lp_solves += 1
            if status != "optimal":   # pragma: no cover
                raise LPInfeasible(f"EG oracle LP became {status}")

    def _separate(self, z):
        inst = self.inst
        for ap, agent in enumerate(inst.agents):
            if not isinstance(agent.valuation, RadoValuation):
                continue
            t = agent.valuation.right_size
            load = [Q0] * t
            any_mass = False
            for (a, _, k), v in zip(inst.var_index, z):
                if a == ap and v and k is not None:
                    load[k] += v
                    any_mass = True
            if not any_mass:
                continue
            subset, slack = minimize_rank_slack(agent.valuation.matroid, load)
            if slack < 0:
                tmask = 0
                for k in subset:
                    tmask |= 1 << k
                if tmask in self.rank_masks[ap]:   # pragma: no cover
                    raise LPInfeasible("separator re-issued a satisfied row")
                return (ap, tmask), self._rank_row(ap, tmask)
        return None

    def _maximize_additive(self, objective) -> List["QQ"]:
        """Additive agents have no rank rows: per item, hand it entirely to
        the best positive coefficient (lowest agent position on ties)."""
        best: Dict[int, Tuple] = {}
        for idx, ((ap, j, _), g) in enumerate(zip(self.inst.var_index, objective)):
            if g > 0:
                cur = best.get(j)
                if cur is None or g > cur[0] or (g == cur[0] and ap < cur[1]):
                    best[j] = (g, ap, idx)
        z = [Q0] * self.inst.n_vars
        for j, (_, _, idx) in best.items():
            z[idx] = Q1
        self.lp_solves += 1
        return z


def _inner_weights(atom_u: List[List["QQ"]], weights: List["QQ"],
                   lam_prev: Optional[np.ndarray]) -> np.ndarray:
    """Away-step Frank-Wolfe over the simplex of atoms, float precision.

    Maximizes sum_i W_i ln(sum_k lam_k u_ik).  Exactness is not required:
    the outer loop recomputes the true gap exactly from the rationalized
    result.
    """
    A = np.array([[float(u) for u in row] for row in atom_u])  # K x n
    A = A.T                                                    # n x K
    W = np.array([float(w) for w in weights])
    n, K = A.shape
    if lam_prev is None or len(lam_prev) != K:
        lam = np.full(K, 1.0 / K)
    else:
        lam = lam_prev.copy()
    u = A @ lam
    if np.any(u <= 0):
        lam = np.full(K, 1.0 / K)
        u = A @ lam
    for _ in range(4000):
        grad = A.T @ (W / u)
        fw_idx = int(np.argmax(grad))
        lam_dot = float(grad @ lam)
        fw_gap = grad[fw_idx] - lam_dot
        support = np.where(lam > 1e-15)[0]
        away_idx = int(support[np.argmin(grad[support])])
        away_gap = lam_dot - grad[away_idx]
        scale = max(1.0, abs(float(W @ np.log(u))))
        if max(fw_gap, away_gap) <= 1e-14 * scale:
            break
        if fw_gap >= away_gap:
            d = -lam.copy()
            d[fw_idx] += 1.0
            t_max = 1.0
        else:
            d = lam.copy()
            d[away_idx] -= 1.0
            la = lam[away_idx]
            t_max = la / (1.0 - la) if la < 1.0 else 1e12
        du = A @ d
        neg = du < 0
        if np.any(neg):
            t_max = min(t_max, float(np.min(-u[neg] / du[neg])) * (1 - 1e-12))
        if t_max <= 0:
            break
        lo, hi = 0.0, t_max
        dphi_hi = float(W @ (du / (u + hi * du)))
        if dphi_hi >= 0:
            t = t_max
        else:
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if float(W @ (du / (u + mid * du))) > 0:
                    lo = mid
                else:
                    hi = mid
            t = 0.5 * (lo + hi)
        if t <= 0:
            break
        lam = lam + t * d
        lam[lam < 0] = 0.0
        s = lam.sum()
        lam /= s
        u = A @ lam
    return lam


def _rationalize(lam: np.ndarray) -> List["QQ"]:
    snapped = [QQ(int(round(x * _SNAP)), _SNAP) if x > 0 else Q0 for x in lam]
    total = sum(snapped, Q0)
    if total <= 0:
        snapped = [Q1 for _ in lam]
        total = QQ(len(lam))
    return [s / total for s in snapped]


def solve_eg(inst: EGInstance, epsilon: float = DEFAULT_EPSILON,
             max_oracle_calls: int = MAX_ORACLE_CALLS) -> EGSolution:
    """Frank-Wolfe with exact oracle and exact gap accounting.

    Terminates when the exact duality gap is <= epsilon * total weight
    (in nats); raises NotConverged (carrying the best iterate) if the oracle
    budget runs out first.
    """
    if not (0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 1/2)")
    oracle = _Oracle(inst)
    n_agents = len(inst.agents)
    tol = qq(epsilon) * inst.total_weight

    # initial point: each agent's best positive edge at mass 1/n
    z0 = [Q0] * inst.n_vars
    share = QQ(1, n_agents)
    for ap, agent in enumerate(inst.agents):
        best_idx, best_c = -1, Q0
        for idx, ((a, j, k), c) in enumerate(zip(inst.var_index, inst.var_cost)):
            if a != ap or c <= 0:
                continue
            if k is not None:
                if inst.agents[ap].valuation.matroid.rank_mask(1 << k) != 1:
                    continue
            if c > best_c:
                best_idx, best_c = idx, c
        if best_idx < 0:   # pragma: no cover - checked at EGInstance build
            raise LPInfeasible(f"agent {agent.orig} has no usable edge")
        z0[best_idx] = share
    atoms: List[List["QQ"]] = [z0]
    atom_u: List[List["QQ"]] = []
    _, u0 = _aggregate(inst, z0)
    atom_u.append(u0)

    z, u = z0, u0
    lam_prev: Optional[np.ndarray] = None
    best: Optional[Tuple[float, List, List, "QQ"]] = None
    oracle_calls = 0
    while True:
        grad = [inst.agents[ap].weight * c / u[ap]
                for (ap, _, _), c in zip(inst.var_index, inst.var_cost)]
        s = oracle.maximize(grad)
        oracle_calls += 1
        gap = sum((g * (sv - zv) for g, sv, zv in zip(grad, s, z) if sv != zv), Q0)
        logval = sum(float(inst.agents[ap].weight) * qlog(u[ap])
                     for ap in range(n_agents))
        if best is None or logval > best[0]:
            best = (logval, z, u, gap)
        if gap <= tol:
            break
        if oracle_calls >= max_oracle_calls:
            y_b, _ = _aggregate(inst, best[1])
            raise NotConverged(
                f"EG solver: gap {float(best[3]):.3e} > tolerance after "
                f"{oracle_calls} oracle calls",
                best=EGSolution(best[1], y_b, best[2], best[3],
                                float(best[3] / inst.total_weight),
                                oracle_calls, oracle.lp_solves,
                                oracle.rank_masks))
        atoms.append(s)
        _, su = _aggregate(inst, s)
        atom_u.append(su)
        weights = [a.weight for a in inst.agents]
        lam_f = _inner_weights(atom_u, weights, None)
        lam = _rationalize(lam_f)
        z = [sum((lk * atom[i] for lk, atom in zip(lam, atoms) if lk), Q0)
             for i in range(inst.n_vars)]
        _, u = _aggregate(inst, z)
        if any(ui <= 0 for ui in u):
            # mix back a sliver of the strictly positive initial point
            eps_mix = QQ(1, 1 << 40)
            z = [(1 - eps_mix) * zv + eps_mix * z0v for zv, z0v in zip(z, z0)]
            _, u = _aggregate(inst, z)
        lam_prev = lam_f

    y, _ = _aggregate(inst, z)
    certify_feasible(inst, z)
    assert all(ui > 0 for ui in u), "EG utilities must stay positive"
    return EGSolution(z, y, u, gap, float(gap / inst.total_weight),
                      oracle_calls, oracle.lp_solves, oracle.rank_masks)


# --------------------------------------------------------------------------- #
# vertex extraction


@dataclass
class VertexSolution:
    z: List["QQ"]
    y: Dict[Tuple[int, int], "QQ"]
    u: List["QQ"]
    supp: List[Tuple[int, int]]
    floors: List["QQ"]
    duals_packing: Dict[int, "QQ"]
    duals_rank: Dict[Tuple[int, int], "QQ"]
    duals_floor: List["QQ"]
    lp_solves: int
    f_plus: List[int]
    f_one: List[int]


def extract_vertex(inst: EGInstance, sol: EGSolution,
                   slack: float = DEFAULT_SLACK) -> VertexSolution:
    """Round the Frank-Wolfe point to a vertex of the relaxation whose
    utilities are within (1-slack) of the iterate's, by maximizing total
    value over the polytope intersected with per-agent utility floors.

    The support bound |supp(y)| <= |A'| + 2|F+| - |F1| is asserted on the
    result (it is a structural fact about vertices of this polytope).
    """
    slack_q = qq(slack)
    if not (0 < slack_q < 1):
        raise ValueError("slack must lie in (0,1)")
    rows = []
    meta: List[Tuple[str, object]] = []
    for j in inst.items:
        coeffs = [Q1 if vj == j else Q0 for (_, vj, _) in inst.var_index]
        if any(coeffs):
            rows.append((coeffs, lpmod.LE, Q1))
            meta.append(("packing", j))
    for ap, agent in enumerate(inst.agents):
        if not isinstance(agent.valuation, RadoValuation):
            continue
        for tmask in sorted(sol.rank_masks[ap]):
            coeffs = [Q1 if (a == ap and k is not None and (tmask >> k) & 1) else Q0
                      for (a, _, k) in inst.var_index]
            rows.append((coeffs, lpmod.LE,
                         QQ(agent.valuation.matroid.rank_mask(tmask))))
            meta.append(("rank", (ap, tmask)))
    floors = [(1 - slack_q) * ui for ui in sol.u]
    for ap in range(len(inst.agents)):
        coeffs = [c if a == ap else Q0
                  for (a, _, _), c in zip(inst.var_index, inst.var_cost)]
        rows.append((coeffs, lpmod.GE, floors[ap]))
        meta.append(("floor", ap))
    objective = list(inst.var_cost)

    added_meta: List[Tuple[str, object]] = []

    def separator(z):
        for ap, agent in enumerate(inst.agents):
            if not isinstance(agent.valuation, RadoValuation):
                continue
            t = agent.valuation.right_size
            load = [Q0] * t
            for (a, _, k), v in zip(inst.var_index, z):
                if a == ap and v and k is not None:
                    load[k] += v
            subset, slk = minimize_rank_slack(agent.valuation.matroid, load)
            if slk < 0:
                tmask = 0
                for k in subset:
                    tmask |= 1 << k
                coeffs = [Q1 if (a == ap and kk is not None and (tmask >> kk) & 1) else Q0
                          for (a, _, kk) in inst.var_index]
                added_meta.append(("rank", (ap, tmask)))
                return (coeffs, lpmod.LE,
                        QQ(agent.valuation.matroid.rank_mask(tmask)))
        return None

    lp = lpmod.LinearProgram(objective, rows)
    lpsol, added = lpmod.solve_with_row_generation(lp, separator)
    if not lpsol.optimal:
        raise LPInfeasible(
            f"vertex-extraction LP reported {lpsol.status}; the Frank-Wolfe "
            "point satisfies all rows, so this is an internal bug")
    z = lpsol.x
    y, u = _aggregate(inst, z)
    supp = sorted(y.keys())
    owners: Dict[int, int] = {}
    for (_ap, j) in supp:
        owners[j] = owners.get(j, 0) + 1
    f_plus = sorted(owners)
    f_one = sorted(j for j, c in owners.items() if c == 1)
    n_a = len(inst.agents)
    assert len(supp) <= n_a + 2 * len(f_plus) - len(f_one), (
        "vertex support exceeds the structural bound: "
        f"{len(supp)} > {n_a} + 2*{len(f_plus)} - {len(f_one)}")
    for ap in range(n_a):
        assert u[ap] >= floors[ap], "utility floor violated at LP optimum"

    certify_feasible(inst, z)
    all_meta = meta + added_meta
    duals_packing: Dict[int, "QQ"] = {}
    duals_rank: Dict[Tuple[int, int], "QQ"] = {}
    duals_floor: List["QQ"] = [Q0] * n_a
    for (kind, key), d in zip(all_meta, lpsol.duals):
        if kind == "packing":
            duals_packing[key] = d
        elif kind == "rank":
            prev = duals_rank.get(key, Q0)
            duals_rank[key] = prev + d
        else:
            duals_floor[key] = d
    return VertexSolution(z, y, u, supp, floors, duals_packing, duals_rank,
                          duals_floor, 1 + len(added), f_plus, f_one)


# --------------------------------------------------------------------------- #
# KKT verification


@dataclass
class KKTReport:
    prices: Dict[int, "QQ"]
    alphas: List[Dict[int, "QQ"]]        # per agent: right-subset mask -> dual
    chain_ok: bool
    residuals: Dict[str, float]
    budget_spend: List["QQ"]             # p . y_i per agent

    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def _uncross(alpha: Dict[int, "QQ"]) -> Dict[int, "QQ"]:
    """Merge crossing support sets (X,Y) -> (X|Y, X&Y) shifting min dual
    mass; terminates because sum |S|^2 * alpha strictly increases and mass is
    conserved on a finite lattice.  Preserves sum_{T: k in T} alpha(T) for
    every right node k, so stationarity residuals are untouched."""
    alpha = {t: v for t, v in alpha.items() if v > 0}
    changed = True
    guard = 0
    while changed:
        changed = False
        guard += 1
        assert guard < 100_000, "uncrossing failed to terminate"
        keys = sorted(alpha)
        for ii in range(len(keys)):
            for jj in range(ii + 1, len(keys)):
                x_m, y_m = keys[ii], keys[jj]
                if alpha.get(x_m, Q0) <= 0 or alpha.get(y_m, Q0) <= 0:
                    continue
                if (x_m & y_m) == x_m or (x_m & y_m) == y_m:
                    continue  # nested, fine
                eps = min(alpha[x_m], alpha[y_m])
                alpha[x_m] -= eps
                alpha[y_m] -= eps
                union, inter = x_m | y_m, x_m & y_m
                alpha[union] = alpha.get(union, Q0) + eps
                if inter:
                    alpha[inter] = alpha.get(inter, Q0) + eps
                alpha = {t: v for t, v in alpha.items() if v > 0}
                changed = True
                break
            if changed:
                break
    return alpha


def _is_chain(masks: Sequence[int]) -> bool:
    ms = sorted(masks, key=lambda m: m.bit_count())
    for a, b in zip(ms, ms[1:]):
        if (a & b) != a:
            return False
    return True


def verify_kkt(inst: EGInstance, vsol: VertexSolution) -> KKTReport:
    """Build candidate equilibrium duals from the vertex LP's exact duals and
    report the market KKT residuals.  Never raises: residuals quantify how far
    the scaled duals are from an exact equilibrium (0 for one agent, small
    for converged instances)."""
    n_a = len(inst.agents)
    mus = [-d for d in vsol.duals_floor]           # >= 0 by LP duality
    betas = []
    for ap, agent in enumerate(inst.agents):
        denom = vsol.u[ap] * (1 + mus[ap])
        betas.append(agent.weight / denom if denom > 0 else Q0)
    # conservative common scale: the smallest per-agent factor keeps every
    # agent's spending within budget exactly (the LP money identity gives
    # beta_i * (p~ . y_i) <= w_i per agent), at the cost of stationarity
    # residuals that reflect drift along the optimal face
    scale = min(betas) if betas else Q1
    if scale <= 0:
        scale = Q1
    prices = {j: scale * p for j, p in vsol.duals_packing.items()}
    raw_alphas: List[Dict[int, "QQ"]] = [{} for _ in range(n_a)]
    for (ap, tmask), d in vsol.duals_rank.items():
        if d > 0:
            raw_alphas[ap][tmask] = raw_alphas[ap].get(tmask, Q0) + betas[ap] * d
    alphas = [_uncross(a) for a in raw_alphas]
    chain_ok = all(_is_chain(list(a)) for a in alphas)

    res: Dict[str, float] = {}
    # (i) item duals nonnegative; (ii) subset duals nonnegative
    res["i_price_nonneg"] = max(
        [float(-p) for p in prices.values() if p < 0], default=0.0)
    res["ii_alpha_nonneg"] = max(
        [float(-a) for al in alphas for a in al.values() if a < 0],
        default=0.0)
    # (iii) item complementarity: p_j > 0 => item fully allocated (exact from
    # LP complementary slackness; recomputed and reported anyway)
    worst = 0.0
    for j, p in prices.items():
        if p > 0:
            tot = sum((v for (ap2, j2), v in vsol.y.items() if j2 == j), Q0)
            worst = max(worst, abs(float((1 - tot) * p)))
    res["iii_item_complementarity"] = worst
    # (iv) subset-row complementarity: alpha_i(S) > 0 => row tight
    worst = 0.0
    for ap, agent in enumerate(inst.agents):
        if not isinstance(agent.valuation, RadoValuation):
            continue
        for tmask, a_val in alphas[ap].items():
            load = Q0
            for (a, _, k), v in zip(inst.var_index, vsol.z):
                if a == ap and v and k is not None and (tmask >> k) & 1:
                    load += v
            slackness = QQ(agent.valuation.matroid.rank_mask(tmask)) - load
            worst = max(worst, abs(float(a_val * slackness)))
    res["iv_rank_complementarity"] = worst
    # (v) stationarity inequality w c / u <= p_j + sum alpha on all edges;
    # (vi) equality on the support
    worst_feas = 0.0
    worst_supp = 0.0
    for idx, ((ap, j, k), c) in enumerate(zip(inst.var_index, inst.var_cost)):
        lhs = inst.agents[ap].weight * c / vsol.u[ap]
        rhs = prices.get(j, Q0)
        if k is not None:
            rhs += sum((a for tm, a in alphas[ap].items() if (tm >> k) & 1), Q0)
        viol = lhs - rhs
        if viol > 0:
            worst_feas = max(worst_feas, float(viol))
        if vsol.z[idx] > 0:
            worst_supp = max(worst_supp, abs(float(viol)))
    res["v_stationarity"] = worst_feas
    res["vi_support_tightness"] = worst_supp

    spend = []
    for ap in range(n_a):
        spend.append(sum((prices.get(j, Q0) * v
                          for (a, j), v in vsol.y.items() if a == ap), Q0))
    return KKTReport(prices, alphas, chain_ok, res, spend)


def check_sum_of_fractions(inst: EGInstance, star, other_z: Sequence,
                           subset: Sequence[int],
                           epsilon: float = DEFAULT_EPSILON) -> bool:
    """Necessary optimality consequence: for any feasible competitor flow z'
    and any subset A'' of agents,
        sum_{A''} w_i u'_i / u*_i  <=  sum_{A''} w_i + sum_{A'} w_i + tol,
    with tol = epsilon * sum_{A'} w_i coming from the duality-gap bound on
    star.  Exact rational comparison; `star` is any solution object with a
    per-agent utility list `u`."""
    certify_feasible(inst, other_z)
    _, u_other = _aggregate(inst, other_z)
    lhs = Q0
    sub_w = Q0
    for i in subset:
        w = inst.agents[i].weight
        lhs += w * u_other[i] / star.u[i]
        sub_w += w
    rhs = sub_w + inst.total_weight + qq(epsilon) * inst.total_weight
    return lhs <= rhs


# --------------------------------------------------------------------------- #
# additive path: purification and cycle canceling


def purify_additive(inst: EGInstance, sol: EGSolution) -> Optional[EGSolution]:
    """Turn a numerically converged additive Frank-Wolfe point into an exact
    equilibrium, or return None if the structural guess fails.

    Steps: guess MBB edges from float utilities; propagate exact price
    ratios over each spending component's spanning tree; set each
    component's scale by exact budget clearing; exact-verify the MBB
    structure; re-spend budgets with an exact transportation LP; verify the
    market KKT conditions exactly.
    """
    assert inst.all_additive
    n_a = len(inst.agents)
    items = [j for j in inst.items
             if any(a.values[j] > 0 for a in
                    (ag.valuation for ag in inst.agents))]
    if not items:
        return None
    vals: List[Dict[int, "QQ"]] = []
    for agent in inst.agents:
        vals.append({j: agent.valuation.values[j] for j in items
                     if agent.valuation.values[j] > 0})
    u_f = [float(x) for x in sol.u]
    w_f = [float(a.weight) for a in inst.agents]

    for theta in (1e-7, 1e-9, 1e-11):
        # candidate MBB edges by float bang-per-buck
        cand: List[Set[int]] = []
        ok = True
        for ap in range(n_a):
            if u_f[ap] <= 0:
                ok = False
                break
            ratios = {j: float(v) * w_f[ap] / u_f[ap] for j, v in vals[ap].items()}
            if not ratios:
                ok = False
                break
            cand.append(set())
        if not ok:
            return None
        price_f = {j: 0.0 for j in items}
        for ap in range(n_a):
            for j, v in vals[ap].items():
                price_f[j] = max(price_f[j], float(v) * w_f[ap] / u_f[ap])
        for ap in range(n_a):
            for j, v in vals[ap].items():
                if float(v) * w_f[ap] / u_f[ap] >= price_f[j] * (1 - theta):
                    cand[ap].add(j)
        result = _purify_with_candidates(inst, vals, cand, items, sol)
        if result is not None:
            return result
    return None


def _purify_with_candidates(inst, vals, cand, items, sol) -> Optional[EGSolution]:
    n_a = len(inst.agents)
    # connected components over agents+items along candidate edges
    comp_of_item: Dict[int, int] = {}
    comp_of_agent: Dict[int, int] = {}
    n_comp = 0
    for start in range(n_a):
        if start in comp_of_agent or not cand[start]:
            continue
        stack = [("a", start)]
        comp_of_agent[start] = n_comp
        while stack:
            kind, node = stack.pop()
            if kind == "a":
                for j in cand[node]:
                    if j not in comp_of_item:
                        comp_of_item[j] = n_comp
                        stack.append(("i", j))
            else:
                for ap in range(n_a):
                    if node in cand[ap] and ap not in comp_of_agent:
                        comp_of_agent[ap] = n_comp
                        stack.append(("a", ap))
        n_comp += 1
    if len(comp_of_agent) != n_a:
        return None

    # exact price ratios within components via BFS tree over (agent, item)
    ratio: Dict[int, "QQ"] = {}
    for comp in range(n_comp):
        comp_items = sorted(j for j, c in comp_of_item.items() if c == comp)
        comp_agents = sorted(a for a, c in comp_of_agent.items() if c == comp)
        if not comp_items:
            return None
        root = comp_items[0]
        ratio[root] = Q1
        frontier = [root]
        seen_items = {root}
        seen_agents: Set[int] = set()
        while frontier:
            j = frontier.pop(0)
            for ap in comp_agents:
                if ap in seen_agents or j not in cand[ap]:
                    continue
                seen_agents.add(ap)
                vj = vals[ap][j]
                for j2 in sorted(cand[ap]):
                    if j2 not in seen_items:
                        # p_{j2}/p_j = v_{j2}/v_j along agent ap's MBB edges
                        ratio[j2] = ratio[j] * vals[ap][j2] / vj
                        seen_items.add(j2)
                        frontier.append(j2)
        if seen_items != set(comp_items) or seen_agents != set(comp_agents):
            return None
        # scale: budgets in component = prices in component
        wsum = sum((inst.agents[a].weight for a in comp_agents), Q0)
        rsum = sum((ratio[j] for j in comp_items), Q0)
        t_c = wsum / rsum
        for j in comp_items:
            ratio[j] *= t_c

    prices = ratio   # item -> exact positive price (for items in components)
    for j in items:
        if j not in prices:
            return None

    # exact MBB verification: every candidate edge achieves the agent's exact
    # max bang-per-buck, and no other edge beats it
    support: List[Set[int]] = [set() for _ in range(n_a)]
    alpha: List["QQ"] = [Q0] * n_a
    for ap in range(n_a):
        best = None
        for j, v in vals[ap].items():
            b = v / prices[j]
            if best is None or b > best:
                best = b
        if best is None or best <= 0:
            return None
        alpha[ap] = best
        for j in cand[ap]:
            if vals[ap][j] / prices[j] != best:
                return None
        support[ap] = set(cand[ap])

    # exact transportation LP: spend budgets on MBB edges, clear all prices
    edge_list = [(ap, j) for ap in range(n_a) for j in sorted(support[ap])]
    if not edge_list:
        return None
    rows = []
    for ap in range(n_a):
        coeffs = [Q1 if e[0] == ap else Q0 for e in edge_list]
        rows.append((coeffs, lpmod.EQ, inst.agents[ap].weight))
    for j in items:
        coeffs = [Q1 if e[1] == j else Q0 for e in edge_list]
        rows.append((coeffs, lpmod.EQ, prices[j]))
    lpsol = lpmod.solve(lpmod.LinearProgram([Q0] * len(edge_list), rows))
    if not lpsol.optimal:
        return None

    # assemble exact allocation and verify the equilibrium conditions
    z = [Q0] * inst.n_vars
    var_pos = {(ap, j): idx for idx, (ap, j, _k) in enumerate(inst.var_index)}
    for (ap, j), s in zip(edge_list, lpsol.x):
        if s:
            idx = var_pos.get((ap, j))
            if idx is None:
                return None
            z[idx] = s / prices[j]
    y, u = _aggregate(inst, z)
    for ap in range(n_a):
        if u[ap] != alpha[ap] * inst.agents[ap].weight:
            return None
        spent = sum((prices[j] * v for (a, j), v in y.items() if a == ap), Q0)
        if spent != inst.agents[ap].weight:
            return None
    for j in items:
        tot = sum((v for (a, jj), v in y.items() if jj == j), Q0)
        if tot != 1:
            return None
    return EGSolution(z, y, u, Q0, 0.0, sol.oracle_calls, sol.lp_solves,
                      sol.rank_masks, purified=True)


def solve_eg_additive_exact(inst: EGInstance, epsilon: float = DEFAULT_EPSILON,
                            max_oracle_calls: int = MAX_ORACLE_CALLS) -> EGSolution:
    """Additive EG to exact optimality: Frank-Wolfe then purification, with
    an escalation ladder.  Raises NotConverged if purification keeps
    failing."""
    assert inst.all_additive
    eps = epsilon
    last: Optional[EGSolution] = None
    for _ in range(4):
        sol = solve_eg(inst, eps, max_oracle_calls)
        last = sol
        pure = purify_additive(inst, sol)
        if pure is not None:
            pure.oracle_calls = sol.oracle_calls
            pure.lp_solves = sol.lp_solves
            return pure
        eps = eps / 100
    raise NotConverged("additive purification failed at all tolerances",
                       best=last)


def cycle_cancel_additive(y: Dict[Tuple[int, int], "QQ"],
                          values: Sequence[Sequence["QQ"]]
                          ) -> Dict[Tuple[int, int], "QQ"]:
    """Cancel spending cycles of an exact additive equilibrium allocation.

    Repeatedly finds a cycle in the bipartite support graph and moves along
    an exact null direction of the (agent-utility, item-total) balance
    system until an edge hits zero.  Utilities and item totals are preserved
    exactly; the result's support is a forest.  Raises NotMBBCycle when a
    cycle admits no such direction (i.e. the input was not an exact
    equilibrium allocation)."""
    y = {e: v for e, v in y.items() if v > 0}
    while True:
        cycle = _find_cycle(y)
        if cycle is None:
            _assert_forest(y)
            return y
        edges = cycle
        direction = _null_direction(edges, values)
        if direction is None:
            raise NotMBBCycle(
                "support cycle admits no utility-preserving direction")
        # step to the first edge hitting zero
        theta = None
        for e, d in zip(edges, direction):
            if d < 0:
                cand = y[e] / (-d)
                if theta is None or cand < theta:
                    theta = cand
        if theta is None:
            direction = [-d for d in direction]
            for e, d in zip(edges, direction):
                if d < 0:
                    cand = y[e] / (-d)
                    if theta is None or cand < theta:
                        theta = cand
        assert theta is not None and theta > 0
        for e, d in zip(edges, direction):
            y[e] = y[e] + theta * d
            if y[e] == 0:
                del y[e]
            else:
                assert y[e] > 0, "cycle cancel overshot an edge"


def _find_cycle(y: Dict[Tuple[int, int], "QQ"]):
    """Return a list of support edges forming a cycle, or None.  Nodes
    alternate agent/item; the cycle is returned as its edge list."""
    adj: Dict[Tuple[str, int], List[Tuple[Tuple[str, int], Tuple[int, int]]]] = {}
    for (a, j) in sorted(y):
        adj.setdefault(("a", a), []).append((("i", j), (a, j)))
        adj.setdefault(("i", j), []).append((("a", a), (a, j)))
    visited: Set[Tuple[str, int]] = set()
    for start in sorted(adj):
        if start in visited:
            continue
        # iterative DFS tracking the edge used to enter each node
        stack = [(start, None)]
        parent_edge: Dict[Tuple[str, int], Optional[Tuple[int, int]]] = {start: None}
        parent_node: Dict[Tuple[str, int], Optional[Tuple[str, int]]] = {start: None}
        order = []
        while stack:
            node, via = stack.pop()
            if node in visited:
                continue
            visited.add(node)
            order.append(node)
            for (nbr, edge) in adj[node]:
                if edge == via:
                    continue
                if nbr in parent_edge and nbr in visited:
                    # found a cycle: walk both paths up to the common root
                    return _cycle_edges(node, nbr, edge, parent_node, parent_edge)
                if nbr not in parent_edge:
                    parent_edge[nbr] = edge
                    parent_node[nbr] = node
                    stack.append((nbr, edge))
        # tree exhausted without cycle
    return None


def _cycle_edges(node, nbr, closing_edge, parent_node, parent_edge):
    path_a = []
    seen = {}
    cur = node
    while cur is not None:
        seen[cur] = len(path_a)
        path_a.append(cur)
        cur = parent_node.get(cur)
    path_edges = []
    cur = nbr
    while cur not in seen:
        path_edges.append(parent_edge[cur])
        cur = parent_node[cur]
    # cur is the meeting node; collect node->cur edges
    up_edges = []
    cur2 = node
    while cur2 != cur:
        up_edges.append(parent_edge[cur2])
        cur2 = parent_node[cur2]
    edges = [closing_edge] + path_edges + up_edges[::-1]
    # dedupe while preserving cycle order
    out, seen_e = [], set()
    for e in edges:
        if e not in seen_e:
            seen_e.add(e)
            out.append(e)
    return out


def _null_direction(edges: List[Tuple[int, int]], values) -> Optional[List["QQ"]]:
    agents = sorted({a for a, _ in edges})
    items = sorted({j for _, j in edges})
    rows = []
    for a in agents:
        rows.append([values[a][j] if (aa == a) else Q0 for (aa, j) in edges])
    for j in items:
        rows.append([Q1 if (jj == j) else Q0 for (_aa, jj) in edges])
    n = len(edges)
    # exact Gaussian elimination; find a kernel vector
    mat = [row[:] for row in rows]
    pivots = {}
    r = 0
    for c in range(n):
        pr = next((i for i in range(r, len(mat)) if mat[i][c] != 0), None)
        if pr is None:
            continue
        mat[r], mat[pr] = mat[pr], mat[r]
        pv = mat[r][c]
        mat[r] = [x / pv for x in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [x - f * p for x, p in zip(mat[i], mat[r])]
        pivots[c] = r
        r += 1
        if r == len(mat):
            break
    free = [c for c in range(n) if c not in pivots]
    if not free:
        return None
    fc = free[0]
    direction = [Q0] * n
    direction[fc] = Q1
    for c, pr in pivots.items():
        direction[c] = -mat[pr][fc]
    return direction


def _assert_forest(y: Dict[Tuple[int, int], "QQ"]) -> None:
    nodes = set()
    for (a, j) in y:
        nodes.add(("a", a))
        nodes.add(("i", j))
    # forest iff edges <= nodes - components
    parent = {nd: nd for nd in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    merges = 0
    for (a, j) in y:
        ra, rj = find(("a", a)), find(("i", j))
        if ra == rj:
            raise AssertionError("cycle cancel left a cycle in the support")
        parent[ra] = rj
        merges += 1
