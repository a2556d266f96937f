"""Rounding of a sparse mixed solution into an integral allocation.

The input at this stage is a fractional allocation y of the non-preferred
items F together with a one-item-per-agent assignment of the preferred set H.
Three steps turn it into bundles:

  * ``reduce`` hands every fractionally shared item to a single keeper, so
    the support becomes single-owner; agents record how many items they lost.
  * ``rematch`` repairs the H-assignment: walking the alternating cycles of
    pi against the preferred matching tau, it trims edges where an agent's
    fractional value dwarfs the matched item and reverses whole intervals
    back to tau whenever an exact product test says the swap is affordable.
  * ``finalize`` emits integer bundles and the exact realized values.

Every branch decision and every asserted guarantee is evaluated in exact
rational arithmetic on the common-denominator weight exponents; floats only
ever appear in reported objective values, never in comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ._rat import QQ, Q0, Q1, qq, geometric_mean_float, power_product_cmp
from .errors import NonPartition
from .matching import (NONE, ProductWeight, max_weight_assignment,
                       symmetric_difference_components)

Pair = Tuple[int, int]


# ---------------------------------------------------------------------------
# mixed solutions


@dataclass
class MixedSolution:
    """A fractional allocation of F plus a (partial) assignment of H.

    ``y_values[i]`` caches the concave-extension value of agent i's
    fractional share, ``sigma_values[i]`` the worth of the single H item
    (zero when unmatched), and ``merged_values[i]`` the extension evaluated
    on the union of both -- the objective value of the actual allocation,
    as opposed to the split objective ``nsw_bar`` where the two parts are
    summed independently.
    """

    y: Dict[Pair, "QQ"]
    sigma: List[Optional[int]]
    y_values: List["QQ"]
    sigma_values: List["QQ"]
    merged_values: List["QQ"]
    exponents: List[int]
    pair_util: Optional[Dict[Pair, "QQ"]] = None
    forest: bool = False

    def bar_bases(self) -> List["QQ"]:
        return [yv + sv for yv, sv in zip(self.y_values, self.sigma_values)]

    @property
    def nsw_bar(self) -> float:
        return geometric_mean_float(
            zip(self.bar_bases(), self.exponents), sum(self.exponents))

    @property
    def nsw(self) -> float:
        return geometric_mean_float(
            zip(self.merged_values, self.exponents), sum(self.exponents))


def mixed_solution(valuations: Sequence, exponents: Sequence[int],
                   y: Dict[Pair, "QQ"], sigma: Sequence[Optional[int]],
                   pair_util: Optional[Dict[Pair, "QQ"]] = None,
                   forest: bool = False) -> MixedSolution:
    """Build a MixedSolution, computing the cached values and checking the
    feasibility invariants plus the split-vs-merged sandwich.

    The merged objective never exceeds the split one (the extension is
    subadditive across the H item), and dropping to the better half of the
    two parts costs at most a factor two -- both checked exactly here on
    every construction.
    """
    n = len(valuations)
    m = valuations[0].num_items if n else 0
    sigma = list(sigma)
    assert len(sigma) == n and len(exponents) == n

    totals: Dict[int, "QQ"] = {}
    for (i, j), mass in y.items():
        assert 0 <= i < n, f"agent {i} out of range"
        assert mass >= 0, f"negative mass on {(i, j)}"
        totals[j] = totals.get(j, Q0) + mass
    for j, tot in totals.items():
        assert tot <= 1, f"item {j} oversubscribed: {tot}"

    matched = [h for h in sigma if h is not NONE]
    assert len(matched) == len(set(matched)), "sigma reuses an item"
    for i, h in enumerate(sigma):
        if h is not NONE:
            assert (i, h) not in y, "sigma item also held fractionally"

    y_values: List["QQ"] = []
    sigma_values: List["QQ"] = []
    merged_values: List["QQ"] = []
    for i in range(n):
        frac = [Q0] * m
        for (a, j), mass in y.items():
            if a == i:
                frac[j] = mass
        y_values.append(valuations[i].eval_extension(frac).value)
        if sigma[i] is NONE:
            sigma_values.append(Q0)
            merged_values.append(y_values[i])
        else:
            sigma_values.append(valuations[i].singleton(sigma[i]))
            frac[sigma[i]] = Q1
            merged_values.append(valuations[i].eval_extension(frac).value)

    exps = [int(e) for e in exponents]
    bar = [yv + sv for yv, sv in zip(y_values, sigma_values)]
    # split objective dominates the merged one ...
    assert power_product_cmp(
        list(zip(merged_values, exps)), list(zip(bar, exps))) <= 0, \
        "merged objective exceeded the split upper bound"
    # ... and undershoots it by at most 2^(sum w)
    assert power_product_cmp(
        list(zip(bar, exps)),
        [(qq(2), sum(exps))] + list(zip(merged_values, exps))) <= 0, \
        "merged objective fell below half the split bound"

    return MixedSolution(dict(y), sigma, y_values, sigma_values,
                         merged_values, exps, pair_util, forest)


# ---------------------------------------------------------------------------
# assignment of the preferred items


def assign_best_h(y_values: Sequence["QQ"], singles: Sequence[Sequence["QQ"]],
                  exponents: Sequence[int], h_items: Sequence[int]
                  ) -> List[Optional[int]]:
    """Best assignment of the items in ``h_items`` on top of fractional
    values ``y_values``: maximizes prod_i (Y_i + v_{i,pi(i)})^{W_i}.

    Edge weights are taken relative to staying unmatched, so an agent with
    Y_i > 0 weighs item j as ((Y_i+v_ij)/Y_i)^{W_i} while an agent with
    Y_i = 0 gets an infinite boost (a rescue lift) for any positive item --
    its factor would otherwise be zero.  Zero-on-zero pairs are forbidden;
    such agents may stay unmatched.  Ties resolve to the lexicographically
    smallest assignment vector, matching the preferred-items phase.
    """
    n = len(y_values)
    grid: List[List[Optional[ProductWeight]]] = []
    for i in range(n):
        w = int(exponents[i])
        yv = y_values[i]
        row: List[Optional[ProductWeight]] = []
        for h in h_items:
            v = singles[i][h]
            if yv > 0:
                row.append(ProductWeight(0, ((yv + v) / yv) ** w))
            elif v > 0:
                row.append(ProductWeight(1, v ** w))
            else:
                row.append(None)
        grid.append(row)
    raw = max_weight_assignment(grid, allow_unmatched=True)
    return [NONE if r is NONE else h_items[r] for r in raw]


# ---------------------------------------------------------------------------
# reduction to single ownership


@dataclass
class Reduction:
    """Outcome of handing each shared item to one keeper.

    ``kappa`` maps every fractionally allocated item to the agent that keeps
    it; ``d[i]`` counts the items agent i lost, and ``dbar`` is the same
    clamped up to 1 (the rematching bounds need a positive loss count even
    for lossless agents).
    """

    y_r: Dict[Pair, "QQ"]
    kappa: Dict[int, int]
    d: List[int]
    dbar: List[int]


def reduce(mixed: MixedSolution) -> Reduction:
    """Pick a keeper for every shared item and zero out the other shares.

    The keeper is the agent drawing the most utility from the item under
    the fixed flow (ties to the lowest index).  On additive instances whose
    support is a forest the keeper is instead the parent agent in the rooted
    forest, which caps every agent's loss at one item.
    """
    n = len(mixed.sigma)
    support: Dict[int, List[int]] = {}
    for (i, j), mass in mixed.y.items():
        if mass > 0:
            support.setdefault(j, []).append(i)
    for owners in support.values():
        owners.sort()

    supp_size = sum(len(o) for o in support.values())
    assert supp_size <= 2 * n + len(support), \
        "support too dense to reduce: need |supp| <= 2|A| + |F+|"

    if mixed.forest:
        kappa = _forest_keepers(support)
    else:
        util = mixed.pair_util
        assert util is not None, "reduce needs per-pair utilities for keeper choice"
        kappa = {}
        for j, owners in support.items():
            best = max(owners, key=lambda i: (util.get((i, j), Q0), -i))
            kappa[j] = best

    d = [0] * n
    y_r: Dict[Pair, "QQ"] = {}
    for j, owners in support.items():
        keep = kappa[j]
        y_r[(keep, j)] = mixed.y[(keep, j)]
        for i in owners:
            if i != keep:
                d[i] += 1
    assert sum(d) <= 2 * n, "reduction dropped more than 2|A| shares"
    if mixed.forest:
        assert all(di <= 1 for di in d), "forest reduction lost >1 item for an agent"
    return Reduction(y_r, kappa, d, [max(1, di) for di in d])


def _forest_keepers(support: Dict[int, List[int]]) -> Dict[int, int]:
    """Root every tree of the agent-item support graph at its lowest agent
    and make each item keep its parent agent."""
    agents = sorted({i for owners in support.values() for i in owners})
    adj_a: Dict[int, List[int]] = {i: [] for i in agents}
    for j, owners in sorted(support.items()):
        for i in owners:
            adj_a[i].append(j)

    kappa: Dict[int, int] = {}
    seen_a: set = set()
    seen_j: set = set()
    comps = 0
    for root in agents:
        if root in seen_a:
            continue
        comps += 1
        stack: List[Tuple[str, int, int]] = [("a", root, -1)]
        seen_a.add(root)
        while stack:
            kind, node, parent = stack.pop()
            if kind == "a":
                for j in adj_a[node]:
                    if j == parent:
                        continue
                    if j in seen_j:
                        raise AssertionError("support graph is not a forest")
                    seen_j.add(j)
                    kappa[j] = node
                    stack.append(("j", j, node))
            else:
                for i in support[node]:
                    if i == parent:
                        continue
                    if i in seen_a:
                        raise AssertionError("support graph is not a forest")
                    seen_a.add(i)
                    stack.append(("a", i, node))
    # edge count re-derives forestness; kappa covered every item
    edges = sum(len(owners) for owners in support.values())
    assert edges == len(seen_a) + len(seen_j) - comps
    assert set(kappa) == set(support)
    return kappa


# ---------------------------------------------------------------------------
# rematching


def rematch(y_values: Sequence["QQ"], pi: Sequence[int], tau: Sequence[int],
            dbar: Sequence[int], exponents: Sequence[int],
            singles: Sequence[Sequence["QQ"]], f_items: Sequence[int],
            trace: Optional[List[dict]] = None) -> List[Optional[int]]:
    """Blend pi back toward tau without giving up more than a bounded slice
    of the split objective.

    Walks each alternating cycle of pi against tau.  Agents whose fractional
    value exceeds dbar times their pi-item's worth form the set B; their pi
    edges are trimmed (they can afford the cut), splitting the cycle into
    paths.  Each path is reversed to tau edges when the exact ratio of the
    trimmed-pi objective to the tau objective stays below the product of
    (dbar+1) factors along the path, last agent included; otherwise the
    path keeps its pi edges and its head agent stays unmatched.

    Two guarantees are asserted before returning: the global objective drop
    from pi to the result is within 2 * prod (dbar_i + 1)^{w_i}, and every
    agent either retains a matched item worth at least a 1/dbar fraction of
    its fractional value or none of the items in F is worth more than a
    1/(dbar+1) fraction of its combined value.
    """
    n = len(pi)
    exps = [int(e) for e in exponents]
    rho: List[Optional[int]] = [NONE] * n
    for i in range(n):
        if pi[i] == tau[i]:
            rho[i] = pi[i]

    for cyc in symmetric_difference_components(list(pi), list(tau)):
        ell = len(cyc)
        y_c = [y_values[a] for a in cyc]
        v_tau = [singles[a][tau[a]] for a in cyc]            # own tau item
        v_pi = [singles[cyc[t]][tau[cyc[t - 1]]] for t in range(ell)]
        bset = [t for t in range(ell) if y_c[t] > dbar[cyc[t]] * v_pi[t]]

        if not bset:
            for t in range(ell):
                rho[cyc[t]] = pi[cyc[t]]
            if trace is not None:
                trace.append({"cycle": list(cyc), "B": [], "kept": "pi"})
            continue

        decisions = []
        for pos, k in enumerate(bset):
            nxt = bset[(pos + 1) % len(bset)]
            length = (nxt - k) % ell or ell
            path = [(k + s) % ell for s in range(length)]
            # ratio of the trimmed-pi objective to the tau objective on the
            # path; the head agent enters with its bare fractional value
            head = path[0]
            lhs = [(y_c[head] / (v_tau[head] + y_c[head]), exps[cyc[head]])]
            for t in path[1:]:
                lhs.append(((v_pi[t] + y_c[t]) / (v_tau[t] + y_c[t]),
                            exps[cyc[t]]))
            rhs = [(qq(dbar[cyc[t]] + 1), exps[cyc[t]]) for t in path]
            reversible = power_product_cmp(lhs, rhs) <= 0
            if reversible:
                for t in path:
                    rho[cyc[t]] = tau[cyc[t]]
            else:
                rho[cyc[head]] = NONE
                for t in path[1:]:
                    rho[cyc[t]] = pi[cyc[t]]
            decisions.append({"start": cyc[path[0]], "end": cyc[path[-1]],
                              "reversible": reversible})
        if trace is not None:
            trace.append({"cycle": list(cyc), "B": [cyc[t] for t in bset],
                          "paths": decisions})

    _assert_swap_ratio_bound(y_values, pi, rho, dbar, exps, singles)
    _assert_loss_dichotomy(y_values, rho, dbar, singles, f_items)
    return rho


def _assert_swap_ratio_bound(y_values, pi, rho, dbar, exps, singles) -> None:
    """The pi -> rho swap keeps the split objective within an exact factor
    2 * prod (dbar_i+1)^{w_i} of where it was (checked scale-free on the
    common-denominator powers)."""
    n = len(pi)
    lhs = []
    rhs: List[Tuple["QQ", int]] = [(qq(2), sum(exps))]
    for i in range(n):
        v_p = singles[i][pi[i]] if pi[i] is not NONE else Q0
        v_r = singles[i][rho[i]] if rho[i] is not NONE else Q0
        lhs.append((y_values[i] + v_p, exps[i]))
        rhs.append((qq(dbar[i] + 1), exps[i]))
        rhs.append((y_values[i] + v_r, exps[i]))
    assert power_product_cmp(lhs, rhs) <= 0, \
        "rematch lost more than the guaranteed objective factor"


def _assert_loss_dichotomy(y_values, rho, dbar, singles, f_items) -> None:
    """Every agent ends up in one of two safe states: the matched item alone
    covers a 1/dbar share of the fractional value, or every single item of F
    is dominated by a 1/(dbar+1) share of the combined value."""
    for i, h in enumerate(rho):
        v_r = singles[i][h] if h is not NONE else Q0
        if dbar[i] * v_r >= y_values[i]:
            continue
        combined = y_values[i] + v_r
        for j in f_items:
            assert (dbar[i] + 1) * singles[i][j] <= combined, (
                f"agent {i} kept too little: item {j} worth "
                f"{singles[i][j]} vs combined {combined}")


def check_reduction_bound(pre: MixedSolution, post: MixedSolution,
                          reduction: Reduction, gamma: "QQ",
                          additive_forest: bool = False) -> None:
    """Assert the end-of-phase guarantee: the reduced, rematched solution
    keeps at least a 1/(32 gamma^2) share of the pre-reduction split
    objective (1/8 on additive instances reduced along a forest).

    Also checks the per-agent bridge inequality that drives it: after losing
    d_i items, an agent's combined value shrinks by at most (dbar_i + 1).
    """
    exps = pre.exponents
    assert exps == post.exponents
    pre_bar = pre.bar_bases()
    post_bar = post.bar_bases()
    for i, (b_pre, b_post) in enumerate(zip(pre_bar, post_bar)):
        dfac = reduction.dbar[i] + 1
        assert dfac * b_post >= pre.y_values[i] + post.sigma_values[i], \
            f"agent {i} lost more than the dbar+1 reduction factor"
    factor = qq(8) if additive_forest else 32 * gamma * gamma
    assert power_product_cmp(
        list(zip(pre_bar, exps)),
        [(factor, sum(exps))] + list(zip(post_bar, exps))) <= 0, \
        "reduction+rematch fell below the guaranteed objective share"


# ---------------------------------------------------------------------------
# final integral allocation


@dataclass
class FinalAllocation:
    bundles: List[List[int]]
    values: List["QQ"]
    exponents: List[int]

    @property
    def nsw(self) -> float:
        return geometric_mean_float(
            zip(self.values, self.exponents), sum(self.exponents))


def finalize(reduction: Reduction, rho: Sequence[Optional[int]],
             valuations: Sequence, exponents: Sequence[int],
             h_items: Sequence[int],
             trace: Optional[List[dict]] = None) -> FinalAllocation:
    """Emit integer bundles: every reduced item goes wholly to its keeper,
    H items follow rho (and only rho -- an H item nobody claims stays out),
    and leftover items outside H with no fractional support go to the lowest
    agent valuing them, falling back to agent 0.
    """
    n = len(rho)
    m = valuations[0].num_items if n else 0
    h_set = set(h_items)
    owner: Dict[int, int] = {}

    for j, keeper in reduction.kappa.items():
        if j in h_set:
            raise NonPartition(f"kept item {j} is also a preferred item")
        owner[j] = keeper
    for i, h in enumerate(rho):
        if h is NONE:
            continue
        if h not in h_set:
            raise NonPartition(f"rho assigned non-preferred item {h}")
        if h in owner:
            raise NonPartition(f"item {h} assigned twice by rho")
        owner[h] = i

    leftovers = []
    for j in range(m):
        if j in owner or j in h_set:
            continue
        for i in range(n):
            if valuations[i].singleton(j) > 0:
                owner[j] = i
                break
        else:
            owner[j] = 0
        leftovers.append(j)
    if trace is not None and leftovers:
        trace.append({"leftovers": {j: owner[j] for j in leftovers}})

    bundles: List[List[int]] = [[] for _ in range(n)]
    for j, i in sorted(owner.items()):
        if not (0 <= i < n):
            raise NonPartition(f"item {j} assigned to unknown agent {i}")
        bundles[i].append(j)
    if sum(len(b) for b in bundles) != len(owner):
        raise NonPartition("an item was double-counted")  # pragma: no cover

    values = [valuations[i].eval_discrete(bundles[i]) for i in range(n)]
    return FinalAllocation(bundles, values, [int(e) for e in exponents])
