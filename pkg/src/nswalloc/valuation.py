"""Valuations: additive, Rado (max-weight independent matching), explicit.

A Rado valuation is defined by a bipartite graph between items G and a right
ground set T carrying a matroid: v(S) is the maximum total cost of a matching
whose left endpoints lie in S and whose right endpoints form an independent
set.  The continuous extension nu(x) relaxes items to fractional supplies
x_j and is computed by an exact LP over the matroid's rank constraints (row
generation); by total dual integrality it agrees with v on 0/1 vectors and
with the concave closure everywhere.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import lp as lpmod
from ._rat import QQ, Q0, Q1, qq
from .errors import DomainError, NumericalInconsistency, TooManyItems
from .matroid import Matroid, minimize_rank_slack, random_matroid

EXPLICIT_LIMIT = 5
CLOSURE_LIMIT = 10


@dataclass
class ExtensionResult:
    value: "QQ"
    z: Optional[Dict[Tuple[int, int], "QQ"]]   # (item, right-node) -> mass
    per_item: Dict[int, "QQ"]                  # item -> cost collected on it


def _subset_mask(subset, m: int) -> int:
    if isinstance(subset, int):
        if subset < 0 or subset >= (1 << m):
            raise DomainError(f"subset mask {subset} out of range")
        return subset
    mask = 0
    for j in subset:
        if not (0 <= j < m):
            raise DomainError(f"item {j} out of range")
        mask |= 1 << j
    return mask


class Valuation:
    num_items: int

    def eval_discrete_mask(self, mask: int) -> "QQ":
        raise NotImplementedError

    def eval_discrete(self, subset) -> "QQ":
        return self.eval_discrete_mask(_subset_mask(subset, self.num_items))

    def singleton(self, j: int) -> "QQ":
        return self.eval_discrete_mask(1 << j)

    def eval_extension(self, x: Sequence) -> ExtensionResult:
        raise NotImplementedError

    def eval_concave_closure(self, x: Sequence) -> "QQ":
        """Concave closure: best convex combination of subsets matching x."""
        m = self.num_items
        if m > CLOSURE_LIMIT:
            raise TooManyItems(f"concave closure capped at {CLOSURE_LIMIT} items")
        xs = _check_fractional(x, m)
        n_sets = 1 << m
        objective = [self.eval_discrete_mask(s) for s in range(n_sets)]
        rows = []
        for j in range(m):
            coeffs = [Q1 if (s >> j) & 1 else Q0 for s in range(n_sets)]
            rows.append((coeffs, lpmod.EQ, xs[j]))
        rows.append(([Q1] * n_sets, lpmod.EQ, Q1))
        sol = lpmod.solve(lpmod.LinearProgram(objective, rows))
        if not sol.optimal:   # pragma: no cover - x in [0,1]^m is always feasible
            raise NumericalInconsistency(f"closure LP status {sol.status}")
        return sol.objective

    def to_explicit(self) -> "ExplicitValuation":
        if self.num_items > EXPLICIT_LIMIT:
            raise TooManyItems(
                f"explicit tabulation capped at {EXPLICIT_LIMIT} items")
        return ExplicitValuation(
            [self.eval_discrete_mask(s) for s in range(1 << self.num_items)])


def _check_fractional(x, m: int) -> List["QQ"]:
    if len(x) != m:
        raise DomainError(f"fractional vector must have length {m}")
    xs = [qq(v) for v in x]
    for v in xs:
        if v < 0 or v > 1:
            raise DomainError("fractional supplies must lie in [0,1]")
    return xs


class AdditiveValuation(Valuation):
    def __init__(self, values: Sequence):
        self.values = [qq(v) for v in values]
        if any(v < 0 for v in self.values):
            raise DomainError("additive values must be >= 0")
        self.num_items = len(self.values)

    def eval_discrete_mask(self, mask: int) -> "QQ":
        total = Q0
        j = 0
        while mask:
            if mask & 1:
                total += self.values[j]
            mask >>= 1
            j += 1
        return total

    def eval_extension(self, x: Sequence) -> ExtensionResult:
        xs = _check_fractional(x, self.num_items)
        per_item = {j: self.values[j] * xs[j]
                    for j in range(self.num_items) if xs[j] and self.values[j]}
        return ExtensionResult(sum(per_item.values(), Q0), None, per_item)

    def __repr__(self):
        return f"AdditiveValuation({[str(v) for v in self.values]})"


class RadoValuation(Valuation):
    def __init__(self, num_items: int, right_size: int,
                 edges: Dict[Tuple[int, int], object], matroid: Matroid):
        if matroid.ground_size != right_size:
            raise DomainError("matroid ground size must equal right_size")
        self.num_items = num_items
        self.right_size = right_size
        self.matroid = matroid
        self.edges: Dict[Tuple[int, int], "QQ"] = {}
        for (j, k), c in edges.items():
            if not (0 <= j < num_items and 0 <= k < right_size):
                raise DomainError(f"edge ({j},{k}) out of range")
            c = qq(c)
            if c < 0:
                raise DomainError("edge costs must be >= 0")
            self.edges[(j, k)] = c
        self._disc: Dict[Tuple[int, int], "QQ"] = {}
        self._indep: Dict[int, bool] = {0: True}
        self._adj: List[List[Tuple[int, "QQ"]]] = [[] for _ in range(num_items)]
        for (j, k), c in sorted(self.edges.items()):
            self._adj[j].append((k, c))

    def _independent(self, tmask: int) -> bool:
        cached = self._indep.get(tmask)
        if cached is None:
            cached = self.matroid.rank_mask(tmask) == tmask.bit_count()
            self._indep[tmask] = cached
        return cached

    def eval_discrete_mask(self, mask: int) -> "QQ":
        return self._best(mask, 0)

    def _best(self, smask: int, tmask: int) -> "QQ":
        if not smask:
            return Q0
        key = (smask, tmask)
        got = self._disc.get(key)
        if got is not None:
            return got
        low = smask & -smask
        rest = smask ^ low
        j = low.bit_length() - 1
        best = self._best(rest, tmask)
        for k, c in self._adj[j]:
            kbit = 1 << k
            if not (tmask & kbit) and self._independent(tmask | kbit):
                cand = c + self._best(rest, tmask | kbit)
                if cand > best:
                    best = cand
        self._disc[key] = best
        return best

    def eval_extension(self, x: Sequence, debug_full: bool = False) -> ExtensionResult:
        xs = _check_fractional(x, self.num_items)
        var_edges = [(j, k) for (j, k) in sorted(self.edges) if xs[j]]
        if not var_edges:
            return ExtensionResult(Q0, {}, {})
        value, zvals = self._extension_lp(xs, var_edges, full_family=False)
        if debug_full:
            ref, _ = self._extension_lp(xs, var_edges, full_family=True)
            if ref != value:
                raise NumericalInconsistency(
                    f"extension LP {value} != full-enumeration LP {ref}")
        z = {e: v for e, v in zip(var_edges, zvals) if v}
        per_item: Dict[int, "QQ"] = {}
        for (j, k), v in z.items():
            per_item[j] = per_item.get(j, Q0) + self.edges[(j, k)] * v
        return ExtensionResult(value, z, per_item)

    def _extension_lp(self, xs, var_edges, full_family: bool):
        nv = len(var_edges)
        objective = [self.edges[e] for e in var_edges]
        rows = []
        items = sorted({j for j, _ in var_edges})
        for j in items:
            rows.append(([Q1 if e[0] == j else Q0 for e in var_edges], lpmod.LE, xs[j]))
        rights = sorted({k for _, k in var_edges})

        def rank_row(tmask: int):
            coeffs = [Q1 if (tmask >> e[1]) & 1 else Q0 for e in var_edges]
            return coeffs, lpmod.LE, QQ(self.matroid.rank_mask(tmask))

        if full_family:
            for tmask in range(1, 1 << self.right_size):
                rows.append(rank_row(tmask))
            sol = lpmod.solve(lpmod.LinearProgram(objective, rows))
        else:
            for k in rights:
                rows.append(rank_row(1 << k))
            full = (1 << self.right_size) - 1
            rows.append(rank_row(full))

            def separator(zx):
                load = [Q0] * self.right_size
                for e, v in zip(var_edges, zx):
                    if v:
                        load[e[1]] += v
                subset, slack = minimize_rank_slack(self.matroid, load)
                if slack < 0:
                    tmask = 0
                    for k in subset:
                        tmask |= 1 << k
                    return rank_row(tmask)
                return None

            sol, _ = lpmod.solve_with_row_generation(
                lpmod.LinearProgram(objective, rows), separator)
        if not sol.optimal:   # pragma: no cover
            raise NumericalInconsistency(f"extension LP status {sol.status}")
        return sol.objective, sol.x

    def __repr__(self):
        return (f"RadoValuation(items={self.num_items}, right={self.right_size}, "
                f"edges={len(self.edges)}, matroid={self.matroid.kind})")


class ExplicitValuation(Valuation):
    """Valuation tabulated over all subsets (bitmask-indexed)."""

    def __init__(self, values: Sequence):
        n = len(values)
        if n == 0 or n & (n - 1):
            raise DomainError("explicit table length must be a power of two")
        m = n.bit_length() - 1
        if m > EXPLICIT_LIMIT:
            raise TooManyItems(f"explicit valuation capped at {EXPLICIT_LIMIT} items")
        self.num_items = m
        self.table = [qq(v) for v in values]
        if self.table[0] != 0:
            raise DomainError("v(empty set) must be 0")
        if any(v < 0 for v in self.table):
            raise DomainError("values must be >= 0")

    def eval_discrete_mask(self, mask: int) -> "QQ":
        return self.table[mask]

    def eval_extension(self, x: Sequence) -> ExtensionResult:
        """Tables carry no flow structure, so the continuous extension is
        the concave closure itself."""
        return ExtensionResult(self.eval_concave_closure(x), None, {})

    def to_explicit(self) -> "ExplicitValuation":
        return self


MNatWitness = Tuple[frozenset, frozenset, int]


def check_m_natural_concave(v: Valuation) -> Optional[MNatWitness]:
    """Exhaustively test M-natural concavity; None means pass, otherwise the
    first violating (X, Y, x) triple in scan order is returned.

    The exchange condition: for all X, Y and x in X\\Y there is Z subset of
    Y\\X with |Z| <= 1 such that v(X-x+Z) + v(Y-Z+x) >= v(X) + v(Y).
    """
    tab = v.to_explicit().table
    m = v.num_items
    full = 1 << m
    for xmask in range(full):
        vx = tab[xmask]
        for ymask in range(full):
            vy = tab[ymask]
            need = vx + vy
            only_x = xmask & ~ymask
            only_y = ymask & ~xmask
            xm = only_x
            while xm:
                xbit = xm & -xm
                xm ^= xbit
                base_x = xmask ^ xbit
                base_y = ymask | xbit
                best = tab[base_x] + tab[base_y]
                if best < need:
                    zm = only_y
                    ok = False
                    while zm:
                        zbit = zm & -zm
                        zm ^= zbit
                        if tab[base_x | zbit] + tab[base_y ^ zbit] >= need:
                            ok = True
                            break
                    if not ok:
                        x_el = xbit.bit_length() - 1
                        return (_mask_set(xmask), _mask_set(ymask), x_el)
    return None


def _mask_set(mask: int) -> frozenset:
    return frozenset(j for j in range(mask.bit_length()) if (mask >> j) & 1)


def random_rado_valuation(rng: random.Random, num_items: int,
                          right_max: int = 5, cost_max: int = 20,
                          matroid_kinds: Optional[Sequence[str]] = None) -> RadoValuation:
    """Random Rado valuation: each left-right edge present with prob. 1/2,
    integer costs in [0, cost_max], matroid kind uniform over built-ins."""
    t = rng.randint(1, right_max)
    edges = {}
    for j in range(num_items):
        for k in range(t):
            if rng.random() < 0.5:
                edges[(j, k)] = QQ(rng.randint(0, cost_max))
    m = random_matroid(rng, t, kinds=matroid_kinds)
    return RadoValuation(num_items, t, edges, m)
