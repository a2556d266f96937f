"""Exact max-weight assignments and the preferred-items phase.

The assignment solver is a Jonker-Volgenant style augmenting-path method
written over a generic ordered additive group: plain floats, exact rationals,
or ProductWeight -- a lexicographic (lift, positive-rational-factor) pair
whose addition multiplies factors.  ProductWeight lets "maximize a product of
rational powers" ride through an additive matching algorithm with exact
comparisons, which is what the preferred-items step needs (near-ties in logs
are decided exactly).

Ties between optimal assignments break to the lexicographically smallest
assignment vector, with unmatched sorting after all items.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from ._rat import QQ, Q0, Q1, qq
from .errors import InfeasibleInstance

NONE = None   # unmatched marker in assignment vectors


class ProductWeight:
    """Lexicographic (lift, factor): addition = (+, *), order = lex.

    `lift` counts infinitely-heavy advantages (rescuing an agent whose
    product factor would otherwise be zero); `factor` is a positive rational
    multiplier.  Used as edge weight so that total assignment weight orders
    identically to the underlying product objective.
    """

    __slots__ = ("lift", "factor")

    def __init__(self, lift: int, factor):
        factor = qq(factor)
        if factor <= 0:
            raise ValueError("ProductWeight factor must be positive")
        self.lift = lift
        self.factor = factor

    @classmethod
    def zero(cls) -> "ProductWeight":
        return cls(0, Q1)

    def __add__(self, other):
        return ProductWeight(self.lift + other.lift, self.factor * other.factor)

    def __sub__(self, other):
        return ProductWeight(self.lift - other.lift, self.factor / other.factor)

    def __neg__(self):
        return ProductWeight(-self.lift, Q1 / self.factor)

    def __eq__(self, other):
        return (isinstance(other, ProductWeight)
                and self.lift == other.lift and self.factor == other.factor)

    def __lt__(self, other):
        if self.lift != other.lift:
            return self.lift < other.lift
        return self.factor < other.factor

    def __le__(self, other):
        return self == other or self < other

    def __gt__(self, other):
        return not self <= other

    def __ge__(self, other):
        return not self < other

    def __hash__(self):
        return hash((self.lift, self.factor))

    def __repr__(self):
        return f"ProductWeight({self.lift}, {self.factor})"


def _jv_min_cost(cost: List[List], n_cols: int) -> Optional[Tuple[List[int], object]]:
    """Min-cost perfect assignment of all rows (rows <= cols); None entries
    are forbidden.  Returns (row->col list, total cost) or None if no
    perfect assignment exists."""
    n_rows = len(cost)
    if n_rows == 0:
        return [], None
    if n_rows > n_cols:
        return None
    col_row = [-1] * n_cols
    potential_u = [None] * n_rows      # lazily zero-initialized from domain
    potential_v = [None] * n_cols
    zero = None
    for row in cost:
        for c in row:
            if c is not None:
                zero = c - c
                break
        if zero is not None:
            break
    if zero is None:
        return None    # all edges forbidden, no perfect assignment (n_rows>0)
    potential_u = [zero] * n_rows
    potential_v = [zero] * n_cols

    for r0 in range(n_rows):
        # shortest augmenting path from r0 over reduced costs
        min_dist = [None] * n_cols
        prev_col = [-1] * n_cols
        used = [False] * n_cols
        cur_row, cur_col = r0, -1
        cur_dist = zero
        while True:
            best_j, best_d = -1, None
            crow = cost[cur_row]
            for j in range(n_cols):
                if used[j] or crow[j] is None:
                    continue
                d = cur_dist + (crow[j] - potential_u[cur_row] - potential_v[j])
                if min_dist[j] is None or d < min_dist[j]:
                    min_dist[j] = d
                    prev_col[j] = cur_col
            for j in range(n_cols):
                if not used[j] and min_dist[j] is not None:
                    if best_d is None or min_dist[j] < best_d:
                        best_d, best_j = min_dist[j], j
            if best_j < 0:
                return None        # no augmenting path: infeasible
            used[best_j] = True
            cur_dist = best_d
            cur_col = best_j
            if col_row[best_j] < 0:
                break
            cur_row = col_row[best_j]
        # update potentials
        for j in range(n_cols):
            if used[j]:
                r = col_row[j] if col_row[j] >= 0 else None
                potential_v[j] = potential_v[j] + (min_dist[j] - cur_dist)
                if r is not None:
                    potential_u[r] = potential_u[r] + (cur_dist - min_dist[j])
        potential_u[r0] = potential_u[r0] + cur_dist
        # augment along stored path
        j = cur_col
        while j >= 0:
            pj = prev_col[j]
            if pj < 0:
                col_row[j] = r0
            else:
                col_row[j] = col_row[pj]
            j = pj
    assign = [-1] * n_rows
    for j, r in enumerate(col_row):
        if r >= 0:
            assign[r] = j
    total = zero
    for r, j in enumerate(assign):
        total = total + cost[r][j]
    return assign, total


def _best_total(grid: List[List], rows: Sequence[int], banned: frozenset,
                n_dummies: int, zero):
    """Best total weight matching the given rows into unbanned columns, with
    n_dummies zero-weight fallback columns; None if infeasible."""
    rows = list(rows)
    if not rows:
        return zero
    m = len(grid[0])
    cols = [j for j in range(m) if j not in banned]
    cost = []
    for i in rows:
        row = [None if grid[i][j] is None else zero - grid[i][j] for j in cols]
        row.extend([zero] * n_dummies)
        cost.append(row)
    res = _jv_min_cost(cost, len(cols) + n_dummies)
    if res is None:
        return None
    _, total = res
    return zero - total


def _zero_of_grid(grid):
    for row in grid:
        for c in row:
            if c is not None:
                return c - c
    return 0


def max_weight_assignment(grid: List[List], allow_unmatched: bool = True
                          ) -> List[Optional[int]]:
    """Deterministic max-weight assignment of rows (agents) to distinct
    columns (items).

    With allow_unmatched, an agent may stay unmatched contributing zero
    weight (implemented by zero-weight dummy columns) -- chosen e.g. when all
    an agent's finite weights are negative or forbidden.  Without it, every
    agent must be matched; returns None when impossible.  Ties break to the
    lexicographically smallest assignment vector (unmatched sorts last).
    """
    n = len(grid)
    if n == 0:
        return []
    m = len(grid[0])
    for row in grid:
        if len(row) != m:
            raise ValueError("ragged weight grid")
    n_dummies = n if allow_unmatched else 0
    if all(c is None for row in grid for c in row):
        # fully forbidden grid
        if not allow_unmatched:
            return None
        return [NONE] * n
    zero = _zero_of_grid(grid)
    best = _best_total(grid, range(n), frozenset(), n_dummies, zero)
    if best is None:
        return None
    assignment: List[Optional[int]] = []
    used: set = set()
    fixed_weight = zero
    for i in range(n):
        options: List[Optional[int]] = [
            j for j in range(m) if j not in used and grid[i][j] is not None]
        if allow_unmatched:
            options.append(NONE)
        chosen = False
        for j in options:
            w_ij = zero if j is NONE else grid[i][j]
            banned = used if j is NONE else used | {j}
            spent_dummies = sum(1 for a in assignment if a is NONE)
            if j is NONE:
                spent_dummies += 1
            rest_dummies = n_dummies - spent_dummies if allow_unmatched else 0
            rest = _best_total(grid, range(i + 1, n), frozenset(banned),
                               rest_dummies, zero)
            if rest is None:
                continue
            if fixed_weight + w_ij + rest == best:
                assignment.append(j)
                fixed_weight = fixed_weight + w_ij
                if j is not NONE:
                    used.add(j)
                chosen = True
                break
        if not chosen:       # pragma: no cover - optimum always decomposes
            raise AssertionError("tie canonicalization failed to extend")
    return assignment


def most_preferred_items(exponents: Sequence[int], singles: Sequence[Sequence]
                         ) -> Tuple[List[int], List[int]]:
    """Phase I: assign every agent one most-preferred item.

    Maximizes prod_i v_{i,tau(i)}^{W_i} over perfect assignments (weights
    W_i w-proportional integers), zero values forbidden.  The existence of a
    finite-weight perfect assignment is exactly positive-NSW feasibility, so
    InfeasibleInstance is raised when none exists (in particular when some
    agent values every item at zero).  Returns (tau, H) with H = sorted image.
    """
    n = len(exponents)
    grid: List[List] = []
    for i in range(n):
        row = []
        for v in singles[i]:
            v = qq(v)
            row.append(ProductWeight(0, v ** int(exponents[i])) if v > 0 else None)
        grid.append(row)
        if all(c is None for c in row):
            raise InfeasibleInstance(
                f"agent {i} values every item at zero; Nash welfare is 0")
    tau = max_weight_assignment(grid, allow_unmatched=False)
    if tau is None:
        raise InfeasibleInstance(
            "no assignment gives every agent a positively valued item; "
            "Nash welfare is 0")
    return tau, sorted(tau)


def symmetric_difference_components(pi: Sequence[int], tau: Sequence[int]
                                    ) -> List[List[int]]:
    """Cycles of the pi/tau symmetric difference.

    Both assignments must be perfect over the same item set (asserted).
    Each returned component [a_1, ..., a_c] satisfies pi(a_t) = tau(a_{t-1})
    cyclically; agents with pi = tau are not part of any component.  Each
    cycle starts at its lowest agent index; cycles are ordered by that index.
    """
    n = len(pi)
    assert len(tau) == n
    assert all(p is not NONE for p in pi), "pi must match every agent"
    assert all(t is not NONE for t in tau), "tau must match every agent"
    assert sorted(pi) == sorted(tau), "pi and tau must cover the same items"
    assert len(set(pi)) == n and len(set(tau)) == n
    pi_inv = {item: a for a, item in enumerate(pi)}
    seen = [False] * n
    cycles: List[List[int]] = []
    for start in range(n):
        if seen[start] or pi[start] == tau[start]:
            continue
        cycle = []
        a = start
        while not seen[a]:
            seen[a] = True
            cycle.append(a)
            a = pi_inv[tau[a]]
        cycles.append(cycle)
    return cycles
