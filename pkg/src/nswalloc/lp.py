"""Exact rational linear programming: two-phase primal simplex with Bland's
rule, dual-simplex warm starts for row generation, and exact duals.

Everything here is deterministic and exact (no floats).  The tableau keeps
slack/surplus/artificial columns explicit; artificial columns are barred from
re-entering after phase 1 so they never pollute phase 2.

Conventions (documented here once, relied on by tests):
- variables are >= 0; optional upper bounds become extra rows;
- for a maximization problem, optimal duals satisfy y_i >= 0 on <= rows,
  y_i <= 0 on >= rows, free on = rows, strong duality c.x = y.b, and
  complementary slackness exactly;
- for minimization the problem is negated internally and duals flip sign.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

from ._rat import QQ, Q0, Q1, qq
from .errors import SeparatorInconsistent

LE, EQ, GE = "<=", "=", ">="

BIT_SIZE_ALARM = 10_000


class LinearProgram:
    """max/min objective.x subject to rows (coeffs, sense, rhs), x >= 0."""

    def __init__(self, objective: Sequence, rows: Sequence[Tuple[Sequence, str, object]],
                 maximize: bool = True, upper: Optional[Sequence] = None):
        self.objective = [qq(c) for c in objective]
        self.n = len(self.objective)
        self.rows: List[Tuple[List, str, object]] = []
        for coeffs, sense, rhs in rows:
            if sense not in (LE, EQ, GE):
                raise ValueError(f"bad row sense {sense!r}")
            coeffs = [qq(c) for c in coeffs]
            if len(coeffs) != self.n:
                raise ValueError("row length mismatch")
            self.rows.append((coeffs, sense, qq(rhs)))
        self.maximize = maximize
        self.upper = None
        if upper is not None:
            if len(upper) != self.n:
                raise ValueError("upper bound list length mismatch")
            self.upper = [None if u is None else qq(u) for u in upper]


@dataclass
class LPSolution:
    status: str                      # "optimal" | "infeasible" | "unbounded"
    x: List = field(default_factory=list)
    duals: List = field(default_factory=list)
    objective: Optional[object] = None
    basis: Tuple[int, ...] = ()
    max_bits: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class Simplex:
    """Tableau simplex over exact rationals, warm-startable.

    Usage: build from a LinearProgram (internally converted so the objective
    is maximized), call solve(), then optionally set_objective()/add_row()
    any number of times; the engine re-optimizes from the current basis.
    """

    def __init__(self, lp: LinearProgram):
        self._lp = lp
        self._sign = Q1 if lp.maximize else -Q1
        self.n = lp.n
        self.status = "init"
        self.max_bits = 0
        self._build(lp)

    # ------------------------------------------------------------------ #
    # construction

    def _build(self, lp: LinearProgram) -> None:
        rows: List[Tuple[List, str, object]] = list(lp.rows)
        if lp.upper is not None:
            for j, u in enumerate(lp.upper):
                if u is not None:
                    coeffs = [Q0] * self.n
                    coeffs[j] = Q1
                    rows.append((coeffs, LE, u))
        self.m = len(rows)
        self._row_flip: List[bool] = []
        self._aux_col: List[Optional[int]] = [None] * self.m
        self._aux_kind: List[Optional[str]] = [None] * self.m
        norm: List[Tuple[List, str, object]] = []
        for coeffs, sense, rhs in rows:
            if rhs < 0:
                coeffs = [-c for c in coeffs]
                rhs = -rhs
                sense = {LE: GE, GE: LE, EQ: EQ}[sense]
                self._row_flip.append(True)
            else:
                self._row_flip.append(False)
            norm.append((coeffs, sense, rhs))

        ncols = self.n
        for i, (_, sense, _) in enumerate(norm):
            if sense in (LE, GE):
                self._aux_col[i] = ncols
                self._aux_kind[i] = "slack" if sense == LE else "surplus"
                ncols += 1
        art_col: List[Optional[int]] = [None] * self.m
        for i, (_, sense, _) in enumerate(norm):
            if sense in (EQ, GE):
                art_col[i] = ncols
                ncols += 1
        self._art_col = art_col
        self.ncols = ncols
        self._enterable = [True] * ncols
        for c in art_col:
            if c is not None:
                self._enterable[c] = False

        self.body: List[List] = []
        self.rhs: List = []
        self.basis: List[int] = []
        for i, (coeffs, sense, rhs) in enumerate(norm):
            row = coeffs + [Q0] * (ncols - self.n)
            if self._aux_col[i] is not None:
                row[self._aux_col[i]] = Q1 if sense == LE else -Q1
            if art_col[i] is not None:
                row[art_col[i]] = Q1
            self.body.append(row)
            self.rhs.append(rhs)
            self.basis.append(art_col[i] if art_col[i] is not None else self._aux_col[i])

        self._rc: List = [Q0] * ncols   # reduced-cost row, set per phase
        self._have_artificials = any(c is not None for c in art_col)
        # objective in internal (maximization) orientation
        self._obj = [self._sign * c for c in lp.objective] + [Q0] * (ncols - self.n)

    # ------------------------------------------------------------------ #
    # core pivoting

    def _set_cost_row(self, cost: Sequence) -> None:
        rc = list(cost)
        for r, b in enumerate(self.basis):
            cb = cost[b]
            if cb:
                row = self.body[r]
                for j, a in enumerate(row):
                    if a:
                        rc[j] -= cb * a
        self._rc = rc

    def _pivot(self, prow: int, pcol: int) -> None:
        row = self.body[prow]
        piv = row[pcol]
        if piv != 1:
            inv = Q1 / piv
            self.body[prow] = row = [a and a * inv for a in row]
            self.rhs[prow] *= inv
        nz = [j for j, a in enumerate(row) if a]
        prhs = self.rhs[prow]
        for r, other in enumerate(self.body):
            if r == prow:
                continue
            f = other[pcol]
            if f:
                for j in nz:
                    other[j] -= f * row[j]
                if prhs:
                    self.rhs[r] -= f * prhs
        f = self._rc[pcol]
        if f:
            rc = self._rc
            for j in nz:
                rc[j] -= f * row[j]
        self.basis[prow] = pcol
        bits = int(piv.numerator).bit_length() + int(piv.denominator).bit_length()
        if bits > self.max_bits:
            self.max_bits = bits

    def _primal_loop(self) -> str:
        """Bland's rule: lowest-index improving column; lowest basic index on
        ratio ties.  Returns 'optimal' or 'unbounded'."""
        while True:
            pcol = -1
            for j in range(self.ncols):
                if self._enterable[j] and self._rc[j] > 0:
                    pcol = j
                    break
            if pcol < 0:
                return "optimal"
            prow, best = -1, None
            for r, brow in enumerate(self.body):
                a = brow[pcol]
                if a > 0:
                    ratio = self.rhs[r] / a
                    if best is None or ratio < best or (
                            ratio == best and self.basis[r] < self.basis[prow]):
                        prow, best = r, ratio
            if prow < 0:
                return "unbounded"
            self._pivot(prow, pcol)

    def _dual_loop(self) -> str:
        """Restore primal feasibility keeping dual feasibility (used after
        add_row).  Returns 'optimal' or 'infeasible'."""
        while True:
            prow = -1
            for r in range(self.m):
                if self.rhs[r] < 0 and (prow < 0 or self.basis[r] < self.basis[prow]):
                    prow = r
            if prow < 0:
                return "optimal"
            row = self.body[prow]
            pcol, best = -1, None
            for j in range(self.ncols):
                if self._enterable[j] and row[j] < 0:
                    ratio = self._rc[j] / row[j]   # >= 0
                    if best is None or ratio < best or (ratio == best and j < pcol):
                        pcol, best = j, ratio
            if pcol < 0:
                return "infeasible"
            self._pivot(prow, pcol)

    # ------------------------------------------------------------------ #
    # solve phases

    def solve(self) -> str:
        if self._have_artificials:
            cost = [Q0] * self.ncols
            for c in self._art_col:
                if c is not None:
                    cost[c] = -Q1
            self._set_cost_row(cost)
            self._primal_loop()           # bounded: objective <= 0
            total = sum((self.rhs[r] for r, b in enumerate(self.basis)
                         if self._art_col_set and b in self._art_col_set), Q0)
            if total != 0:
                self.status = "infeasible"
                return self.status
            self._drive_out_artificials()
        self._set_cost_row(self._obj)
        self.status = self._primal_loop()
        if self.max_bits > BIT_SIZE_ALARM:
            warnings.warn(
                f"simplex pivot coefficients reached {self.max_bits} bits",
                RuntimeWarning, stacklevel=2)
        return self.status

    @property
    def _art_col_set(self):
        s = getattr(self, "_art_cols_cached", None)
        if s is None:
            s = frozenset(c for c in self._art_col if c is not None)
            self._art_cols_cached = s
        return s

    def _drive_out_artificials(self) -> None:
        arts = self._art_col_set
        for r in range(self.m):
            if self.basis[r] in arts:
                row = self.body[r]
                pcol = next((j for j in range(self.ncols)
                             if j not in arts and row[j]), None)
                if pcol is not None:
                    self._pivot(r, pcol)
                # else: redundant row; artificial stays basic at value 0

    # ------------------------------------------------------------------ #
    # warm-start interface

    def set_objective(self, objective: Sequence) -> str:
        """Replace the objective (user orientation) and re-optimize."""
        if len(objective) != self.n:
            raise ValueError("objective length mismatch")
        self._obj = [self._sign * qq(c) for c in objective] + \
            [Q0] * (self.ncols - self.n)
        self._set_cost_row(self._obj)
        self.status = self._primal_loop()
        return self.status

    def add_row(self, coeffs: Sequence, sense: str, rhs) -> str:
        """Append a <= or >= row to an optimal tableau and re-optimize via
        dual simplex."""
        if self.status != "optimal":
            raise ValueError("add_row requires an optimal tableau")
        coeffs = [qq(c) for c in coeffs]
        rhs = qq(rhs)
        flipped = False
        if sense == GE:
            coeffs, rhs, sense, flipped = [-c for c in coeffs], -rhs, LE, True
        elif sense != LE:
            raise ValueError("warm add_row supports <= and >= rows only")
        new = coeffs + [Q0] * (self.ncols - self.n)
        newrhs = rhs
        # eliminate current basic variables from the new row
        for r, b in enumerate(self.basis):
            f = new[b]
            if f:
                brow = self.body[r]
                for j, a in enumerate(brow):
                    if a:
                        new[j] -= f * a
                new[b] = Q0
                newrhs -= f * self.rhs[r]
        slack = self.ncols
        for row in self.body:
            row.append(Q0)
        new.append(Q1)
        self._rc.append(Q0)
        self._obj.append(Q0)
        self._enterable.append(True)
        self.ncols += 1
        self.body.append(new)
        self.rhs.append(newrhs)
        self.basis.append(slack)
        self._aux_col.append(slack)
        self._aux_kind.append("slack")
        self._art_col.append(None)
        self._row_flip.append(flipped)
        self._art_cols_cached = None
        self.m += 1
        self.status = self._dual_loop()
        return self.status

    # ------------------------------------------------------------------ #
    # extraction

    def primal(self) -> List:
        x = [Q0] * self.n
        for r, b in enumerate(self.basis):
            if b < self.n:
                x[b] = self.rhs[r]
        return x

    def objective_value(self):
        x = self.primal()
        val = sum((c * v for c, v in zip(self._lp.objective, x) if v), Q0)
        return val

    def duals(self, count: Optional[int] = None):
        """Duals for the first `count` rows (default: user rows), in user
        orientation."""
        if count is None:
            count = len(self._lp.rows)
        out = []
        for i in range(count):
            aux = self._aux_col[i]
            if aux is not None:
                y = self._rc[aux]
                if self._aux_kind[i] == "slack":
                    y = -y
            else:
                y = -self._rc[self._art_col[i]]
            if self._row_flip[i]:
                y = -y
            out.append(self._sign * y)
        return out

    def solution(self) -> LPSolution:
        if self.status != "optimal":
            return LPSolution(status=self.status, max_bits=self.max_bits)
        return LPSolution(
            status="optimal",
            x=self.primal(),
            duals=self.duals(),
            objective=self.objective_value(),
            basis=tuple(self.basis),
            max_bits=self.max_bits,
        )


def solve(lp: LinearProgram) -> LPSolution:
    eng = Simplex(lp)
    eng.solve()
    return eng.solution()


Separator = Callable[[List], Optional[Tuple[Sequence, str, object]]]


def solve_with_row_generation(
        lp: LinearProgram, separator: Separator,
        max_rounds: int = 10_000) -> Tuple[LPSolution, List[Tuple[List, str, object]]]:
    """Solve lp, repeatedly asking `separator(x)` for a violated <= / >= row.

    The separator returns None when x is feasible for the full (implicit)
    family.  Raises SeparatorInconsistent if it returns a row that the
    current point does not actually violate, or re-issues an existing row.

    The returned solution's duals cover lp.rows followed by the added rows
    in generation order (upper bounds are not supported here for that
    reason).
    """
    if lp.upper is not None:
        raise ValueError("row generation does not support upper bounds")
    eng = Simplex(lp)
    eng.solve()
    seen = {(tuple(coeffs), sense, rhs) for coeffs, sense, rhs in lp.rows}
    added: List[Tuple[List, str, object]] = []
    rounds = 0
    while eng.status == "optimal":
        cut = separator(eng.primal())
        if cut is None:
            break
        coeffs, sense, rhs = [qq(c) for c in cut[0]], cut[1], qq(cut[2])
        x = eng.primal()
        lhs = sum((c * v for c, v in zip(coeffs, x) if v), Q0)
        violated = lhs > rhs if sense == LE else lhs < rhs
        if not violated:
            raise SeparatorInconsistent("separator returned a non-violated row")
        key = (tuple(coeffs), sense, rhs)
        if key in seen:
            raise SeparatorInconsistent("separator re-issued an existing row")
        seen.add(key)
        added.append((coeffs, sense, rhs))
        eng.add_row(coeffs, sense, rhs)
        rounds += 1
        if rounds > max_rounds:
            raise SeparatorInconsistent("row generation did not terminate")
    sol = eng.solution()
    if sol.status == "optimal":
        sol.duals = eng.duals(eng.m)
    return sol, added
