"""Exact-rational simplex: solutions, duals, statuses, row generation."""

import random

import pytest

from nswalloc import lp
from nswalloc._rat import Q0, Q1, qq
from nswalloc.errors import SeparatorInconsistent


def test_basic_max():
    # max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18  (classic, opt 36)
    prog = lp.LinearProgram(
        [3, 5],
        [([1, 0], lp.LE, 4), ([0, 2], lp.LE, 12), ([3, 2], lp.LE, 18)])
    sol = lp.solve(prog)
    assert sol.optimal
    assert sol.objective == 36
    assert sol.x == [qq(2), qq(6)]


def test_duals_satisfy_strong_duality():
    prog = lp.LinearProgram(
        [3, 5],
        [([1, 0], lp.LE, 4), ([0, 2], lp.LE, 12), ([3, 2], lp.LE, 18)])
    sol = lp.solve(prog)
    dual_obj = sum(d * qq(r) for d, (c, s, r) in zip(sol.duals, prog.rows))
    assert dual_obj == sol.objective
    assert all(d >= 0 for d in sol.duals)


def test_minimize():
    # min x + y st x + 2y >= 4, 3x + y >= 6
    prog = lp.LinearProgram(
        [1, 1],
        [([1, 2], lp.GE, 4), ([3, 1], lp.GE, 6)],
        maximize=False)
    sol = lp.solve(prog)
    assert sol.optimal
    assert sol.objective == qq("14/5")


def test_infeasible():
    prog = lp.LinearProgram([1], [([1], lp.LE, 1), ([1], lp.GE, 2)])
    sol = lp.solve(prog)
    assert sol.status == "infeasible"


def test_unbounded():
    prog = lp.LinearProgram([1, 0], [([0, 1], lp.LE, 1)])
    sol = lp.solve(prog)
    assert sol.status == "unbounded"


def test_equality_rows():
    prog = lp.LinearProgram(
        [2, 3], [([1, 1], lp.EQ, 10), ([1, -1], lp.LE, 2)])
    sol = lp.solve(prog)
    assert sol.optimal
    assert sol.x[0] + sol.x[1] == 10
    assert sol.objective == 30          # everything to y


def test_upper_bounds():
    prog = lp.LinearProgram([1, 1], [([1, 1], lp.LE, 10)], upper=[3, 4])
    sol = lp.solve(prog)
    assert sol.objective == 7


def test_degenerate_cycling_guard():
    # Beale's classic cycling example; Bland's rule must terminate.
    prog = lp.LinearProgram(
        [qq("3/4"), -150, qq("1/50"), -6],
        [([qq("1/4"), -60, qq("-1/25"), 9], lp.LE, 0),
         ([qq("1/2"), -90, qq("-1/50"), 3], lp.LE, 0),
         ([0, 0, 1, 0], lp.LE, 1)])
    sol = lp.solve(prog)
    assert sol.optimal
    assert sol.objective == qq("1/20")


def test_exact_rationals_no_drift():
    # tiny coefficients whose float rounding would be visible at 1e-18
    prog = lp.LinearProgram(
        [qq("1/3"), qq("1/7")],
        [([qq("1/3"), qq("1/7")], lp.LE, qq("1/21"))])
    sol = lp.solve(prog)
    assert sol.objective == qq("1/21")


def test_row_generation_knapsack_family():
    # max x0+x1+x2 with hidden family: x_i + x_j <= 1 for all pairs.
    pairs = [(0, 1), (0, 2), (1, 2)]

    def separator(x):
        for (i, j) in pairs:
            if x[i] + x[j] > 1:
                coeffs = [Q1 if t in (i, j) else Q0 for t in range(3)]
                return (coeffs, lp.LE, Q1)
        return None

    base = lp.LinearProgram([1, 1, 1], [([1, 1, 1], lp.LE, 3)])
    sol, added = lp.solve_with_row_generation(base, separator)
    assert sol.optimal
    assert sol.objective == qq("3/2")   # fractional vertex (1/2,1/2,1/2)
    assert len(added) >= 2
    assert len(sol.duals) == 1 + len(added)


def test_row_generation_rejects_bogus_cut():
    def separator(x):
        return ([Q1], lp.LE, qq(100))   # never violated

    base = lp.LinearProgram([1], [([1], lp.LE, 1)])
    with pytest.raises(SeparatorInconsistent):
        lp.solve_with_row_generation(base, separator)


def test_random_lps_against_duality(seed=99, trials=25):
    """Weak check on random feasible bounded LPs: strong duality holds
    exactly and the primal is feasible."""
    rng = random.Random(seed)
    for _ in range(trials):
        n = rng.randint(1, 4)
        rows = []
        for _ in range(rng.randint(1, 4)):
            coeffs = [qq(rng.randint(0, 5)) for _ in range(n)]
            rows.append((coeffs, lp.LE, qq(rng.randint(1, 10))))
        rows.append(([Q1] * n, lp.LE, qq(20)))  # keep it bounded
        obj = [qq(rng.randint(0, 5)) for _ in range(n)]
        prog = lp.LinearProgram(obj, rows)
        sol = lp.solve(prog)
        assert sol.optimal
        for coeffs, sense, rhs in prog.rows:
            lhs = sum((c * v for c, v in zip(coeffs, sol.x)), Q0)
            assert lhs <= rhs
        dual_obj = sum(d * r for d, (c, s, r) in zip(sol.duals, prog.rows))
        assert dual_obj == sol.objective
