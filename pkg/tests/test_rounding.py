"""Rounding-phase tests: mixed solutions, keeper reduction, the preferred-item
rematch walk, and final bundle emission.

The rematch fixtures are hand-computed: each one pins down a branch of the
path-reversal rule (empty B, reversible interval, irreversible interval, and
the endpoint convention that the last agent of a path counts toward the
affordability product).
"""

import itertools
import math
import random

import pytest

from nswalloc._rat import Q0, Q1, power_product_cmp, qq
from nswalloc.errors import NonPartition
from nswalloc.rounding import (
    MixedSolution,
    Reduction,
    assign_best_h,
    check_reduction_bound,
    finalize,
    mixed_solution,
    reduce,
    rematch,
)
from nswalloc.valuation import AdditiveValuation

NONE = None
HALF = qq("1/2")


# ------------------------------------------------------------ mixed solutions


def test_mixed_solution_values_and_sandwich():
    vals = [AdditiveValuation([4, 0, 3]), AdditiveValuation([1, 5, 2])]
    y = {(0, 0): HALF, (1, 0): HALF, (1, 1): Q1}
    mix = mixed_solution(vals, [1, 2], y, [2, NONE])
    assert mix.y_values == [qq(2), qq("11/2")]
    assert mix.sigma_values == [qq(3), Q0]
    # additive: merging the sigma item is exactly additive
    assert mix.merged_values == [qq(5), qq("11/2")]
    assert mix.bar_bases() == [qq(5), qq("11/2")]
    assert math.isclose(mix.nsw, (5 * 5.5 * 5.5) ** (1 / 3), rel_tol=1e-12)
    assert math.isclose(mix.nsw, mix.nsw_bar, rel_tol=1e-12)


def test_mixed_solution_rejects_oversubscription():
    vals = [AdditiveValuation([1]), AdditiveValuation([1])]
    with pytest.raises(AssertionError):
        mixed_solution(vals, [1, 1], {(0, 0): Q1, (1, 0): Q1}, [NONE, NONE])


def test_mixed_solution_rejects_sigma_reuse():
    vals = [AdditiveValuation([1, 1]), AdditiveValuation([1, 1])]
    with pytest.raises(AssertionError):
        mixed_solution(vals, [1, 1], {}, [1, 1])


def test_mixed_solution_rejects_sigma_in_fractional_support():
    vals = [AdditiveValuation([1, 1])]
    with pytest.raises(AssertionError):
        mixed_solution(vals, [1], {(0, 1): HALF}, [1])


class _Superadditive:
    """Pathological valuation whose extension jumps when both items appear;
    used to confirm the split-dominates-merged check is alive."""

    num_items = 2

    def eval_extension(self, x):
        class R:
            pass
        r = R()
        base = x[0] + x[1]
        r.value = base * base * 100 if (x[0] > 0 and x[1] > 0) else base
        return r

    def singleton(self, j):
        return Q1


def test_sandwich_assert_catches_superadditive_merge():
    with pytest.raises(AssertionError, match="split upper bound"):
        mixed_solution([_Superadditive()], [1], {(0, 0): Q1}, [1])


# -------------------------------------------------------------- assign_best_h


def test_assign_best_h_rescues_zero_value_agent():
    # agent 1 has nothing fractional: the single H item must go there even
    # though agent 0 would also like it
    rho = assign_best_h([Q1, Q0], [[Q1], [Q1]], [1, 1], [0])
    assert rho == [NONE, 0]


def test_assign_best_h_prefers_relative_gain():
    # both positive: item helps agent 1 more in relative terms (1 -> 6 vs 9 -> 14)
    rho = assign_best_h([qq(9), Q1], [[qq(5)], [qq(5)]], [1, 1], [0])
    assert rho == [NONE, 0]


def test_assign_best_h_matches_brute_force_product():
    rng = random.Random(1009)
    for _ in range(40):
        n = rng.randint(2, 3)
        h_items = list(range(rng.randint(1, 3)))
        y_vals = [qq(rng.randint(1, 9)) for _ in range(n)]
        singles = [[qq(rng.randint(0, 9)) for _ in h_items] for _ in range(n)]
        exps = [rng.randint(1, 2) for _ in range(n)]
        got = assign_best_h(y_vals, singles, exps, h_items)

        best, best_vec = None, None
        options = [h_items + [NONE]] * n
        for cand in itertools.product(*options):
            picked = [h for h in cand if h is not NONE]
            if len(picked) != len(set(picked)):
                continue
            terms = []
            for i, h in enumerate(cand):
                base = y_vals[i] + (singles[i][h] if h is not NONE else Q0)
                terms.append((base, exps[i]))
            key = tuple(len(h_items) if h is NONE else h for h in cand)
            if best is None or power_product_cmp(best, terms) < 0:
                best, best_vec = terms, key
            elif power_product_cmp(best, terms) == 0 and key < best_vec:
                best_vec = key
        want = [NONE if k == len(h_items) else k for k in best_vec]
        assert got == want, (y_vals, singles, exps, got, want)


# ------------------------------------------------------------------ reduction


def _figure_like_fixture():
    """Three agents, nine fractional items, one H item each."""
    y = {}
    for j in (0, 1, 2):
        y[(0, j)] = HALF
        y[(2, j)] = HALF
    for j in (3, 4):
        y[(0, j)] = HALF
        y[(1, j)] = HALF
    y[(1, 7)] = HALF
    y[(2, 7)] = HALF
    for (i, j) in [(1, 5), (1, 6), (2, 8)]:
        y[(i, j)] = Q1
    pu = {(0, 0): qq(2), (0, 1): qq(2), (0, 2): qq(2),
          (2, 0): Q1, (2, 1): Q1, (2, 2): Q1,
          (1, 3): qq(3), (1, 4): qq(3), (0, 3): Q1, (0, 4): Q1,
          (2, 7): qq(5), (1, 7): Q1,
          (1, 5): Q1, (1, 6): Q1, (2, 8): Q1}
    vals = [AdditiveValuation([4, 4, 4, 2, 2, 0, 0, 0, 0, 3, 0, 0]),
            AdditiveValuation([0, 0, 0, 6, 6, 1, 1, 2, 0, 0, 3, 0]),
            AdditiveValuation([2, 2, 2, 0, 0, 0, 0, 10, 1, 0, 0, 3])]
    mix = mixed_solution(vals, [1, 1, 1], y, [NONE] * 3, pair_util=pu)
    return vals, mix


def test_reduce_picks_highest_utility_keepers():
    _, mix = _figure_like_fixture()
    red = reduce(mix)
    assert red.kappa == {0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 1, 6: 1, 7: 2, 8: 2}
    assert red.d == [2, 1, 3]
    assert red.dbar == [2, 1, 3]
    assert set(red.y_r) == {(0, 0), (0, 1), (0, 2), (1, 3), (1, 4),
                            (1, 5), (1, 6), (2, 7), (2, 8)}


def test_reduce_forest_loses_at_most_one_item_each():
    vals = [AdditiveValuation([3, 1, 0]), AdditiveValuation([0, 2, 5])]
    y = {(0, 0): Q1, (0, 1): HALF, (1, 1): HALF, (1, 2): Q1}
    mix = mixed_solution(vals, [1, 1], y, [NONE, NONE], forest=True)
    red = reduce(mix)
    assert all(d <= 1 for d in red.d)
    assert red.dbar == [1, 1]
    # item 1's keeper is agent 0, the root-side parent of the shared edge
    assert red.kappa[1] in (0, 1)
    assert sum(red.d) == 1


def test_reduce_rejects_overdense_support():
    n, m = 2, 5
    vals = [AdditiveValuation([1] * m) for _ in range(n)]
    y = {(i, j): HALF for i in range(n) for j in range(m)}
    pu = {(i, j): Q1 for i in range(n) for j in range(m)}
    mix = mixed_solution(vals, [1, 1], y, [NONE, NONE], pair_util=pu)
    with pytest.raises(AssertionError, match="support too dense"):
        reduce(mix)


def test_reduce_needs_pair_utilities_off_forest():
    vals = [AdditiveValuation([1])]
    mix = mixed_solution(vals, [1], {(0, 0): Q1}, [NONE])
    with pytest.raises(AssertionError, match="per-pair utilities"):
        reduce(mix)


# -------------------------------------------------------------------- rematch


M3_SINGLES = [[qq(5), qq(2), qq(3)], [qq(3), qq(4), qq(2)]]


def test_rematch_passthrough_when_pi_equals_tau():
    rho = rematch([HALF, HALF], [0, 1], [0, 1], [1, 1], [1, 1],
                  M3_SINGLES, [2])
    assert rho == [0, 1]


def test_rematch_keeps_pi_when_b_empty():
    # nobody's fractional value beats the matched item: whole cycle stays pi
    rho = rematch([HALF, HALF], [1, 0], [0, 1], [1, 1], [1, 1],
                  M3_SINGLES, [2])
    assert rho == [1, 0]


def test_rematch_reverses_affordable_path():
    rho = rematch([qq(10), Q1], [1, 0], [0, 1], [1, 1], [1, 1],
                  M3_SINGLES, [2])
    assert rho == [0, 1]


def test_rematch_reverses_singleton_paths_when_both_rich():
    trace = []
    rho = rematch([qq(10), qq(10)], [1, 0], [0, 1], [1, 1], [1, 1],
                  M3_SINGLES, [2], trace=trace)
    assert rho == [0, 1]
    assert trace and sorted(trace[0]["B"]) == [0, 1]
    assert all(d["reversible"] for d in trace[0]["paths"])


def test_rematch_drops_head_of_unaffordable_path():
    singles = [[Q1, qq("1/1000"), Q1], [qq(100), Q1, Q1]]
    trace = []
    rho = rematch([qq(10), Q1], [1, 0], [0, 1], [1, 1], [1, 1],
                  singles, [2], trace=trace)
    # reversing would multiply the tau objective shortfall past (dbar+1)^2
    assert rho == [NONE, 0]
    assert trace[0]["paths"] == [{"start": 0, "end": 1, "reversible": False}]


def test_rematch_path_product_includes_last_agent():
    # affordability 3 vs threshold 4 only when the path's end agent counts;
    # the off-by-one variant (threshold 2) would refuse to reverse
    singles = [[Q1, HALF], [qq(7), Q1]]
    rho = rematch([qq(3), Q1], [1, 0], [0, 1], [1, 1], [1, 1], singles, [])
    assert rho == [0, 1]


def test_rematch_ten_agent_cycle_splits_into_two_paths():
    n = 10
    singles = [[Q0] * n for _ in range(n)]
    for t in range(n):
        singles[t][t] = Q1
        prev = (t - 1) % n
        if t in (0, 1, 2, 3):
            singles[t][prev] = qq(100)
        elif t in (4, 9):
            singles[t][prev] = HALF
        else:
            singles[t][prev] = Q1
    pi = [(t - 1) % n for t in range(n)]
    tau = list(range(n))
    trace = []
    rho = rematch([Q1] * n, pi, tau, [1] * n, [1] * n, singles, [],
                  trace=trace)
    # B = {4, 9}; [4..8] is cheap to reverse, [9,0,1,2,3] is not
    assert rho == [9, 0, 1, 2, 4, 5, 6, 7, 8, NONE]
    assert trace[0]["B"] == [4, 9]
    flags = {(d["start"], d["end"]): d["reversible"] for d in trace[0]["paths"]}
    assert flags == {(4, 8): True, (9, 3): False}


def test_rematch_loss_dichotomy_guards_f_items():
    # agent 0 ends unmatched; every F item must then be dominated by its
    # fractional value -- make item 2 huge and the internal check trips
    singles = [[Q1, qq("1/1000"), qq(50)], [qq(100), Q1, Q1]]
    with pytest.raises(AssertionError, match="kept too little"):
        rematch([qq(10), Q1], [1, 0], [0, 1], [1, 1], [1, 1], singles, [2])


# ---------------------------------------------------------- reduction bound


def test_check_reduction_bound_passes_figure_fixture():
    vals, mix = _figure_like_fixture()
    red = reduce(mix)
    rho = [9, 10, NONE]
    post = mixed_solution(vals, [1, 1, 1], red.y_r, rho, pair_util=mix.pair_util)
    check_reduction_bound(mix, post, red, qq(1))


def test_check_reduction_bound_rejects_excessive_loss():
    vals = [AdditiveValuation([4, 1])]
    pre = mixed_solution(vals, [1], {(0, 0): Q1}, [NONE],
                         pair_util={(0, 0): qq(4)})
    post = mixed_solution(vals, [1], {}, [NONE])
    red = Reduction(y_r={}, kappa={}, d=[1], dbar=[1])
    with pytest.raises(AssertionError, match="dbar"):
        check_reduction_bound(pre, post, red, qq(1))


# ------------------------------------------------------------------ finalize


def test_finalize_emits_expected_bundles():
    vals, mix = _figure_like_fixture()
    red = reduce(mix)
    out = finalize(red, [9, 10, NONE], vals, [1, 1, 1], [9, 10, 11])
    assert out.bundles == [[0, 1, 2, 9], [3, 4, 5, 6, 10], [7, 8]]
    assert out.values == [qq(15), qq(17), qq(11)]
    assert math.isclose(out.nsw, (15 * 17 * 11) ** (1 / 3), rel_tol=1e-12)


def test_finalize_routes_leftovers_to_a_valuing_agent():
    vals = [AdditiveValuation([1, 0, 0]), AdditiveValuation([0, 0, 2])]
    red = Reduction(y_r={(0, 0): Q1}, kappa={0: 0}, d=[0, 0], dbar=[1, 1])
    out = finalize(red, [1, NONE], vals, [1, 1], [1])
    # item 2 has no owner: agent 1 is the first to value it
    assert out.bundles == [[0, 1], [2]]
    assert out.values == [Q1, qq(2)]


def test_finalize_dead_leftover_falls_to_agent_zero():
    vals = [AdditiveValuation([1, 0]), AdditiveValuation([2, 0])]
    red = Reduction(y_r={(1, 0): Q1}, kappa={0: 1}, d=[0, 0], dbar=[1, 1])
    out = finalize(red, [NONE, NONE], vals, [1, 1], [])
    assert out.bundles == [[1], [0]]


def test_finalize_rejects_conflicting_ownership():
    vals = [AdditiveValuation([1, 1]), AdditiveValuation([1, 1])]
    red = Reduction(y_r={(0, 0): Q1}, kappa={0: 0}, d=[0, 0], dbar=[1, 1])
    with pytest.raises(NonPartition):
        finalize(red, [0, NONE], vals, [1, 1], [1])  # rho points outside H
    with pytest.raises(NonPartition):
        finalize(red, [1, 1], vals, [1, 1], [1])  # both claim item 1
    red_bad = Reduction(y_r={(0, 1): Q1}, kappa={1: 0}, d=[0, 0], dbar=[1, 1])
    with pytest.raises(NonPartition):
        finalize(red_bad, [NONE, NONE], vals, [1, 1], [1])  # kept item inside H
