"""Eisenberg-Gale solver tests: exact additive equilibria, Frank-Wolfe on
Rado instances, vertex extraction, KKT certification, and cycle cancelling."""

import random

import pytest

from nswalloc._rat import Q0, Q1, power_product_cmp, qq, rat_str
from nswalloc.eg import (
    EGInstance,
    certify_feasible,
    check_sum_of_fractions,
    cycle_cancel_additive,
    extract_vertex,
    solve_eg,
    solve_eg_additive_exact,
    verify_kkt,
)
from nswalloc.matroid import UniformMatroid
from nswalloc.sparsify import sparsify_half, support_stats
from nswalloc.valuation import AdditiveValuation, RadoValuation, random_rado_valuation


def _additive_inst(weights, rows):
    vals = [AdditiveValuation(r) for r in rows]
    return EGInstance.from_valuations(
        list(range(len(rows))), [qq(w) for w in weights], vals, list(range(len(rows[0])))
    )


def _indicator_flow(inst, parts):
    """Edge-flow vector for an integral partition {agent: set(items)}, built
    from each valuation's own optimal extension flow."""
    z = [Q0] * len(inst.var_index)
    for ap, items_here in parts.items():
        val = inst.agents[ap].valuation
        x = [Q1 if j in items_here else Q0 for j in range(val.num_items)]
        ext = val.eval_extension(x)
        for idx, (a, j, k) in enumerate(inst.var_index):
            if a == ap and (j, k) in ext.z:
                z[idx] = ext.z[(j, k)]
    certify_feasible(inst, z)
    return z


# ---------------------------------------------------------------- additive


def test_single_contested_item_splits_by_weight():
    # one item, weights 1:3 -> shares 1/4 and 3/4
    inst = _additive_inst([1, 3], [[1], [1]])
    sol = solve_eg_additive_exact(inst)
    assert sol.purified and sol.gap == 0
    assert sol.u == [qq("1/4"), qq("3/4")]
    assert sol.y == {(0, 0): qq("1/4"), (1, 0): qq("3/4")}


def test_opposite_tastes_give_integral_split():
    inst = _additive_inst([1, 1], [[2, 1], [1, 2]])
    sol = solve_eg_additive_exact(inst)
    assert sol.u == [qq(2), qq(2)]
    assert sol.y == {(0, 0): Q1, (1, 1): Q1}


def test_identical_tastes_equalize_utilities():
    inst = _additive_inst([1, 1], [[3, 1], [3, 1]])
    sol = solve_eg_additive_exact(inst)
    # both end at utility 2: agent 0 takes 1/3 of item 0 plus item 1
    assert sol.u == [qq(2), qq(2)]
    assert sol.y[(0, 0)] == qq("1/3")
    assert sol.y[(1, 0)] == qq("2/3")
    assert sol.y[(0, 1)] == Q1


def test_exact_route_matches_frank_wolfe_objective():
    rng = random.Random(31)
    for _ in range(6):
        n, m = rng.randint(2, 3), rng.randint(2, 4)
        rows = [[rng.randint(0, 9) for _ in range(m)] for _ in range(n)]
        rows = [r if any(r) else [1] * m for r in rows]
        w = [rng.randint(1, 3) for _ in range(n)]
        inst = _additive_inst(w, rows)
        exact = solve_eg_additive_exact(inst)
        approx = solve_eg(inst)
        assert exact.gap == 0 and exact.purified
        assert approx.rel_gap <= 1e-6
        # exact optimum weakly dominates the approximate one in the
        # weighted geometric mean, allowing FW's epsilon of slack
        lhs = [(u, int(4 * qq(wi))) for u, wi in zip(approx.u, w) if u > 0]
        rhs = [(u, int(4 * qq(wi))) for u, wi in zip(exact.u, w) if u > 0]
        if len(lhs) == len(rhs):
            assert power_product_cmp(lhs, [(qq("1000001/1000000"), sum(e for _, e in rhs))] + rhs) <= 0


# ---------------------------------------------------------------- rado / FW


def _rado_pair():
    v0 = RadoValuation(2, 2, {(0, 0): 5, (0, 1): 1, (1, 1): 4}, UniformMatroid(2, 1))
    v1 = RadoValuation(2, 1, {(0, 0): 2, (1, 0): 6}, UniformMatroid(1, 1))
    return EGInstance.from_valuations([0, 1], [Q1, Q1], [v0, v1], [0, 1])


def test_frank_wolfe_on_rado_pair():
    inst = _rado_pair()
    sol = solve_eg(inst)
    assert sol.rel_gap <= 1e-6
    assert sol.u == [qq(5), qq(6)]
    certify_feasible(inst, sol.z)


def test_vertex_extraction_floors_and_support():
    inst = _rado_pair()
    sol = solve_eg(inst)
    vtx = extract_vertex(inst, sol, slack=1e-3)
    floor = qq(1) - qq("1/1000")
    for uv, uf in zip(vtx.u, sol.u):
        assert uv >= floor * uf
    # |supp| <= |A'| + 2|F+| - |F1|
    assert len(vtx.supp) <= len(inst.agents) + 2 * len(vtx.f_plus) - len(vtx.f_one)
    assert sorted(vtx.supp) == [(0, 0), (1, 1)]


def test_kkt_report_on_rado_vertex():
    inst = _rado_pair()
    vtx = extract_vertex(inst, solve_eg(inst), slack=1e-3)
    rep = verify_kkt(inst, vtx)
    assert rep.chain_ok
    assert all(p >= 0 for p in rep.prices.values())
    # budget feasibility p . y_i <= w_i holds outright here
    for spend, agent in zip(rep.budget_spend, inst.agents):
        assert spend <= agent.weight
    assert rep.max_residual() < 0.5  # duals of a degenerate vertex may be off


def test_kkt_residuals_vanish_at_exact_additive_equilibrium():
    inst = _additive_inst([1, 2], [[4, 1], [2, 3]])
    sol = solve_eg_additive_exact(inst)
    vtx = extract_vertex(inst, sol, slack=1e-3)
    rep = verify_kkt(inst, vtx)
    assert rep.chain_ok
    for spend, agent in zip(rep.budget_spend, inst.agents):
        assert spend <= agent.weight * (Q1 + qq("3/1000"))


def test_random_rado_frank_wolfe_feasible_and_converged():
    rng = random.Random(92)
    for _ in range(8):
        n, m = rng.randint(2, 3), rng.randint(2, 4)
        vals = [random_rado_valuation(rng, m) for _ in range(n)]
        w = [qq(rng.randint(1, 3)) for _ in range(n)]
        inst = EGInstance.from_valuations(list(range(n)), w, vals, list(range(m)))
        if any(all(v.singleton(j) == 0 for j in range(m)) for v in vals):
            continue  # zero agents are dropped upstream, not EG's concern
        sol = solve_eg(inst)
        assert sol.rel_gap <= 1e-6
        assert sol.oracle_calls <= 100_000
        certify_feasible(inst, sol.z)
        y2, u2 = {}, [Q0] * n
        for (ap, j, k), c, v in zip(inst.var_index, inst.var_cost, sol.z):
            if v:
                u2[ap] += c * v
        assert u2 == sol.u


# ------------------------------------------------------ sum of fractions


def test_sum_of_fractions_against_integral_competitors():
    inst = _rado_pair()
    star = solve_eg(inst)
    swap = _indicator_flow(inst, {0: {1}, 1: {0}})
    assert check_sum_of_fractions(inst, star, swap, [0, 1], 1e-6)
    assert check_sum_of_fractions(inst, star, swap, [0], 1e-6)
    assert check_sum_of_fractions(inst, star, swap, [1], 1e-6)
    same = _indicator_flow(inst, {0: {0}, 1: {1}})
    assert check_sum_of_fractions(inst, star, same, [0, 1], 1e-6)


def test_sum_of_fractions_random_probes():
    rng = random.Random(55)
    for _ in range(5):
        n, m = rng.randint(2, 3), rng.randint(3, 4)
        vals = [random_rado_valuation(rng, m) for _ in range(n)]
        if any(all(v.singleton(j) == 0 for j in range(m)) for v in vals):
            continue
        w = [qq(rng.randint(1, 3)) for _ in range(n)]
        inst = EGInstance.from_valuations(list(range(n)), w, vals, list(range(m)))
        star = solve_eg(inst)
        for _ in range(4):
            owner = {j: rng.randrange(n) for j in range(m)}
            parts = {ap: {j for j, o in owner.items() if o == ap} for ap in range(n)}
            z = _indicator_flow(inst, parts)
            size = rng.randint(1, n)
            subset = rng.sample(range(n), size)
            assert check_sum_of_fractions(inst, star, z, subset, 1e-6)


# ------------------------------------------------------------- sparsify


def test_sparsify_keeps_half_and_bounds_support():
    rng = random.Random(18)
    for _ in range(10):
        n, m = rng.randint(2, 4), rng.randint(2, 5)
        rows = [[rng.randint(0, 9) for _ in range(m)] for _ in range(n)]
        rows = [r if any(r) else [1] * m for r in rows]
        inst = _additive_inst([rng.randint(1, 3) for _ in range(n)], rows)
        vtx = extract_vertex(inst, solve_eg(inst), slack=1e-3)
        sp = sparsify_half(inst, vtx)
        for ap in range(n):
            assert sp.u[ap] * 2 >= vtx.u[ap]
        stats = sp.stats
        assert len([v for v in sp.y.values() if v > 0]) <= 2 * n + len(stats.f_plus)


def test_support_stats_classification():
    y = {(0, 0): Q1, (1, 1): qq("1/2"), (2, 1): qq("1/2"), (0, 2): qq("1/4")}
    st = support_stats(y)
    assert st.f_plus == [0, 1, 2]
    assert st.f_one == [0, 2]
    assert st.d_items == [1]
    assert st.pair == {1: (1, 2)}
    assert st.a_dd == [1, 2]


# -------------------------------------------------------- cycle cancel


def test_cycle_cancel_leaves_forest_alone():
    values = [[qq(3), qq(3)], [qq(3), qq(3)]]
    y = {(0, 0): Q1, (0, 1): qq("1/2"), (1, 1): qq("1/2")}
    assert cycle_cancel_additive(dict(y), values) == y


def test_cycle_cancel_breaks_square():
    # all-half K22 with equal values: one diagonal survives, utilities kept
    half = qq("1/2")
    values = [[qq(3), qq(3)], [qq(3), qq(3)]]
    y = {(0, 0): half, (0, 1): half, (1, 0): half, (1, 1): half}
    out = cycle_cancel_additive(y, values)
    supp = sorted(k for k, v in out.items() if v > 0)
    assert supp == [(0, 0), (1, 1)]
    assert out[(0, 0)] == Q1 and out[(1, 1)] == Q1


def test_cycle_cancel_preserves_utilities_on_random_optima():
    rng = random.Random(7)
    for _ in range(8):
        n, m = rng.randint(2, 3), rng.randint(2, 4)
        rows = [[rng.randint(0, 9) for _ in range(m)] for _ in range(n)]
        rows = [r if any(r) else [1] * m for r in rows]
        inst = _additive_inst([rng.randint(1, 3) for _ in range(n)], rows)
        sol = solve_eg_additive_exact(inst)
        vq = [[qq(x) for x in r] for r in rows]
        out = cycle_cancel_additive(dict(sol.y), vq)
        # forest: support size < agents + items actually touched
        supp = [k for k, v in out.items() if v > 0]
        agents = {a for a, _ in supp}
        items = {j for _, j in supp}
        assert len(supp) <= len(agents) + len(items) - 1
        after = [Q0] * n
        for (a, j), v in out.items():
            after[a] += vq[a][j] * v
        assert after == sol.u
        for j in range(m):
            assert sum((v for (a, jj), v in out.items() if jj == j), Q0) <= 1
