"""Valuations: discrete evaluation, continuous extension, concavity checks.

The Rado evaluator is cross-checked against a direct matching enumeration,
and the LP extension against both indicator vectors and the generic concave
closure.
"""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nswalloc._rat import Q0, Q1, qq
from nswalloc.errors import DomainError
from nswalloc.matroid import UniformMatroid
from nswalloc.valuation import (AdditiveValuation, ExplicitValuation,
                                RadoValuation, check_m_natural_concave,
                                random_rado_valuation)


def brute_rado_value(v: RadoValuation, subset):
    """Best matching of `subset` into a matroid-independent right set,
    by enumerating injective partial maps."""
    items = sorted(subset)
    best = Q0
    rights = range(v.right_size)
    for size in range(len(items) + 1):
        for chosen in itertools.combinations(items, size):
            for assign in itertools.permutations(rights, size):
                tmask = 0
                for k in assign:
                    tmask |= 1 << k
                if v.matroid.rank_mask(tmask) != size:
                    continue
                total = Q0
                ok = True
                for j, k in zip(chosen, assign):
                    c = v.edges.get((j, k))
                    if c is None:
                        ok = False
                        break
                    total += c
                if ok and total > best:
                    best = total
    return best


def test_additive_basics():
    v = AdditiveValuation([3, 0, qq("1/2")])
    assert v.eval_discrete([0, 2]) == qq("7/2")
    assert v.eval_discrete([]) == 0
    assert v.singleton(1) == 0
    with pytest.raises(DomainError):
        AdditiveValuation([-1])


def test_additive_extension_is_linear():
    v = AdditiveValuation([4, 1, 0])
    r = v.eval_extension([qq("1/2"), Q1, Q0])
    assert r.value == 3
    assert r.per_item == {0: 2, 1: 1}


def test_rado_worked_example():
    # two items, two right nodes, rank-1 matroid: only one right node usable
    v = RadoValuation(2, 2, {(0, 0): 5, (0, 1): 1, (1, 1): 4},
                      UniformMatroid(2, 1))
    assert v.eval_discrete([0]) == 5
    assert v.eval_discrete([1]) == 4
    # both items: matroid allows one right node, so the best single edge wins
    assert v.eval_discrete([0, 1]) == 5


def test_rado_matches_brute_force():
    rng = random.Random(42)
    for _ in range(60):
        m = rng.randint(1, 4)
        v = random_rado_valuation(rng, m)
        for mask in range(1 << m):
            subset = [j for j in range(m) if (mask >> j) & 1]
            assert v.eval_discrete(subset) == brute_rado_value(v, subset)


def test_rado_monotone_and_subadditive():
    rng = random.Random(3)
    for _ in range(30):
        v = random_rado_valuation(rng, 4)
        for mask in range(16):
            for j in range(4):
                if (mask >> j) & 1:
                    continue
                bigger = v.eval_discrete_mask(mask | (1 << j))
                assert bigger >= v.eval_discrete_mask(mask)
                assert bigger <= v.eval_discrete_mask(mask) + v.singleton(j)


def test_extension_agrees_on_indicators():
    rng = random.Random(11)
    for _ in range(40):
        m = rng.randint(1, 4)
        v = random_rado_valuation(rng, m)
        for mask in range(1 << m):
            x = [Q1 if (mask >> j) & 1 else Q0 for j in range(m)]
            assert v.eval_extension(x).value == v.eval_discrete_mask(mask)


def test_extension_equals_concave_closure():
    rng = random.Random(12)
    for _ in range(25):
        m = rng.randint(1, 4)
        v = random_rado_valuation(rng, m)
        for _ in range(5):
            x = [qq(rng.randint(0, 4)) / 4 for _ in range(m)]
            assert v.eval_extension(x).value == v.eval_concave_closure(x)


def test_extension_rejects_out_of_box():
    v = AdditiveValuation([1, 1])
    with pytest.raises(DomainError):
        v.eval_extension([qq(2), Q0])
    with pytest.raises(DomainError):
        v.eval_extension([qq(-1) / 2, Q0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=9), min_size=1, max_size=5),
       st.data())
def test_additive_extension_concavity_pointwise(values, data):
    """midpoint value >= average of endpoint values (trivially equality
    for additive, but exercises the exact path)."""
    v = AdditiveValuation(values)
    m = len(values)
    a = [qq(data.draw(st.integers(0, 4), label=f"a{j}")) / 4 for j in range(m)]
    b = [qq(data.draw(st.integers(0, 4), label=f"b{j}")) / 4 for j in range(m)]
    mid = [(ai + bi) / 2 for ai, bi in zip(a, b)]
    lhs = v.eval_extension(mid).value
    rhs = (v.eval_extension(a).value + v.eval_extension(b).value) / 2
    assert lhs >= rhs


def test_explicit_valuation_checks_table():
    with pytest.raises(DomainError):
        ExplicitValuation([1, 2])            # empty set must be 0
    with pytest.raises(DomainError):
        ExplicitValuation([0, 1, 2])         # not a power of two


def test_mnat_passes_for_random_rado():
    rng = random.Random(5)
    for _ in range(40):
        v = random_rado_valuation(rng, rng.randint(1, 4))
        assert check_m_natural_concave(v) is None


def test_mnat_table_with_two_cheap_pairs():
    # 10 on singletons, 19 on everything bigger except two special pairs at 15
    table = [0] + [0] * 15
    for mask in range(1, 16):
        bits = bin(mask).count("1")
        table[mask] = 10 if bits == 1 else 19
    table[0b0101] = 15
    table[0b1010] = 15
    assert check_m_natural_concave(ExplicitValuation(table)) is None


def test_mnat_fails_on_complements():
    # pair-bonus valuation: worthless alone, valuable together
    v = ExplicitValuation([0, 0, 0, 5])
    witness = check_m_natural_concave(v)
    assert witness is not None
    xset, yset, x = witness
    assert x in xset and x not in yset


def test_random_rado_reproducible():
    a = random_rado_valuation(random.Random(77), 4)
    b = random_rado_valuation(random.Random(77), 4)
    assert a.edges == b.edges
    assert a.right_size == b.right_size
    assert [a.matroid.rank_mask(s) for s in range(1 << a.right_size)] == \
           [b.matroid.rank_mask(s) for s in range(1 << b.right_size)]
