"""Exact rational arithmetic helpers.

Everything decision-relevant in this package is computed over exact
rationals.  gmpy2.mpq is used when available (it is an order of magnitude
faster than fractions.Fraction on the simplex inner loops); the stdlib
Fraction is a drop-in fallback.  Only this module knows which one is active.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence, Tuple, Union

try:  # pragma: no cover - exercised implicitly by the whole suite
    from gmpy2 import mpq as _mpq

    QQ = _mpq
    HAVE_GMPY = True
except ImportError:  # pragma: no cover
    QQ = Fraction
    HAVE_GMPY = False

#: zero / one in the active rational type
Q0 = QQ(0)
Q1 = QQ(1)

RatLike = Union[int, Fraction, "QQ"]


def qq(value) -> "QQ":
    """Coerce ints, Fractions, mpqs, floats and decimal/ratio strings to QQ.

    Floats are converted through their exact binary value (use strings for
    base-10 exactness).  Strings accept both "p/q" and decimal notation.
    """
    if isinstance(value, str):
        return QQ(Fraction(value))
    if isinstance(value, float):
        return QQ(Fraction(value))
    return QQ(value)


def qq_from_decimal_str(s: str) -> "QQ":
    """Exact base-10 conversion: '0.7' -> 7/10."""
    return QQ(Fraction(s))


def as_fraction(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


def rat_str(q) -> str:
    """Canonical 'p/q' (or 'p' when integral) rendering."""
    n, d = int(q.numerator), int(q.denominator)
    return str(n) if d == 1 else f"{n}/{d}"


def is_rational(value) -> bool:
    if isinstance(value, (int, Fraction)):
        return True
    return HAVE_GMPY and isinstance(value, type(Q0))


def qlog(q) -> float:
    """log of a positive rational, safe for huge numerators/denominators."""
    n, d = int(q.numerator), int(q.denominator)
    if n <= 0:
        raise ValueError("qlog needs a positive rational")
    return math.log(n) - math.log(d)


def power_product_cmp(
    left: Sequence[Tuple["QQ", int]], right: Sequence[Tuple["QQ", int]]
) -> int:
    """Exactly compare prod(base^exp) terms: -1, 0 or +1.

    Bases are nonnegative rationals, exponents nonnegative ints.  Zero bases
    with a positive exponent zero out their side.
    """
    ln = ld = rn = rd = 1
    for base, exp in left:
        if exp == 0:
            continue
        bn, bd = int(base.numerator), int(base.denominator)
        if bn == 0:
            ln = 0
            break
        ln *= bn**exp
        ld *= bd**exp
    for base, exp in right:
        if exp == 0:
            continue
        bn, bd = int(base.numerator), int(base.denominator)
        if bn == 0:
            rn = 0
            break
        rn *= bn**exp
        rd *= bd**exp
    lhs = ln * rd
    rhs = rn * ld
    if lhs < rhs:
        return -1
    if lhs > rhs:
        return 1
    return 0


def power_product(terms: Iterable[Tuple["QQ", int]]) -> "QQ":
    """prod(base^exp) as an exact rational."""
    out = Q1
    for base, exp in terms:
        if exp:
            out *= QQ(base) ** exp
    return out


def geometric_mean_float(terms: Iterable[Tuple["QQ", int]], exp_sum: int) -> float:
    """(prod base^exp)^(1/exp_sum) in floats, via logs (safe for big ints)."""
    if exp_sum <= 0:
        raise ValueError("exp_sum must be positive")
    acc = 0.0
    for base, exp in terms:
        if exp == 0:
            continue
        n, d = int(base.numerator), int(base.denominator)
        if n == 0:
            return 0.0
        acc += exp * (math.log(n) - math.log(d))
    return math.exp(acc / exp_sum)
