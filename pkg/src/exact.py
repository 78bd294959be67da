"""Exact comparisons against bounds of the form base + coeff * sqrt(radicand)"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

Rational = Union[int, Fraction]


def parse_fraction(text: str) -> Fraction:
    """Parse "num/den", an integer, or a finite decimal literal"""
    return Fraction(text.strip())


def le_sqrt_bound(lhs: Rational, base: Rational, coeff: Rational, radicand: Rational) -> bool:
    """lhs <= base + coeff * sqrt(radicand), decided without rounding (coeff, radicand >= 0)"""
    if coeff < 0 or radicand < 0:
        raise ValueError("coeff and radicand must be non-negative")
    gap = Fraction(lhs) - Fraction(base)
    if gap <= 0:
        return True
    return gap * gap <= Fraction(coeff) ** 2 * Fraction(radicand)


def sqrt_two_over_q(q: int) -> float:
    """sqrt(2/q) evaluated in the log domain so q beyond the float range is fine"""
    return 2.0 ** ((1.0 - math.log2(q)) / 2.0)


def as_decimal(value: Fraction, digits: int = 12) -> str:
    return f"{float(value):.{digits}g}"
