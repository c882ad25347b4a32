"""Integer polynomials, ||.||, and the approximation sets A(q, delta), B(q, delta).

    A(q, delta) = {x in K   : ||P(q) x|| < delta}
    B(q, delta) = {x in K^d : max_i ||P(q) x_i|| < delta}

B is a product of d copies of A, so m_d(B) = m(A)^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import DomainError
from .measure import (
    MissingDigitMeasure,
    RationalInterval,
    band_measure_bounds,
    measure_interval_union,
)


@dataclass(frozen=True)
class IntegerPolynomial:
    """P(q) = sum_k coefficients[k] q^k, constant term first."""

    coefficients: tuple[int, ...]

    def __post_init__(self):
        coeffs = list(self.coefficients)
        if any(isinstance(c, float) and not float(c).is_integer() for c in coeffs):
            raise DomainError(f"polynomial coefficients must be integers, got {coeffs}")
        coeffs = [int(c) for c in coeffs]
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        if not coeffs:
            raise DomainError("polynomial must have a non-zero coefficient")
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @classmethod
    def monomial(cls, n: int) -> "IntegerPolynomial":
        return cls(tuple([0] * n + [1]))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, q: int) -> int:
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * q + c
        return acc

    def validate_positive(self, q_values) -> None:
        """Raise unless P(q) >= 1 on every q given."""
        for q in q_values:
            if self(q) < 1:
                raise DomainError(f"P({q}) = {self(q)} < 1; P must be positive on the tested range")


@dataclass(frozen=True)
class ApproxTarget:
    measure: MissingDigitMeasure
    polynomial: IntegerPolynomial

    @property
    def dimension(self) -> int:
        return self.measure.dimension

    @property
    def system(self):
        return self.measure.system


def nearest_int_distance(y) -> float:
    """||y||, the distance from y to the nearest integer."""
    r = y - math.floor(y)
    return min(r, 1 - r)


def _as_delta(delta) -> Fraction:
    if isinstance(delta, float):
        # floats are binary rationals; accept them exactly rather than guessing a decimal
        delta = Fraction(delta)
    delta = Fraction(delta)
    if delta < 0:
        raise DomainError(f"delta must be >= 0, got {delta}")
    return delta


def _check_q(q):
    if int(q) != q or q < 1:
        raise DomainError(f"q must be an integer >= 1, got {q}")


def approx_intervals(P: IntegerPolynomial, q: int, delta) -> list[RationalInterval]:
    """{x in [0,1] : ||P(q) x|| < delta} as sorted disjoint intervals with exact endpoints."""
    _check_q(q)
    delta = _as_delta(delta)
    p = P(q)
    if p < 1:
        raise DomainError(f"P({q}) = {p} must be >= 1")
    if delta == 0:
        return []
    if delta >= Fraction(1, 2):
        # the components (k -+ delta)/p touch only at delta = 1/2; the gaps left are single points
        return [RationalInterval(Fraction(0), Fraction(1))]
    n, d = delta.numerator, delta.denominator
    den = p * d
    out = [RationalInterval(Fraction(0), Fraction(n, den), True, False)]
    for k in range(1, p):
        out.append(RationalInterval(Fraction(k * d - n, den), Fraction(k * d + n, den), False, False))
    out.append(RationalInterval(Fraction(den - n, den), Fraction(1), False, True))
    return out


def lebesgue_length(intervals: Sequence[RationalInterval]) -> Fraction:
    if not intervals:
        return Fraction(0)
    # one common denominator keeps the sum in integer arithmetic
    den = math.lcm(*(e.denominator for iv in intervals for e in (iv.lower, iv.upper)))
    num = sum(iv.upper.numerator * (den // iv.upper.denominator)
              - iv.lower.numerator * (den // iv.lower.denominator) for iv in intervals)
    return Fraction(num, den)


def measure_A(target: ApproxTarget, q: int, delta, tol: float = 1e-12, *, method: str = "auto") -> float:
    """m(A(q, delta)) within tol, m being the one-dimensional marginal of the target.

    ``method="intervals"`` sums measure_interval over approx_intervals; the default
    uses the periodic cylinder recursion, whose cost does not grow with the number
    of intervals. Both are exact up to the tolerance.
    """
    _check_q(q)
    delta = _as_delta(delta)
    p = target.polynomial(q)
    if p < 1:
        raise DomainError(f"P({q}) = {p} must be >= 1")
    one_dim = MissingDigitMeasure(target.system, 1)
    if method == "intervals":
        return measure_interval_union(one_dim, approx_intervals(target.polynomial, q, delta), tol)
    if method not in ("auto", "periodic"):
        raise DomainError(f"unknown method {method!r}")
    return band_measure_bounds(target.system, p, delta, tol)[0]


@dataclass(frozen=True)
class BMeasure:
    value: float
    one_coordinate_bound: float


def measure_B_details(target: ApproxTarget, q: int, delta, tol: float = 1e-12) -> BMeasure:
    d = target.dimension
    a = measure_A(target, q, delta, tol / d)
    return BMeasure(a**d, a)


def measure_B(target: ApproxTarget, q: int, delta, tol: float = 1e-12) -> float:
    """m_d(B(q, delta)) = m(A(q, delta))^d for the product measure."""
    return measure_B_details(target, q, delta, tol).value
