"""Exact arithmetic support for the two numeric modes.

Rational mode works over the field Q(sqrt(d)): solving the cross-pool
consistency condition introduces a single square root, and every later
quantity (swap outputs, repayments, balance deltas) stays inside that
quadratic extension.  ``QuadExact`` implements that field exactly so
equality checks like "pool reserves restored" are true equalities, not
tolerance comparisons.

Integer mode uses plain Python ints (token smallest units, floor division)
and never touches this class.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Union

Rational = Union[int, Fraction]
ExactNumber = Union[int, Fraction, "QuadExact"]


class ExactSqrtError(ArithmeticError):
    """The requested square root has no representation in the current field."""


def rational_sqrt(value: Rational) -> Fraction | None:
    """Exact square root of a non-negative rational, or None if irrational."""
    f = Fraction(value)
    if f < 0:
        return None
    rn = math.isqrt(f.numerator)
    rd = math.isqrt(f.denominator)
    if rn * rn == f.numerator and rd * rd == f.denominator:
        return Fraction(rn, rd)
    return None


def _as_parts(value) -> tuple[Fraction, Fraction, Fraction]:
    """Coerce a number to (p, q, d) parts meaning p + q*sqrt(d)."""
    if isinstance(value, QuadExact):
        return value.p, value.q, value.d
    if isinstance(value, (int, Fraction)):
        return Fraction(value), Fraction(0), Fraction(0)
    raise TypeError(f"cannot coerce {type(value).__name__} to exact number")


def make_exact(p: Rational, q: Rational = 0, d: Rational = 0) -> ExactNumber:
    """Build p + q*sqrt(d), demoting to Fraction when the radical vanishes."""
    p = Fraction(p)
    q = Fraction(q)
    d = Fraction(d)
    if q == 0 or d == 0:
        return p
    if d < 0:
        raise ValueError("negative radicand")
    root = rational_sqrt(d)
    if root is not None:
        return p + q * root
    return QuadExact(p, q, d)


class QuadExact:
    """Exact element p + q*sqrt(d) of a real quadratic field (q != 0)."""

    __slots__ = ("p", "q", "d")

    def __init__(self, p: Fraction, q: Fraction, d: Fraction):
        self.p = p
        self.q = q
        self.d = d

    # -- coercion -------------------------------------------------------

    def _match(self, other) -> tuple[Fraction, Fraction] | None:
        """Express other in this element's field; None if impossible."""
        p, q, d = _as_parts(other)
        if q == 0 or d == self.d:
            return p, q
        # sqrt(d) = r * sqrt(self.d) when d/self.d is a perfect square
        ratio = rational_sqrt(d / self.d)
        if ratio is not None:
            return p, q * ratio
        return None

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        m = self._match(other)
        if m is None:
            return NotImplemented
        return make_exact(self.p + m[0], self.q + m[1], self.d)

    __radd__ = __add__

    def __neg__(self):
        return QuadExact(-self.p, -self.q, self.d)

    def __sub__(self, other):
        m = self._match(other)
        if m is None:
            return NotImplemented
        return make_exact(self.p - m[0], self.q - m[1], self.d)

    def __rsub__(self, other):
        m = self._match(other)
        if m is None:
            return NotImplemented
        return make_exact(m[0] - self.p, m[1] - self.q, self.d)

    def __mul__(self, other):
        m = self._match(other)
        if m is None:
            return NotImplemented
        p2, q2 = m
        return make_exact(self.p * p2 + self.q * q2 * self.d,
                          self.p * q2 + self.q * p2, self.d)

    __rmul__ = __mul__

    def _inverse(self):
        norm = self.p * self.p - self.q * self.q * self.d
        if norm == 0:
            raise ZeroDivisionError("division by zero field element")
        return make_exact(self.p / norm, -self.q / norm, self.d)

    def __truediv__(self, other):
        m = self._match(other)
        if m is None:
            return NotImplemented
        p2, q2 = m
        if q2 == 0:
            if p2 == 0:
                raise ZeroDivisionError("division by zero")
            return make_exact(self.p / p2, self.q / p2, self.d)
        return self * QuadExact(p2, q2, self.d)._inverse()

    def __rtruediv__(self, other):
        m = self._match(other)
        if m is None:
            return NotImplemented
        return make_exact(m[0], m[1], self.d) * self._inverse()

    # -- ordering -------------------------------------------------------

    def sign(self) -> int:
        """Exact sign of p + q*sqrt(d)."""
        p, q, d = self.p, self.q, self.d
        if q == 0:
            return 0 if p == 0 else (1 if p > 0 else -1)
        if p == 0:
            return 1 if q > 0 else -1
        if p > 0 and q > 0:
            return 1
        if p < 0 and q < 0:
            return -1
        # opposite signs: compare p^2 vs q^2 * d
        lhs, rhs = p * p, q * q * d
        if p > 0:  # q < 0: positive iff p^2 > q^2 d
            return 1 if lhs > rhs else (-1 if lhs < rhs else 0)
        return -1 if lhs > rhs else (1 if lhs < rhs else 0)

    def _cmp(self, other) -> int | None:
        m = self._match(other)
        if m is None:
            return None
        return _sign_of(make_exact(self.p - m[0], self.q - m[1], self.d))

    def __eq__(self, other):
        try:
            c = self._cmp(other)
        except TypeError:
            return NotImplemented
        return c == 0 if c is not None else NotImplemented

    def __lt__(self, other):
        c = self._cmp(other)
        if c is None:
            return NotImplemented
        return c < 0

    def __le__(self, other):
        c = self._cmp(other)
        if c is None:
            return NotImplemented
        return c <= 0

    def __gt__(self, other):
        c = self._cmp(other)
        if c is None:
            return NotImplemented
        return c > 0

    def __ge__(self, other):
        c = self._cmp(other)
        if c is None:
            return NotImplemented
        return c >= 0

    def __hash__(self):
        return hash((self.p, self.q, self.d))

    def __bool__(self):
        return True  # q != 0 by construction, so never zero

    def __abs__(self):
        return self if self.sign() >= 0 else -self

    # -- misc -----------------------------------------------------------

    def __float__(self):
        return float(self.p) + float(self.q) * math.sqrt(float(self.d))

    def __repr__(self):
        return f"QuadExact({self.p!r}, {self.q!r}, {self.d!r})"

    def __str__(self):
        return f"{self.p}+{self.q}*sqrt({self.d})"


def _sign_of(value: ExactNumber) -> int:
    if isinstance(value, QuadExact):
        return value.sign()
    return 0 if value == 0 else (1 if value > 0 else -1)


def exact_sign(value: ExactNumber) -> int:
    """Sign of any exact number (int, Fraction or QuadExact)."""
    return _sign_of(value)


def exact_sqrt(value: ExactNumber) -> ExactNumber:
    """Exact square root.

    Rationals yield either a rational root or a fresh QuadExact radical.
    QuadExact arguments are denested when they are perfect squares inside
    their own field (the case that arises from double roots and optimum
    conditions); otherwise ExactSqrtError is raised.
    """
    if isinstance(value, (int, Fraction)):
        f = Fraction(value)
        if f < 0:
            raise ExactSqrtError("negative radicand")
        root = rational_sqrt(f)
        if root is not None:
            return root
        return QuadExact(Fraction(0), Fraction(1), f)
    if isinstance(value, QuadExact):
        if value.sign() < 0:
            raise ExactSqrtError("negative radicand")
        # find s + t*sqrt(d) with (s + t*sqrt(d))^2 = p + q*sqrt(d)
        p, q, d = value.p, value.q, value.d
        disc = rational_sqrt(p * p - q * q * d)
        if disc is None:
            raise ExactSqrtError("radical does not denest in this field")
        for t_sq in ((p + disc) / (2 * d), (p - disc) / (2 * d)):
            t = rational_sqrt(t_sq)
            if t is None or t == 0:
                continue
            s = q / (2 * t)
            cand = QuadExact(s, t, d)
            if cand.sign() < 0:
                cand = -cand
            if cand * cand == value:
                return cand
        raise ExactSqrtError("radical does not denest in this field")
    raise TypeError(f"unsupported type {type(value).__name__}")


def solve_quadratic(a: ExactNumber, b: ExactNumber,
                    c: ExactNumber) -> tuple[ExactNumber, ExactNumber]:
    """Exact roots of a*x^2 + b*x + c = 0, smaller root first.

    Raises ExactSqrtError when the discriminant's root leaves the field
    and ValueError when the discriminant is negative.
    """
    disc = b * b - 4 * a * c
    s = exact_sign(disc)
    if s < 0:
        raise ValueError("negative discriminant")
    root = exact_sqrt(disc) if s > 0 else 0
    r1 = (-b - root) / (2 * a)
    r2 = (-b + root) / (2 * a)
    if exact_sign(a) < 0:
        r1, r2 = r2, r1
    return r1, r2


_QUAD_RE = re.compile(
    r"^(?P<p>-?\d+(?:/\d+)?)\+(?P<q>-?\d+(?:/\d+)?)\*sqrt\((?P<d>-?\d+(?:/\d+)?)\)$")


def parse_exact(text: str) -> ExactNumber:
    """Inverse of str() for int, Fraction and QuadExact amounts."""
    text = text.strip()
    m = _QUAD_RE.match(text)
    if m:
        return make_exact(Fraction(m.group("p")), Fraction(m.group("q")),
                          Fraction(m.group("d")))
    return Fraction(text) if "/" in text or "." in text else int(text)
