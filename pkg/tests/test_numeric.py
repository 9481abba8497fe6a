import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from ammflow.numeric import (ExactSqrtError, QuadExact, exact_sign,
                             exact_sqrt, make_exact, parse_exact,
                             rational_sqrt, solve_quadratic)

NON_SQUARES = [2, 3, 5, 6, 7, 10, 2100]


def test_rational_sqrt():
    assert rational_sqrt(Fraction(4, 9)) == Fraction(2, 3)
    assert rational_sqrt(0) == 0
    assert rational_sqrt(2) is None
    assert rational_sqrt(-4) is None


def test_make_exact_demotes_when_radical_vanishes():
    assert make_exact(3, 0, 2) == 3
    assert isinstance(make_exact(3, 0, 2), Fraction)
    # sqrt(4) collapses into the rational part
    assert make_exact(1, 2, 4) == 5
    assert isinstance(make_exact(1, 2, 2), QuadExact)


def test_field_identities():
    r2 = exact_sqrt(2)
    assert r2 * r2 == 2
    assert (1 + r2) * (1 - r2) == -1
    assert (1 + r2) - r2 == 1
    assert (r2 + r2) / 2 == r2
    assert 2 / r2 == r2
    assert 1 / (1 + r2) == r2 - 1


def test_subtraction_to_zero_is_rational():
    r5 = exact_sqrt(5)
    diff = (3 + r5) - r5 - 3
    assert diff == 0
    assert not isinstance(diff, QuadExact)


def test_sign_near_rational_boundary():
    # -10 + sqrt(99) < 0 < -10 + sqrt(101)
    assert exact_sign(make_exact(-10, 1, 99)) == -1
    assert exact_sign(make_exact(-10, 1, 101)) == 1
    assert exact_sign(make_exact(-10, 1, 100)) == 0
    assert exact_sign(Fraction(0)) == 0
    assert exact_sign(-3) == -1


def test_cross_field_coercion_on_square_ratio():
    # sqrt(8) = 2*sqrt(2) lives in the same field as sqrt(2)
    assert exact_sqrt(8) == 2 * exact_sqrt(2)
    with pytest.raises(TypeError):
        exact_sqrt(2) + exact_sqrt(3)  # genuinely different fields


def test_exact_sqrt_denesting():
    r5 = exact_sqrt(5)
    value = (3 + r5) * (3 + r5)
    assert value == make_exact(14, 6, 5)
    assert exact_sqrt(value) == 3 + r5
    with pytest.raises(ExactSqrtError):
        exact_sqrt(1 + r5)  # not a perfect square in Q(sqrt 5)
    with pytest.raises(ExactSqrtError):
        exact_sqrt(-r5)


def test_solve_quadratic_orders_roots():
    lo, hi = solve_quadratic(1, 10, -500)
    assert lo < hi
    assert lo * lo + 10 * lo - 500 == 0
    assert hi * hi + 10 * hi - 500 == 0
    assert hi == make_exact(-5, Fraction(1, 2), 2100)
    with pytest.raises(ValueError):
        solve_quadratic(1, 0, 1)


def test_solve_quadratic_double_root():
    lo, hi = solve_quadratic(1, -4, 4)
    assert lo == hi == 2


def test_parse_exact_round_trip():
    for value in (17, Fraction(-3, 7), make_exact(-5, Fraction(1, 2), 2100),
                  make_exact(Fraction(1, 3), -2, 7)):
        assert parse_exact(str(value)) == value
    assert parse_exact("2.5") == Fraction(5, 2)


@given(st.integers(-30, 30), st.integers(-30, 30).filter(bool),
       st.sampled_from(NON_SQUARES))
def test_float_projection_and_sign_agree(p, q, d):
    value = make_exact(p, q, d)
    approx = p + q * math.sqrt(d)
    assert math.isclose(float(value), approx, rel_tol=1e-12, abs_tol=1e-9)
    if abs(approx) > 1e-6:
        assert exact_sign(value) == (1 if approx > 0 else -1)


@given(st.integers(-20, 20), st.integers(-20, 20).filter(bool),
       st.integers(-20, 20), st.integers(-20, 20),
       st.sampled_from(NON_SQUARES))
def test_ring_axioms_spot_checks(p1, q1, p2, q2, d):
    x = make_exact(p1, q1, d)
    y = make_exact(p2, q2, d)
    assert x + y == y + x
    assert x * y == y * x
    assert x * (y + 1) == x * y + x
    if exact_sign(y) != 0:
        assert (x / y) * y == x
