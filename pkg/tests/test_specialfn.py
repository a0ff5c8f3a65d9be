from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pangenome.errors import NonConvergence, RangeError
from pangenome.specialfn import falling_factorial, hyp1f1_series, integrate_adaptive, rising_factorial


@pytest.mark.parametrize("a, b, expected", [(2, 3, 24), (1.5, 0, 1), (1 + 1, 4 - 1, 24), (1, 4, 24)])
def test_rising_factorial_examples(a, b, expected):
    assert rising_factorial(a, b) == expected


@pytest.mark.parametrize("a, b, expected", [(5, 2, 20), (3, 3, 6), (2, 2, 2)])
def test_falling_factorial_examples(a, b, expected):
    assert falling_factorial(a, b) == expected


def test_factorials_reject_negative_order():
    with pytest.raises(RangeError):
        rising_factorial(1.0, -1)
    with pytest.raises(RangeError):
        falling_factorial(1.0, 2.5)


def test_rising_factorial_overflow_is_reported():
    with pytest.raises(OverflowError):
        rising_factorial(1e300, 3)


@given(
    a=st.floats(0.1, 20),
    b=st.integers(0, 15),
    c=st.integers(0, 15),
)
def test_rising_factorial_splits(a, b, c):
    lhs = rising_factorial(a, b) * rising_factorial(a + b, c)
    assert lhs == pytest.approx(rising_factorial(a, b + c), rel=1e-12)


def test_hyp1f1_closed_form():
    assert hyp1f1_series(1, 2, 1).value == pytest.approx(math.e - 1, abs=1e-12)


def test_hyp1f1_at_zero_is_one():
    res = hyp1f1_series(3, 5 + 1.5, 0.0)
    assert res.value == 1.0
    assert res.terms_used == 1


def test_hyp1f1_matches_brute_force_sum():
    terms = [1.0]
    for m in range(199):
        terms.append(terms[-1] * (2 + m) * 2.0 / ((3 + m) * (m + 1)))
    assert hyp1f1_series(2, 3, 2).value == pytest.approx(math.fsum(terms), rel=1e-12)


@given(a=st.floats(0.1, 30), z=st.floats(0, 30))
def test_hyp1f1_equal_parameters_gives_exponential(a, z):
    assert hyp1f1_series(a, a, z).value == pytest.approx(math.exp(z), rel=1e-11)


def test_hyp1f1_reports_truncation_bound():
    res = hyp1f1_series(4, 12, 3.0, tol=1e-12)
    assert 0 <= res.truncation_bound <= 1e-12 * res.value


def test_hyp1f1_cap_raises():
    with pytest.raises(NonConvergence):
        hyp1f1_series(1, 1.5, 50.0, max_terms=5)


@pytest.mark.parametrize("args", [(1, 0, 1), (1, -1, 1), (1, 2, -1)])
def test_hyp1f1_rejects_bad_arguments(args):
    with pytest.raises(RangeError):
        hyp1f1_series(*args)


def test_integrate_constant():
    assert integrate_adaptive(lambda x: 1.0) == pytest.approx(1.0, abs=1e-10)


def test_integrate_endpoint_singularity():
    val = integrate_adaptive(lambda x: x**-0.5, left_exponent=-0.5)
    assert val == pytest.approx(2.0, abs=1e-10)


def test_integrate_by_parts_value():
    # antiderivative of e^x (x - x^2) is e^x (-x^2 + 3x - 3)
    val = integrate_adaptive(lambda x: math.exp(x) * x * (1 - x))
    assert val == pytest.approx(3 - math.e, abs=1e-10)
    doubled = integrate_adaptive(lambda x: 2 * math.exp(x) * x * (1 - x))
    assert doubled == pytest.approx(6 - 2 * math.e, abs=1e-10)


def test_integrate_right_singularity_with_exact_complement():
    # (1-x)^(-1/2) integrates to 2; the complement avoids cancellation near 1
    val = integrate_adaptive(lambda x, xc: xc**-0.5, right_exponent=-0.5, with_complement=True)
    assert val == pytest.approx(2.0, abs=1e-10)


@settings(max_examples=30)
@given(coefs=st.lists(st.floats(-5, 5), min_size=1, max_size=11))
def test_integrate_polynomials_exactly(coefs):
    poly = np.polynomial.Polynomial(coefs)
    exact = poly.integ()(1.0) - poly.integ()(0.0)
    assert integrate_adaptive(lambda x: float(poly(x))) == pytest.approx(exact, abs=1e-10)


def test_integrate_divergent_raises():
    with pytest.raises(NonConvergence):
        integrate_adaptive(lambda x: 1.0 / x, limit=20)
