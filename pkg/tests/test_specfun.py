import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floquet_polariton.specfun import (
    assoc_laguerre,
    bessel_j,
    bessel_j_orders,
    hyp2f1_terminating,
    ln_factorial,
)


def series_j(order, x, tol=1e-16):
    """Ascending power series of J_order, summed until terms drop below tol."""
    term = (x / 2) ** order / math.factorial(order)
    total, k = term, 0
    while abs(term) > tol * max(1.0, abs(total)) or k < 3:
        k += 1
        term *= -((x / 2) ** 2) / (k * (k + order))
        total += term
    return total


# frozen high-precision references
BESSEL_REF = [
    (1, 0.9, 0.405949546078805682520118553417),
    (5, 12.5, 0.0347376997622397276819162497052),
    (-3, 7.1, 0.189641134047854818625906026052),
    (30, 45.0, 0.0457993095540409560787177494769),
    (2, -3.3, 0.478031686450545911896922082624),
]
J0_FIRST_ROOT = 2.40482555769577276862163187933


def test_bessel_trivial():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(3, 0.0) == 0.0


def test_bessel_matches_series_oracle():
    assert bessel_j(1, 0.9) == pytest.approx(series_j(1, 0.9), abs=1e-15)


@pytest.mark.parametrize("order,x,ref", BESSEL_REF)
def test_bessel_frozen_values(order, x, ref):
    assert abs(bessel_j(order, x) - ref) < 1e-12


def test_bessel_first_zero_by_bisection():
    lo, hi = 2.0, 3.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if series_j(0, lo) * series_j(0, mid) <= 0:
            hi = mid
        else:
            lo = mid
    assert lo == pytest.approx(J0_FIRST_ROOT, abs=1e-12)
    assert abs(bessel_j(0, lo)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 64), st.floats(-50, 50, allow_nan=False))
def test_bessel_reflection(order, x):
    assert bessel_j(-order, x) == pytest.approx((-1) ** order * bessel_j(order, x), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.floats(0, 50))
def test_bessel_against_mpmath(order, x):
    assert abs(bessel_j(order, x) - float(mpmath.besselj(order, x))) < 1e-12


@pytest.mark.parametrize("x", [0.0, 0.9, 2.3, 4.0, 6.0])
def test_bessel_normalization(x):
    vals = np.array(bessel_j_orders(40, x))
    assert abs(np.sum(vals**2) - 1.0) < 1e-10


@pytest.mark.parametrize("order,x", [(65, 1.0), (0, 50.5), (-70, 2.0)])
def test_bessel_domain(order, x):
    with pytest.raises(ValueError):
        bessel_j(order, x)


def test_laguerre_examples():
    assert assoc_laguerre(0, 0, 3.7) == 1.0
    for x in (-2.0, 0.3, 5.0):
        assert assoc_laguerre(1, 0, x) == pytest.approx(1 - x, abs=1e-15)
    assert assoc_laguerre(2, 0, 1.0) == pytest.approx(-0.5, abs=1e-15)
    assert assoc_laguerre(5, 2, 3.1) == pytest.approx(0.956766583333333644476666653607, abs=1e-13)
    assert assoc_laguerre(12, 0, 7.5) == pytest.approx(5.76703629865274800882711038961, abs=1e-12)


@pytest.mark.parametrize("n,k", [(0, 0), (3, 0), (4, 2), (10, 5), (64, 1)])
def test_laguerre_at_zero_is_binomial(n, k):
    assert assoc_laguerre(n, k, 0.0) == pytest.approx(math.comb(n + k, n), rel=1e-13)


def test_laguerre_domain():
    with pytest.raises(ValueError):
        assoc_laguerre(-1, 0, 1.0)
    with pytest.raises(ValueError):
        assoc_laguerre(2, -1, 1.0)
    with pytest.raises(ValueError):
        assoc_laguerre(65, 0, 1.0)


def test_hyp2f1_examples():
    assert hyp2f1_terminating(0, 5, 0.37) == 1.0
    assert hyp2f1_terminating(0, 0, 9.0) == 1.0
    for z in (-3.0, 0.5, 2.0):
        assert hyp2f1_terminating(1, 1, z) == pytest.approx(1 - z / 2, abs=1e-15)
    assert hyp2f1_terminating(3, 4, 0.6) == pytest.approx(0.255314285714285732252294889934, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 12), st.integers(0, 12), st.floats(-5, 5, allow_nan=False))
def test_hyp2f1_symmetric(m, n, z):
    a, b = hyp2f1_terminating(m, n, z), hyp2f1_terminating(n, m, z)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_ln_factorial():
    assert ln_factorial(0) == 0.0
    assert ln_factorial(1) == 0.0
    assert ln_factorial(5) == pytest.approx(math.log(120), rel=1e-14)
    big = 10**6
    assert ln_factorial(big) == pytest.approx(float(mpmath.loggamma(big + 1)), rel=1e-14)
