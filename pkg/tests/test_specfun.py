import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emitter_fpt import specfun as sf

mpmath.mp.dps = 40

E1_GRID = [1e-12, 1e-6, 1e-3, 0.1, 0.5, 0.999, 1.0, 1.001, 2.0, 5.0, 10.0, 30.0, 100.0, 500.0, 700.0]
ERF_GRID = [-5.0, -1.0, -1e-3, 1e-8, 0.1, 0.5, 1.0, 2.0, 3.0, 5.5]
ERFI_GRID = [1e-8, 1e-3, 0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 26.0]


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.mark.parametrize("x", E1_GRID)
def test_e1_matches_mpmath(x):
    assert rel(sf.exp_integral_e1(x), float(mpmath.e1(x))) < 1e-12


@pytest.mark.parametrize("x", E1_GRID)
def test_e1_scaled_matches_mpmath(x):
    exact = float(mpmath.exp(x) * mpmath.e1(x))
    assert rel(sf.exp_integral_e1_scaled(x), exact) < 1e-12


def test_e1_reference_points():
    assert sf.exp_integral_e1(1.0) == pytest.approx(0.219383934395520, rel=1e-14)
    assert sf.exp_integral_e1(0.0) == math.inf
    assert sf.exp_integral_e1(700.0) <= 1e-300
    assert sf.exp_integral_e1(800.0) == 0.0
    assert sf.exp_integral_e1(math.inf) == 0.0


def test_e1_series_oracle_at_one():
    # independent alternating-series oracle in extended precision
    x = mpmath.mpf(1)
    s = -mpmath.euler - mpmath.log(x) + mpmath.nsum(
        lambda k: (-1) ** (k + 1) * x ** k / (k * mpmath.factorial(k)), [1, mpmath.inf])
    assert rel(sf.exp_integral_e1(1.0), float(s)) < 1e-14


def test_e1_rejects_negative():
    with pytest.raises(sf.DomainError):
        sf.exp_integral_e1(-0.1)
    with pytest.raises(sf.DomainError):
        sf.exp_integral_e1_scaled(-1.0)


def test_e1_monotone_decreasing():
    xs = np.geomspace(1e-8, 700, 400)
    vals = [sf.exp_integral_e1(x) for x in xs]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_e1_derivative_identity():
    rng = np.random.default_rng(11)
    for x in rng.uniform(0.0, 50.0, 1000):
        x = max(x, 1e-6)
        h = 1e-4 * min(x, 1.0)
        fd = (sf.exp_integral_e1(x + h) - sf.exp_integral_e1(x - h)) / (2 * h)
        exact = -math.exp(-x) / x
        assert abs(fd - exact) <= 1e-8 * abs(exact)


@pytest.mark.parametrize("x", ERF_GRID)
def test_erf_matches_mpmath(x):
    assert rel(sf.erf(x), float(mpmath.erf(x))) < 1e-14


def test_erf_reference_points():
    assert sf.erf(0.0) == 0.0
    assert sf.erf(20.0) == pytest.approx(1.0, rel=1e-12)
    assert sf.erf(1.0) == pytest.approx(0.842700792949715, rel=1e-14)
    x = mpmath.mpf(1)
    series = 2 / mpmath.sqrt(mpmath.pi) * mpmath.nsum(
        lambda k: (-1) ** k * x ** (2 * k + 1) / (mpmath.factorial(k) * (2 * k + 1)), [0, mpmath.inf])
    assert rel(sf.erf(1.0), float(series)) < 1e-14


@given(st.floats(min_value=-30, max_value=30, allow_nan=False))
def test_erf_odd_and_bounded(x):
    assert sf.erf(x) + sf.erf(-x) == 0.0
    assert abs(sf.erf(x)) <= 1.0


@pytest.mark.parametrize("x", ERF_GRID)
def test_erfc_and_erfcx(x):
    assert rel(sf.erfc(x), float(mpmath.erfc(x))) < 1e-13
    assert rel(sf.erfcx(x), float(mpmath.exp(x * x) * mpmath.erfc(x))) < 1e-13


@pytest.mark.parametrize("x", ERFI_GRID)
def test_erfi_matches_mpmath(x):
    assert rel(sf.erfi(x), float(mpmath.erfi(x))) < 1e-12
    assert rel(sf.erfi_scaled(x), float(mpmath.exp(-x * x) * mpmath.erfi(x))) < 1e-12
    assert rel(sf.dawson(x), float(mpmath.sqrt(mpmath.pi) / 2 * mpmath.exp(-x * x) * mpmath.erfi(x))) < 1e-12


def test_erfi_reference_points():
    assert sf.erfi(0.0) == 0.0
    assert sf.erfi(1.0) == pytest.approx(1.650425758797543, rel=1e-14)
    # Maclaurin-series oracle; this is the value at x = 3
    x = mpmath.mpf(3)
    series = 2 / mpmath.sqrt(mpmath.pi) * mpmath.nsum(
        lambda k: x ** (2 * k + 1) / (mpmath.factorial(k) * (2 * k + 1)), [0, mpmath.inf])
    assert rel(sf.erfi(3.0), float(series)) < 1e-12
    assert sf.erfi(3.0) == pytest.approx(1629.9946226015657, rel=1e-13)


def test_erfi_overflow_and_domain():
    assert sf.erfi(27.0) == math.inf
    assert sf.erfi_scaled(1e6) > 0.0
    assert sf.erfi_scaled(math.inf) == 0.0
    with pytest.raises(sf.DomainError):
        sf.erfi(-1.0)
    with pytest.raises(sf.DomainError):
        sf.erfi_scaled(-1.0)


def test_erfi_strictly_increasing():
    xs = np.linspace(0.0, 26.0, 2000)
    vals = [sf.erfi(x) for x in xs]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-0.5, max_value=0.5, allow_nan=False))
def test_small_argument_series(x):
    # erf and erfi share the Maclaurin series up to alternating signs
    terms = [x ** (2 * k + 1) / (math.factorial(k) * (2 * k + 1)) for k in range(30)]
    c = 2.0 / math.sqrt(math.pi)
    erf_series = c * math.fsum((-1) ** k * t for k, t in enumerate(terms))
    assert sf.erf(x) == pytest.approx(erf_series, rel=1e-12, abs=1e-300)
    if x >= 0:
        assert sf.erfi(x) == pytest.approx(c * math.fsum(terms), rel=1e-12, abs=1e-300)


def test_pure_and_deterministic():
    xs = [0.3, 1.7, 12.0]
    for f in (sf.exp_integral_e1, sf.exp_integral_e1_scaled, sf.erf, sf.erfi):
        assert [f(x) for x in xs] == [f(x) for x in xs]


def test_accuracy_spec_validation():
    with pytest.raises(ValueError):
        sf.AccuracySpec(rel_tol=0.0)
    with pytest.raises(ValueError):
        sf.AccuracySpec(abs_tol=-1.0)
    loose = sf.AccuracySpec(rel_tol=1e-6)
    assert sf.exp_integral_e1(0.5, loose) == pytest.approx(float(mpmath.e1(0.5)), rel=1e-6)
