"""Scalar special functions used by the first-passage closed forms.

Only real arguments are supported.  Besides the plain functions, scaled
companions (``e**x * E1(x)``, ``exp(-x**2) * erfi(x)``, ``erfcx``) are
provided so callers can combine huge and tiny exponential prefactors
without overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import special as _sp

EULER_GAMMA = 0.57721566490153286061

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
# exp(x) overflows a double just above this
_EXP_MAX = 709.782712893384


class DomainError(ValueError):
    """Argument outside the domain on which a function is defined here."""


@dataclass(frozen=True)
class AccuracySpec:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-300
    max_terms: int = 2000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.abs_tol < 0:
            raise ValueError("abs_tol must be non-negative")


DEFAULT_ACCURACY = AccuracySpec()


def _term_tol(acc: AccuracySpec) -> float:
    # per-term stopping threshold; a few ulps below the requested accuracy
    return max(acc.rel_tol * 1e-4, 2.0 ** -53)


def _e1_series(x: float, acc: AccuracySpec) -> float:
    # E1(x) = -gamma - ln x + sum_{k>=1} (-1)^(k+1) x^k / (k k!)
    eps = _term_tol(acc)
    total = 0.0
    term = 1.0
    for k in range(1, acc.max_terms):
        term *= -x / k
        contrib = -term / k
        total += contrib
        if abs(contrib) <= eps * abs(total) + acc.abs_tol:
            break
    return -EULER_GAMMA - math.log(x) + total


def _e1_scaled_cf(x: float, acc: AccuracySpec) -> float:
    """``exp(x) * E1(x)`` by the modified Lentz continued fraction, x > 1."""
    tiny = 1e-300
    eps = _term_tol(acc)
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, acc.max_terms):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) <= eps:
            return h
    raise ArithmeticError(f"E1 continued fraction did not converge at x={x}")


def exp_integral_e1(x: float, acc: AccuracySpec = DEFAULT_ACCURACY) -> float:
    """Exponential integral ``E1(x) = int_x^inf exp(-t)/t dt`` for x >= 0.

    ``E1(0)`` is ``+inf``; arguments beyond ~745 underflow to 0.
    """
    x = float(x)
    if math.isnan(x) or x < 0:
        raise DomainError(f"E1 requires x >= 0, got {x}")
    if x == 0.0:
        return math.inf
    if math.isinf(x):
        return 0.0
    if x <= 1.0:
        return _e1_series(x, acc)
    if x > 760.0:
        return 0.0
    return math.exp(-x) * _e1_scaled_cf(x, acc)


def exp_integral_e1_scaled(x: float, acc: AccuracySpec = DEFAULT_ACCURACY) -> float:
    """``exp(x) * E1(x)``; finite for every x > 0 and ~ 1/x for large x."""
    x = float(x)
    if math.isnan(x) or x < 0:
        raise DomainError(f"E1 requires x >= 0, got {x}")
    if x == 0.0:
        return math.inf
    if math.isinf(x):
        return 0.0
    if x <= 1.0:
        return math.exp(x) * _e1_series(x, acc)
    return _e1_scaled_cf(x, acc)


def erf(x: float) -> float:
    """Error function, evaluated on |x| and mirrored so erf(-x) == -erf(x)."""
    x = float(x)
    if x < 0:
        return -math.erf(-x)
    return math.erf(x)


def erfc(x: float) -> float:
    return math.erfc(float(x))


def erfcx(x: float) -> float:
    """Scaled complementary error function ``exp(x**2) * erfc(x)``."""
    return float(_sp.erfcx(float(x)))


def dawson(x: float) -> float:
    """Dawson integral ``D(x) = exp(-x**2) int_0^x exp(t**2) dt``."""
    return float(_sp.dawsn(float(x)))


def erfi_scaled(x: float) -> float:
    """``exp(-x**2) * erfi(x) = 2/sqrt(pi) * D(x)``; bounded for all x >= 0."""
    x = float(x)
    if math.isnan(x) or x < 0:
        raise DomainError(f"erfi requires x >= 0, got {x}")
    if math.isinf(x):
        return 0.0
    return _TWO_OVER_SQRT_PI * dawson(x)


def erfi(x: float) -> float:
    """Imaginary error function for x >= 0.

    Evaluated as ``2/sqrt(pi) * exp(x**2) * D(x)``.  Returns ``+inf`` once
    ``exp(x**2)`` would overflow (x above ~26.6).
    """
    x = float(x)
    if math.isnan(x) or x < 0:
        raise DomainError(f"erfi requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    x2 = x * x
    if x2 > _EXP_MAX:
        return math.inf
    return _TWO_OVER_SQRT_PI * math.exp(x2) * dawson(x)
