"""Hitting probabilities and mean passage times of the population diffusion.

For heterodyne and optimal homodyne detection the excited-state population
obeys ``dC = A(C) dt + B(C) dW`` with ``A = -gamma C`` and
``B^2 = k^2 gamma C^3 (1 - C)`` (``k^2 = 2`` and ``4``).  Everything here is
built from three functions of that diffusion:

* the scale density ``Q(z) = exp(-2 int^z A/B^2)`` and its integral
  ``S(u, v) = int_u^v Q``,
* the speed integral ``K(z) = int^z -2 / (Q B^2)``, whose derivative
  ``-m(z)`` is minus the speed density,
* ``R(u, v) = int_u^v Q K``.

Closed forms carry exponential factors ``exp(+-c/z)`` (``c = 1`` for
heterodyne, ``1/2`` for homodyne) that overflow near z = 0, so internally
``S(0, z)``, ``K(z)`` and ``m(z)`` are stored as a scaled part times that
factor and combined without ever forming the factors separately.

Divergent quantities are returned as ``math.inf``.
"""

from __future__ import annotations

import enum
import math
import sys
import warnings
from dataclasses import dataclass

from scipy import integrate

from . import specfun
from .specfun import DomainError

_SQRT_PI_OVER_2 = math.sqrt(math.pi / 2.0)
S_HOMODYNE_TOTAL = math.sqrt(math.pi / (2.0 * math.e))


class QuadratureError(ArithmeticError):
    pass


class Scheme1D(str, enum.Enum):
    HETERODYNE = "heterodyne"
    OPTIMAL_HOMODYNE = "optimal-homodyne"

    @property
    def k_squared(self) -> float:
        return 2.0 if self is Scheme1D.HETERODYNE else 4.0

    @property
    def exp_coeff(self) -> float:
        return 1.0 if self is Scheme1D.HETERODYNE else 0.5


def _scheme(scheme) -> Scheme1D:
    try:
        return Scheme1D(getattr(scheme, "value", scheme))
    except ValueError:
        raise ValueError(
            f"closed-form analysis only covers heterodyne and optimal homodyne, not {scheme!r}"
        ) from None


@dataclass(frozen=True)
class Interval01:
    a: float
    b: float

    def __post_init__(self):
        if not 0.0 <= self.a < self.b <= 1.0:
            raise DomainError(f"need 0 <= a < b <= 1, got ({self.a}, {self.b})")


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-9
    max_subdivisions: int = 200

    def __post_init__(self):
        # quadpack refuses relative tolerances below 50 machine epsilons
        if not self.rel_tol >= 50 * sys.float_info.epsilon:
            raise ValueError(f"rel_tol must be at least {50 * sys.float_info.epsilon:.3g}")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


DEFAULT_QUAD = QuadratureSpec()


def _interval(itv) -> Interval01:
    return itv if isinstance(itv, Interval01) else Interval01(*itv)


def _quad(f, lo, hi, quad: QuadratureSpec, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(
            f, lo, hi, epsabs=0.0, epsrel=quad.rel_tol, limit=quad.max_subdivisions,
            points=points, full_output=True,
        )[:3]
    if err > max(10 * quad.rel_tol * abs(val), 1e-300) and err > 1e-14:
        raise QuadratureError(
            f"quadrature on [{lo}, {hi}] did not reach rel_tol={quad.rel_tol:g} "
            f"(estimate {val:.6g} +- {err:.2g})"
        )
    return val


# ---------------------------------------------------------------------------
# scale function


def q_weight(z: float, scheme) -> float:
    """Scale density ``Q(z)`` on 0 < z < 1."""
    sch = _scheme(scheme)
    if not 0.0 < z < 1.0:
        raise DomainError(f"Q(z) needs 0 < z < 1, got {z}")
    if sch is Scheme1D.HETERODYNE:
        return math.exp(-1.0 / z) * z / (1.0 - z)
    return math.exp(-0.5 / z) * math.sqrt(z / (1.0 - z))


def _s0_scaled(z: float, sch: Scheme1D) -> float:
    """``exp(c/z) * S(0, z)`` for 0 < z < 1."""
    if sch is Scheme1D.HETERODYNE:
        # S(0,z) = e^{-1/z} [ e^x E1(x) - z ],  x = (1-z)/z
        return specfun.exp_integral_e1_scaled((1.0 - z) / z) - z
    # S(0,z) = e^{-1/(2z)} [ sqrt(pi/2) erfcx(w) - sqrt(z(1-z)) ],  w = sqrt((1-z)/(2z))
    w = math.sqrt((1.0 - z) / (2.0 * z))
    return _SQRT_PI_OVER_2 * specfun.erfcx(w) - math.sqrt(z * (1.0 - z))


def _s0(z: float, sch: Scheme1D) -> float:
    """``S(0, z)`` for 0 <= z <= 1."""
    if z <= 0.0:
        return 0.0
    if z >= 1.0:
        return math.inf if sch is Scheme1D.HETERODYNE else S_HOMODYNE_TOTAL
    c = sch.exp_coeff / z
    if c > 745.0:
        return 0.0
    return math.exp(-c) * _s0_scaled(z, sch)


def scale_S(u: float, v: float, scheme) -> float:
    """``S(u, v) = int_u^v Q`` for 0 <= u <= v <= 1.

    Heterodyne ``S(u, 1)`` is infinite for u < 1; homodyne ``S`` is finite on
    the closed interval with ``S(0, 1) = sqrt(pi / (2e))``.
    """
    sch = _scheme(scheme)
    if not 0.0 <= u <= v <= 1.0:
        raise DomainError(f"need 0 <= u <= v <= 1, got ({u}, {v})")
    if u == v:
        return 0.0
    hi = _s0(v, sch)
    if math.isinf(hi):
        return math.inf
    return hi - _s0(u, sch)


def _scale_ratio(u: float, y: float, v: float, sch: Scheme1D) -> float:
    """``S(u, y) / S(u, v)`` evaluated in scaled form (no underflow near 0)."""
    if y <= u:
        return 0.0
    if y >= v:
        return 1.0
    if v >= 1.0 and sch is Scheme1D.HETERODYNE:
        return 0.0
    c = sch.exp_coeff
    ref = c / v

    def rel(z):
        # exp(c/v) * S(0, z)
        if z <= 0.0:
            return 0.0
        if z >= 1.0:
            return math.exp(ref) * S_HOMODYNE_TOTAL
        return math.exp(ref - c / z) * _s0_scaled(z, sch)

    top = rel(y) - rel(u)
    bottom = rel(v) - rel(u)
    return min(max(top / bottom, 0.0), 1.0)


def hit_prob_b_before_a(y: float, itv, scheme) -> float:
    """Probability that ``C`` started at ``y`` reaches ``b`` before ``a``.

    ``S(a, y) / S(a, b)``; zero at ``y = a``, one at ``y = b``.
    """
    itv = _interval(itv)
    sch = _scheme(scheme)
    if not itv.a <= y <= itv.b:
        raise DomainError(f"y={y} outside [{itv.a}, {itv.b}]")
    if y == itv.b:
        return 1.0
    return _scale_ratio(itv.a, y, itv.b, sch)


def excitation_prob(u: float, y: float, scheme) -> float:
    """Probability that ``C`` started at ``y`` ever reaches level ``u``.

    ``S(0, y) / S(0, u)`` for ``y <= u`` and 1 for ``u <= y``.  At ``u = 1``
    this is zero for heterodyne and ``S(0, y) / sqrt(pi/(2e)) > 0`` for
    optimal homodyne.
    """
    sch = _scheme(scheme)
    if not (0.0 < u <= 1.0 and 0.0 < y <= 1.0):
        raise DomainError(f"need u, y in (0, 1], got u={u}, y={y}")
    if u <= y:
        return 1.0
    return _scale_ratio(0.0, y, u, sch)


def excitation_prob_asymptotic_het(u: float, y: float) -> float:
    """Leading behaviour of the heterodyne excitation probability as u -> 1.

    ``-S(0, y) / (ln(1 - u) / e)``, valid for u close to 1.
    """
    if not 0.9 < u < 1.0:
        raise DomainError(f"asymptotic form is only offered for 0.9 < u < 1, got {u}")
    if not 0.0 < y <= 1.0:
        raise DomainError(f"need y in (0, 1], got {y}")
    return -_s0(y, Scheme1D.HETERODYNE) / (math.log1p(-u) / math.e)


# ---------------------------------------------------------------------------
# speed function


def _k_scaled(z: float, sch: Scheme1D, gamma: float) -> float:
    """``exp(-c/z) * K(z)`` for 0 < z <= 1."""
    if sch is Scheme1D.HETERODYNE:
        return (2.0 - 2.0 / z + 1.0 / (z * z)) / gamma
    w = math.sqrt((1.0 - z) / (2.0 * z))
    # erfi(w) = 2/sqrt(pi) e^{w^2} D(w) and e^{w^2} = e^{1/(2z)} e^{-1/2}
    return (-math.sqrt((1.0 - z) / z ** 3) * (2.0 * z - 1.0)
            + 2.0 * math.sqrt(2.0) * specfun.dawson(w)) / gamma


def speed_K(z: float, scheme, gamma: float = 1.0) -> float:
    """Speed integral ``K(z)``; finite at ``z = 1`` (``e/gamma`` heterodyne, 0 homodyne)."""
    sch = _scheme(scheme)
    if not 0.0 < z <= 1.0:
        raise DomainError(f"K(z) needs 0 < z <= 1, got {z}")
    c = sch.exp_coeff / z
    ks = _k_scaled(z, sch, gamma)
    if c > 709.0:
        return math.copysign(math.inf, ks) if ks != 0 else 0.0
    return math.exp(c) * ks


def _m_scaled(z: float, sch: Scheme1D, gamma: float) -> float:
    """``exp(-c/z) * m(z)`` with speed density ``m = 2 / (Q B^2) = -dK/dz``."""
    if sch is Scheme1D.HETERODYNE:
        return 1.0 / (gamma * z ** 4)
    return 1.0 / (2.0 * gamma * z ** 3.5 * math.sqrt(1.0 - z))


def speed_density(z: float, scheme, gamma: float = 1.0) -> float:
    sch = _scheme(scheme)
    if not 0.0 < z < 1.0:
        raise DomainError(f"m(z) needs 0 < z < 1, got {z}")
    c = sch.exp_coeff / z
    if c > 709.0:
        return math.inf
    return math.exp(c) * _m_scaled(z, sch, gamma)


# ---------------------------------------------------------------------------
# R = int Q K


def _r_closed(z: float, sch: Scheme1D, gamma: float) -> float:
    if sch is Scheme1D.HETERODYNE:
        return (math.log(z / (1.0 - z)) - 2.0 * z) / gamma
    return (math.log(z) - 2.0 * z) / gamma


def homodyne_r_integrand(z: float, gamma: float = 1.0) -> float:
    """Bounded part of ``Q K`` for homodyne detection.

    ``sqrt(2 pi e)/gamma * exp(-1/(2z)) sqrt(z/(1-z)) erfi(sqrt((1-z)/(2z)))``,
    rewritten as ``2 sqrt(2) sqrt(z/(1-z)) D(sqrt((1-z)/(2z))) / gamma``.  Its
    continuous extension is 0 at z = 0 and 2/gamma at z = 1.
    """
    if z <= 0.0:
        return 0.0
    if z >= 1.0:
        return 2.0 / gamma
    w = math.sqrt((1.0 - z) / (2.0 * z))
    return 2.0 * math.sqrt(2.0) * math.sqrt(z / (1.0 - z)) * specfun.dawson(w) / gamma


def r_measure(u: float, v: float, scheme, quad: QuadratureSpec = DEFAULT_QUAD,
              gamma: float = 1.0) -> float:
    """``R(u, v) = int_u^v Q K`` for 0 <= u <= v <= 1.

    ``R(0, v)`` is infinite for both schemes; ``R(u, 1)`` is infinite for
    heterodyne and finite for homodyne.  The homodyne part without a closed
    form is integrated adaptively.
    """
    sch = _scheme(scheme)
    if not 0.0 <= u <= v <= 1.0:
        raise DomainError(f"need 0 <= u <= v <= 1, got ({u}, {v})")
    if u == v:
        return 0.0
    if u == 0.0:
        return math.inf
    if sch is Scheme1D.HETERODYNE:
        if v == 1.0:
            return math.inf
        return _r_closed(v, sch, gamma) - _r_closed(u, sch, gamma)
    closed = _r_closed(v, sch, gamma) - _r_closed(u, sch, gamma)
    return closed + _quad(lambda z: homodyne_r_integrand(z, gamma), u, v, quad)


# ---------------------------------------------------------------------------
# mean times


def mean_exit_time(y: float, itv, scheme, quad: QuadratureSpec = DEFAULT_QUAD,
                   gamma: float = 1.0) -> float:
    """Mean time for ``C`` started at ``y`` to leave ``]a, b[``.

    ``[S(y, b) R(a, y) - S(a, y) R(y, b)] / S(a, b)`` for 0 < a <= y <= b < 1.
    """
    itv = _interval(itv)
    sch = _scheme(scheme)
    a, b = itv.a, itv.b
    if a <= 0.0 or b >= 1.0:
        raise DomainError("mean_exit_time needs 0 < a < b < 1")
    if not a <= y <= b:
        raise DomainError(f"y={y} outside [{a}, {b}]")
    if y == a or y == b:
        return 0.0
    p = _scale_ratio(a, y, b, sch)  # S(a,y)/S(a,b)
    out = (1.0 - p) * r_measure(a, y, sch, quad, gamma) - p * r_measure(y, b, sch, quad, gamma)
    return max(out, 0.0)


def mean_excitation_time(y: float, scheme, gamma: float = 1.0) -> float:
    """Mean total time spent above the starting population ``y``.

    ``S(0, y) (K(y) - K(1))``; zero at both ends of [0, 1].
    """
    sch = _scheme(scheme)
    if not 0.0 <= y <= 1.0:
        raise DomainError(f"need y in [0, 1], got {y}")
    if y == 0.0 or y == 1.0:
        return 0.0
    c = sch.exp_coeff / y
    s_scaled = _s0_scaled(y, sch)
    k1 = speed_K(1.0, sch, gamma)
    term_k1 = 0.0 if c > 745.0 else math.exp(-c) * s_scaled * k1
    return max(s_scaled * _k_scaled(y, sch, gamma) - term_k1, 0.0)


def mean_first_passage_below(a: float, y: float, scheme, quad: QuadratureSpec = DEFAULT_QUAD,
                             gamma: float = 1.0) -> float:
    """Mean first time ``C`` started at ``y`` falls to the level ``a <= y``.

    ``R(a, y) - S(a, y) K(1)`` for 0 < a <= y <= 1.  The level ``a = 0`` is
    never reached (mean time infinite) and is rejected.
    """
    sch = _scheme(scheme)
    if a == 0.0:
        raise DomainError("a = 0 is unattainable; the mean passage time is infinite")
    if not 0.0 < a <= y <= 1.0:
        raise DomainError(f"need 0 < a <= y <= 1, got a={a}, y={y}")
    if y == a:
        return 0.0
    k1 = speed_K(1.0, sch, gamma)
    if sch is Scheme1D.HETERODYNE and y == 1.0:
        # R and S K(1) both diverge logarithmically; integrate Q (K - K(1)) instead
        def f(z):
            if z >= 1.0:
                return 0.0
            return q_weight(z, sch) * (speed_K(z, sch, gamma) - k1)
        return _quad(f, a, 1.0, quad)
    return max(r_measure(a, y, sch, quad, gamma) - scale_S(a, y, sch) * k1, 0.0)


def mean_occupation_time(y: float, ell: float, r: float, scheme,
                         quad: QuadratureSpec = DEFAULT_QUAD, gamma: float = 1.0) -> float:
    """Mean total time ``C`` started at ``y`` spends in ``[ell, r]``.

    Uses the Green's function of the absorbing-at-0, reflecting-at-1
    problem: ``int_ell^r m(z) S(0, min(y, z)) dz``.  Infinite for ``ell = 0``.
    """
    sch = _scheme(scheme)
    if not 0.0 <= ell <= r <= 1.0:
        raise DomainError(f"need 0 <= ell <= r <= 1, got [{ell}, {r}]")
    if not 0.0 < y <= 1.0:
        raise DomainError(f"need y in (0, 1], got {y}")
    if ell == 0.0:
        return math.inf
    if ell == r:
        return 0.0
    c = sch.exp_coeff
    s_scaled_y = _s0_scaled(y, sch) if y < 1.0 else None

    def green(z):
        if z <= y:
            # m(z) S(0,z): exponentials cancel exactly
            return _m_scaled(z, sch, gamma) * _s0_scaled(z, sch)
        if s_scaled_y is None:
            return 0.0
        return math.exp(c / z - c / y) * _m_scaled(z, sch, gamma) * s_scaled_y

    # z = 1 - s^2 removes the (1 - z)^(-1/2) endpoint behaviour of homodyne m(z)
    def integrand(s):
        z = 1.0 - s * s
        return 2.0 * s * green(z) if z < 1.0 else 0.0

    lo, hi = math.sqrt(1.0 - r), math.sqrt(1.0 - ell)
    mid = math.sqrt(1.0 - y)
    if lo < mid < hi:
        return _quad(integrand, lo, mid, quad) + _quad(integrand, mid, hi, quad)
    return _quad(integrand, lo, hi, quad)


def exponential_passage_time(a: float, y: float, gamma: float = 1.0) -> float:
    """Time for the unobserved population ``y e^{-gamma t}`` to reach ``a``."""
    if not 0.0 < a <= y:
        raise DomainError(f"need 0 < a <= y, got a={a}, y={y}")
    return math.log(y / a) / gamma
