"""Models of a spontaneously decaying two-level emitter under detection.

Time is measured in units of 1/gamma and gamma defaults to 1 everywhere.

Population equations (Itô form, ``C = |c_e|**2``)::

    heterodyne:        dC = -gamma C dt - sqrt(2) sqrt(gamma) sqrt(C^3 (1-C)) dW
    optimal homodyne:  dC = -gamma C dt - 2 sqrt(gamma) sqrt(C^3 (1-C)) dW
    homodyne, phase phi~ relative to the dipole:
        dC    = -gamma C dt - 2 sqrt(gamma) cos(phi~) sqrt(C^3 (1-C)) dW
        dphi~ = gamma (2C^2 - C) / (2 (1-C)) sin(2 phi~) dt
                - sqrt(gamma) sin(phi~) sqrt(C / (1-C)) dW

The amplitude-level steppers integrate the stochastic Schrödinger
equations for ``(c_e, c_g)`` directly and renormalize after each step.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .paths import MeasurementRecord, PopulationPath
from .sde_core import (
    NoiseStream,
    Scheme,
    SdeCoefficients,
    SimulationError,
    StepConfig,
    simulate_scalar_path,
    strong_taylor_10_vector_step,
)
from .specfun import DomainError

HETERODYNE_K = 2.0 / math.sqrt(2.0)
OPTIMAL_HOMODYNE_K = 2.0
PHASE_FLOOR = 1e-12
MAX_PHOTON_DT = 1e-3


class SingularPhaseError(ArithmeticError):
    pass


class DetectionKind(str, enum.Enum):
    PHOTON_COUNTING = "photon-counting"
    HOMODYNE = "homodyne"
    OPTIMAL_HOMODYNE = "optimal-homodyne"
    HETERODYNE = "heterodyne"


@dataclass(frozen=True)
class DetectionScheme:
    """Which detector watches the emitted light.

    For ``HOMODYNE`` the ``phase`` is the initial offset phi~_0 between the
    emitter dipole and the local oscillator, in radians.  Optimal homodyne
    is the ``phase = 0`` case, kept separate because its population obeys a
    closed scalar equation.
    """

    kind: DetectionKind
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DetectionKind(self.kind))
        if self.kind is not DetectionKind.HOMODYNE and self.phase != 0.0:
            raise ValueError(f"{self.kind.value} takes no phase")

    @classmethod
    def photon_counting(cls):
        return cls(DetectionKind.PHOTON_COUNTING)

    @classmethod
    def homodyne(cls, phase: float):
        return cls(DetectionKind.HOMODYNE, float(phase))

    @classmethod
    def optimal_homodyne(cls):
        return cls(DetectionKind.OPTIMAL_HOMODYNE)

    @classmethod
    def heterodyne(cls):
        return cls(DetectionKind.HETERODYNE)

    @classmethod
    def parse(cls, name: str, phase_frac: float | None = None):
        """Build from a CLI-style name; ``phase_frac`` is phi~_0 / (pi/2)."""
        kind = DetectionKind(name)
        if kind is DetectionKind.HOMODYNE:
            return cls.homodyne(0.5 * math.pi * (phase_frac or 0.0))
        if phase_frac not in (None, 0, 0.0):
            raise ValueError(f"--phase-frac only applies to homodyne, not {name}")
        return cls(kind)

    @property
    def label(self) -> str:
        if self.kind is DetectionKind.HOMODYNE:
            return f"homodyne(phase_frac={self.phase / (0.5 * math.pi):.6g})"
        return self.kind.value


@dataclass(frozen=True)
class PureState:
    c_e: complex
    c_g: complex

    @classmethod
    def from_population(cls, c: float, phase: float = 0.0) -> "PureState":
        """State with ``|c_e|^2 = c`` and relative phase ``arg(c_g* c_e) = phase``."""
        if not 0.0 <= c <= 1.0:
            raise DomainError(f"population must lie in [0, 1], got {c}")
        return cls(math.sqrt(c) * cmath.exp(1j * phase), complex(math.sqrt(1.0 - c)))

    @property
    def population(self) -> float:
        return abs(self.c_e) ** 2

    @property
    def norm(self) -> float:
        return math.sqrt(abs(self.c_e) ** 2 + abs(self.c_g) ** 2)

    def normalized(self) -> "PureState":
        n = self.norm
        return PureState(self.c_e / n, self.c_g / n)

    def as_array(self) -> np.ndarray:
        return np.array([self.c_e, self.c_g], dtype=complex)


@dataclass(frozen=True)
class PopulationPhaseState:
    C: float
    phi_tilde: float


# ---------------------------------------------------------------------------
# unconditioned dynamics


def master_equation_excitation(c0, t, gamma: float = 1.0):
    """Excited-state population of the unobserved emitter, ``c0 exp(-gamma t)``."""
    t = np.asarray(t, dtype=float)
    if not 0.0 <= c0 <= 1.0:
        raise DomainError(f"c0 must lie in [0, 1], got {c0}")
    if np.any(t < 0):
        raise DomainError("t must be non-negative")
    out = c0 * np.exp(-gamma * t)
    return float(out) if out.ndim == 0 else out


def no_jump_population(c0, t, gamma: float = 1.0):
    """Population between photon detections, ``c0 e^{-gt} / (1 - c0 + c0 e^{-gt})``."""
    d = np.exp(-gamma * np.asarray(t, dtype=float))
    out = c0 * d / (1.0 - c0 + c0 * d)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# closed population SDEs


class CoefficientDomainWarning(UserWarning):
    pass


def population_coeffs(k: float, gamma: float = 1.0) -> SdeCoefficients:
    """``A(C) = -gamma C``, ``B(C) = -k sqrt(gamma) sqrt(C^3 (1-C))``.

    The radicand is clamped at zero outside [0, 1].  ``B dB/dC`` is the
    polynomial ``k^2 gamma (3C^2 - 4C^3) / 2``, finite at C = 1 where dB/dC
    itself diverges.
    """
    sg = math.sqrt(gamma)

    def drift(c):
        return -gamma * c

    def diffusion(c):
        rad = c * c * c * (1.0 - c)
        return -k * sg * math.sqrt(rad) if rad > 0 else 0.0

    def diffusion_derivative(c):
        rad = c * c * c * (1.0 - c)
        if rad <= 0:
            return 0.0 if c <= 0 else -math.inf
        return -k * sg * (3.0 * c * c - 4.0 * c ** 3) / (2.0 * math.sqrt(rad))

    def bdb(c):
        return 0.5 * k * k * gamma * (3.0 * c * c - 4.0 * c ** 3)

    return SdeCoefficients(drift, diffusion, diffusion_derivative, bdb)


def heterodyne_population_coeffs(gamma: float = 1.0) -> SdeCoefficients:
    return population_coeffs(HETERODYNE_K, gamma)


def optimal_homodyne_population_coeffs(gamma: float = 1.0) -> SdeCoefficients:
    return population_coeffs(OPTIMAL_HOMODYNE_K, gamma)


# ---------------------------------------------------------------------------
# single steps


def _coupled_fields(gamma, floor):
    sg = math.sqrt(gamma)

    def drift(y):
        C, ph = y
        return np.array([-gamma * C, gamma * (2 * C * C - C) / (2 * (1 - C)) * math.sin(2 * ph)])

    def diffusion(y):
        C, ph = y
        Cc = min(max(C, 0.0), 1.0 - floor)
        rad = Cc ** 3 * (1 - Cc)
        return np.array([
            -2 * sg * math.cos(ph) * (math.sqrt(rad) if rad > 0 else 0.0),
            -sg * math.sin(ph) * math.sqrt(Cc / (1 - Cc)),
        ])

    return drift, diffusion


def homodyne_coupled_step(
    state: PopulationPhaseState,
    dw: float,
    dt: float,
    gamma: float = 1.0,
    scheme: Scheme = Scheme.STRONG_TAYLOR_10,
    floor: float = PHASE_FLOOR,
) -> PopulationPhaseState:
    """Advance ``(C, phi~)`` by one step of the coupled homodyne equations.

    ``phi~ = 0`` is reproduced exactly: drift and diffusion of the phase
    both vanish there and so does every supporting value.
    """
    C, ph = state.C, state.phi_tilde
    if 1.0 - C < floor:
        raise SingularPhaseError(f"1 - C = {1.0 - C:.3g} below floor {floor:g}")
    scheme = Scheme(scheme)
    if scheme is Scheme.MILSTEIN:
        raise ValueError("use the derivative-free scheme for the coupled system")
    drift, diffusion = _coupled_fields(gamma, floor)
    y = np.array([C, ph])
    if scheme is Scheme.EULER_MARUYAMA:
        out = y + drift(y) * dt + diffusion(y) * dw
    else:
        out = strong_taylor_10_vector_step(y, drift, [diffusion], [dw], dt)
    if not np.all(np.isfinite(out)):
        raise SimulationError(f"non-finite coupled state from {state}")
    return PopulationPhaseState(float(out[0]), float(out[1]))


_SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |g><e| in the (e, g) basis
_SIGMA_PLUS = _SIGMA_MINUS.T.copy()
_PROJ_E = _SIGMA_PLUS @ _SIGMA_MINUS


def _expect(op, psi):
    return complex(np.vdot(psi, op @ psi))


def _homodyne_fields(phi, gamma):
    L = _SIGMA_MINUS * cmath.exp(-1j * phi)
    Ld = L.conj().T
    sg = math.sqrt(gamma)

    def x_of(psi):
        return _expect(L + Ld, psi).real

    def drift(psi):
        x = x_of(psi)
        return 0.5 * gamma * (-_PROJ_E @ psi + x * (L @ psi) - 0.25 * x * x * psi)

    def diffusion(psi):
        return sg * (L @ psi - 0.5 * x_of(psi) * psi)

    return drift, diffusion, x_of


def _check_state(state: PureState):
    if abs(state.norm - 1.0) > 1e-9:
        raise DomainError(f"state not normalized (norm={state.norm})")


def _finish(out, what):
    if not np.all(np.isfinite(out)):
        raise SimulationError(f"non-finite amplitudes in {what} step: {out}")
    n = np.linalg.norm(out)
    return PureState(complex(out[0] / n), complex(out[1] / n))


def homodyne_sse_step(state: PureState, phi: float, dw: float, dt: float, gamma: float = 1.0,
                      scheme: Scheme = Scheme.STRONG_TAYLOR_10):
    """One amplitude-level homodyne step; returns ``(new_state, dq)``.

    ``phi`` is the local-oscillator phase.  ``dq = gamma x dt + sqrt(gamma) dw``
    with ``x = <sigma+ e^{i phi} + sigma- e^{-i phi}>`` at the start of the step.
    """
    _check_state(state)
    drift, diffusion, x_of = _homodyne_fields(phi, gamma)
    psi = state.as_array()
    x = x_of(psi)
    if Scheme(scheme) is Scheme.EULER_MARUYAMA:
        out = psi + drift(psi) * dt + diffusion(psi) * dw
    else:
        out = strong_taylor_10_vector_step(psi, drift, [diffusion], [dw], dt)
    return _finish(out, "homodyne"), gamma * x * dt + math.sqrt(gamma) * dw


def heterodyne_sse_step(state: PureState, dw_x: float, dw_y: float, dt: float, gamma: float = 1.0,
                        scheme: Scheme = Scheme.STRONG_TAYLOR_10):
    """One amplitude-level heterodyne step; returns ``(new_state, dq)``.

    ``dZ = (dw_x + i dw_y)/sqrt(2)`` and ``dq = gamma <sigma-> dt + sqrt(gamma) dZ``.
    """
    _check_state(state)
    sg = math.sqrt(gamma)
    r2 = 1.0 / math.sqrt(2.0)

    def drift(psi):
        s = _expect(_SIGMA_MINUS, psi)
        return gamma * (-0.5 * _PROJ_E @ psi + s.conjugate() * (_SIGMA_MINUS @ psi)
                        - 0.5 * abs(s) ** 2 * psi)

    def g(psi):
        return sg * (_SIGMA_MINUS @ psi - _expect(_SIGMA_MINUS, psi) * psi)

    columns = [lambda psi: r2 * g(psi), lambda psi: 1j * r2 * g(psi)]
    psi = state.as_array()
    s0 = _expect(_SIGMA_MINUS, psi)
    if Scheme(scheme) is Scheme.EULER_MARUYAMA:
        out = psi + drift(psi) * dt + columns[0](psi) * dw_x + columns[1](psi) * dw_y
    else:
        out = strong_taylor_10_vector_step(psi, drift, columns, [dw_x, dw_y], dt)
    dz = (dw_x + 1j * dw_y) * r2
    return _finish(out, "heterodyne"), gamma * s0 * dt + sg * dz


def photon_counting_step(c: float, u: float, dt: float, gamma: float = 1.0):
    """Jump to the ground state with probability ``gamma c dt``, else follow
    the exact no-jump map ``c e^{-g dt} / (1 - c + c e^{-g dt})``.

    Returns ``(c_next, jumped)``.
    """
    if dt > MAX_PHOTON_DT / gamma:
        raise ValueError(f"dt={dt} too coarse for the Bernoulli jump test (max {MAX_PHOTON_DT})")
    c_next, jumped = _kernels.photon_counting_step(float(c), float(u), float(dt), float(gamma))
    return c_next, bool(jumped)


# ---------------------------------------------------------------------------
# single trajectories


def simulate(
    scheme: DetectionScheme,
    c0: float,
    config: StepConfig,
    stream: NoiseStream,
    gamma: float = 1.0,
) -> PopulationPath:
    """One trajectory of ``C_t`` together with its measurement record.

    Optimal homodyne and heterodyne use the closed population equation
    with ``config.scheme`` (the heterodyne record is then unavailable, so
    heterodyne is run at amplitude level instead).  General homodyne runs
    at amplitude level; photon counting uses the exact no-jump map.
    """
    kind = scheme.kind
    n, dt = config.n_steps, config.dt
    times = dt * np.arange(n + 1)
    meta = {"scheme": scheme.label, "seed": stream.master_seed, "stream_index": stream.stream_index,
            "dt": dt, "n_steps": n, "effective_horizon": n * dt}

    if kind is DetectionKind.OPTIMAL_HOMODYNE:
        dws = math.sqrt(dt) * stream.normal(n)
        path = simulate_scalar_path(optimal_homodyne_population_coeffs(gamma), c0, config, stream,
                                    increments=dws)
        C = path.values[:-1]
        x = 2.0 * np.sqrt(np.clip(C * (1.0 - C), 0.0, None))
        path.record = MeasurementRecord(times, gamma * x * dt + math.sqrt(gamma) * dws)
        path.metadata.update(meta, integrator=config.scheme.value)
        return path

    if kind is DetectionKind.PHOTON_COUNTING:
        if dt > MAX_PHOTON_DT / gamma:
            raise ValueError(f"dt={dt} too coarse for photon counting (max {MAX_PHOTON_DT})")
        us = stream.uniform(n)
        values = np.empty(n + 1)
        values[0] = c = c0
        jumps = []
        for i in range(n):
            c, jumped = _kernels.photon_counting_step(c, us[i], dt, gamma)
            if jumped:
                jumps.append(times[i + 1])
            values[i + 1] = c
        dq = np.zeros(n)
        dq[np.searchsorted(times, jumps) - 1] = 1.0
        rec = MeasurementRecord(times, dq, jumps)
        return PopulationPath(times, values, rec, meta)

    method = _kernels.EULER if config.scheme is Scheme.EULER_MARUYAMA else _kernels.TAYLOR
    if kind is DetectionKind.HOMODYNE:
        psi = PureState.from_population(c0, scheme.phase)
        ce, cg = psi.c_e, psi.c_g
        dws = math.sqrt(dt) * stream.normal(n)
        eph = 1.0 + 0j  # local oscillator phase 0; phi~ set by the state
        values = np.empty(n + 1)
        dq = np.empty(n)
        values[0] = c0
        for i in range(n):
            ce, cg, x = _kernels.homodyne_amp_step(ce, cg, dws[i], dt, eph, gamma, method)
            dq[i] = gamma * x * dt + math.sqrt(gamma) * dws[i]
            values[i + 1] = abs(ce) ** 2
        return PopulationPath(times, values, MeasurementRecord(times, dq), meta)

    # heterodyne
    psi = PureState.from_population(c0)
    ce, cg = psi.c_e, psi.c_g
    dws = math.sqrt(dt) * stream.normal((n, 2))
    values = np.empty(n + 1)
    dq = np.empty(n, dtype=complex)
    values[0] = c0
    r2 = 1.0 / math.sqrt(2.0)
    for i in range(n):
        ce, cg, s = _kernels.heterodyne_amp_step(ce, cg, dws[i, 0], dws[i, 1], dt, gamma, method)
        dq[i] = gamma * s * dt + math.sqrt(gamma) * r2 * (dws[i, 0] + 1j * dws[i, 1])
        values[i + 1] = abs(ce) ** 2
    return PopulationPath(times, values, MeasurementRecord(times, dq), meta)
