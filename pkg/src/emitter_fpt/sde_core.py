"""Itô SDE stepping with reproducible per-trajectory noise streams.

Three one-step schemes are provided:

* Euler–Maruyama (strong order 0.5),
* Milstein with an analytic diffusion derivative (strong order 1.0),
* an explicit, derivative-free order-1.0 Itô–Taylor scheme (Platen's
  Runge–Kutta form) for vector states driven by one or more Wiener
  components.

Noise comes from :class:`NoiseStream`, one independent substream per
trajectory index derived from a master seed, so a path depends only on
``(master_seed, stream_index)`` and the step configuration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .paths import PopulationPath


class MissingDerivativeError(ValueError):
    pass


class SimulationError(RuntimeError):
    """A trajectory produced a non-finite state."""

    def __init__(self, message, step=None, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class Scheme(str, enum.Enum):
    EULER_MARUYAMA = "euler"
    MILSTEIN = "milstein"
    STRONG_TAYLOR_10 = "taylor"


# ---------------------------------------------------------------------------
# noise


def substream_generator(master_seed: int, stream_index: int) -> np.random.Generator:
    """PCG64 generator for substream ``stream_index`` of ``master_seed``.

    Derived with ``SeedSequence(master_seed, spawn_key=(stream_index,))``,
    which is the same tree ``SeedSequence(master_seed).spawn`` walks, so
    substreams are statistically independent and need no coordination.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_index),))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class NoiseStream:
    """Deterministic source of standard normal and uniform deviates.

    Deviates are consumed strictly in order; drawing ``n`` values at once
    yields the same sequence as ``n`` single draws.  ``position`` counts
    deviates handed out so far.
    """

    master_seed: int
    stream_index: int = 0
    position: int = field(default=0, init=False)

    def __post_init__(self):
        self._gen = substream_generator(self.master_seed, self.stream_index)

    def normal(self, size=None):
        out = self._gen.standard_normal(size)
        self.position += 1 if size is None else int(np.prod(size))
        return out

    def uniform(self, size=None):
        out = self._gen.random(size)
        self.position += 1 if size is None else int(np.prod(size))
        return out


def gaussian_increment(stream: NoiseStream, dt: float) -> float:
    """One Wiener increment ``sqrt(dt) * N(0, 1)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return math.sqrt(dt) * float(stream.normal())


# ---------------------------------------------------------------------------
# coefficients and configuration


@dataclass(frozen=True)
class SdeCoefficients:
    """Scalar Itô SDE ``dX = drift(X) dt + diffusion(X) dW``.

    ``diffusion_derivative`` is dB/dX, needed by Milstein.  When the
    derivative is singular where B vanishes, ``diffusion_times_derivative``
    may supply the (finite) product B * dB/dX directly.
    """

    drift: Callable[[float], float]
    diffusion: Callable[[float], float]
    diffusion_derivative: Callable[[float], float] | None = None
    diffusion_times_derivative: Callable[[float], float] | None = None

    def bdb(self, x):
        if self.diffusion_times_derivative is not None:
            return self.diffusion_times_derivative(x)
        if self.diffusion_derivative is None:
            raise MissingDerivativeError("Milstein step needs the diffusion derivative")
        return self.diffusion(x) * self.diffusion_derivative(x)


@dataclass(frozen=True)
class StepConfig:
    dt: float = 1e-4
    horizon: float = 5.0
    scheme: Scheme = Scheme.MILSTEIN

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon >= self.dt):
            raise ValueError("require 0 < dt <= horizon")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.horizon, self.dt)

    @property
    def effective_horizon(self) -> float:
        return self.n_steps * self.dt


def n_steps_for(horizon: float, dt: float) -> int:
    """``ceil(horizon/dt)``, ignoring representation noise in the ratio."""
    ratio = horizon / dt
    return max(1, math.ceil(ratio - 1e-9 * ratio))


# ---------------------------------------------------------------------------
# one-step schemes


def euler_maruyama_step(c, coeffs: SdeCoefficients, dw, dt):
    return c + coeffs.drift(c) * dt + coeffs.diffusion(c) * dw


def milstein_step(c, coeffs: SdeCoefficients, dw, dt):
    """``c + A dt + B dw + 1/2 B B' (dw**2 - dt)``."""
    bdb = coeffs.bdb(c)
    return c + coeffs.drift(c) * dt + coeffs.diffusion(c) * dw + 0.5 * bdb * (dw * dw - dt)


def strong_taylor_scalar_step(c, coeffs: SdeCoefficients, dw, dt):
    """Derivative-free order-1.0 step for a scalar SDE with scalar noise."""
    a = coeffs.drift(c)
    b = coeffs.diffusion(c)
    sqdt = math.sqrt(dt)
    support = c + a * dt + b * sqdt
    return c + a * dt + b * dw + (coeffs.diffusion(support) - b) * (dw * dw - dt) / (2.0 * sqdt)


def strong_taylor_10_vector_step(
    state,
    drift: Callable,
    diffusion_columns: Sequence[Callable],
    increments,
    dt: float,
    levy_areas=None,
):
    """Explicit order-1.0 Itô–Taylor step without diffusion derivatives.

    ``Y' = Y + a dt + sum_j b_j dW_j
           + sum_{j1,j2} (b_j2(Y + a dt + b_j1 sqrt(dt)) - b_j2(Y)) I(j1,j2) / sqrt(dt)``

    The double Itô integrals are ``I(j,j) = (dW_j**2 - dt)/2`` and
    ``I(j1,j2) = dW_j1 dW_j2 / 2 + A(j1,j2)`` with Lévy area ``A``.  Passing
    no ``levy_areas`` sets ``A = 0``, which keeps strong order 1.0 only for
    commutative noise; scalar noise is always commutative.

    State may be real or complex; ``drift`` and each column map an array of
    the state's shape to an array of the same shape.
    """
    y = np.asarray(state)
    dws = np.atleast_1d(np.asarray(increments, dtype=float))
    m = len(diffusion_columns)
    if dws.shape != (m,):
        raise ValueError(f"expected {m} increments, got shape {dws.shape}")
    a = np.asarray(drift(y))
    bs = [np.asarray(col(y)) for col in diffusion_columns]
    if a.shape != y.shape or any(b.shape != y.shape for b in bs):
        raise ValueError("drift/diffusion output shape must match the state")
    sqdt = math.sqrt(dt)
    base = y + a * dt
    out = base.copy()
    for j in range(m):
        out = out + bs[j] * dws[j]
    for j1 in range(m):
        support = base + bs[j1] * sqdt
        for j2 in range(m):
            if j1 == j2:
                ito = 0.5 * (dws[j1] * dws[j1] - dt)
            else:
                ito = 0.5 * dws[j1] * dws[j2]
                if levy_areas is not None:
                    ito += levy_areas[j1][j2]
            out = out + (np.asarray(diffusion_columns[j2](support)) - bs[j2]) * (ito / sqdt)
    return out


_SCALAR_STEPPERS = {
    Scheme.EULER_MARUYAMA: euler_maruyama_step,
    Scheme.MILSTEIN: milstein_step,
    Scheme.STRONG_TAYLOR_10: strong_taylor_scalar_step,
}


def scalar_step(c, coeffs, dw, dt, scheme=Scheme.MILSTEIN):
    return _SCALAR_STEPPERS[Scheme(scheme)](c, coeffs, dw, dt)


def simulate_scalar_path(
    coeffs: SdeCoefficients,
    c0: float,
    config: StepConfig,
    stream: NoiseStream,
    clamp: tuple[float, float] = (0.0, 1.0),
    increments: np.ndarray | None = None,
) -> PopulationPath:
    """Integrate one scalar path, projecting each step back into ``clamp``.

    The raw proposal of every step is checked; proposals outside ``clamp``
    are counted in ``metadata['overshoots']`` before being clipped.  Pass
    ``increments`` to replay a given Wiener path instead of drawing from
    ``stream``.
    """
    lo, hi = clamp
    if not lo <= c0 <= hi:
        raise ValueError(f"c0={c0} outside clamp interval {clamp}")
    n = config.n_steps
    dt = config.dt
    if increments is None:
        dws = math.sqrt(dt) * stream.normal(n)
    else:
        dws = np.asarray(increments, dtype=float)
        if dws.shape != (n,):
            raise ValueError(f"need {n} increments, got {dws.shape}")
    step = _SCALAR_STEPPERS[config.scheme]
    values = np.empty(n + 1)
    values[0] = c = float(c0)
    overshoots = 0
    for i in range(n):
        proposal = step(c, coeffs, float(dws[i]), dt)
        if not math.isfinite(proposal):
            raise SimulationError(f"non-finite state at step {i} (c={c})", step=i)
        if proposal < lo or proposal > hi:
            overshoots += 1
            proposal = min(max(proposal, lo), hi)
        values[i + 1] = c = proposal
    times = dt * np.arange(n + 1)
    meta = {
        "dt": dt,
        "n_steps": n,
        "effective_horizon": n * dt,
        "scheme": config.scheme.value,
        "seed": stream.master_seed,
        "stream_index": stream.stream_index,
        "overshoots": overshoots,
    }
    return PopulationPath(times=times, values=values, metadata=meta)
