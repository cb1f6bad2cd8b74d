"""Ensemble experiments and comparison against the closed-form results.

Trajectory ``k`` always draws its noise from substream ``k`` of the master
seed, in time chunks that do not change the deviate order.  Trajectories
are processed in fixed-size batches and batch results are merged by batch
index, so statistics are bit-identical for any number of workers.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _kernels
from . import first_passage as fp
from .emitter_models import (
    HETERODYNE_K,
    MAX_PHOTON_DT,
    OPTIMAL_HOMODYNE_K,
    PHASE_FLOOR,
    DetectionKind,
    DetectionScheme,
    PureState,
    master_equation_excitation,
)
from .sde_core import Scheme, SimulationError, n_steps_for, substream_generator

HIT_ONE_THRESHOLD = 1.0 - 1e-6
HORIZON_CAVEAT = (
    "hit fractions are finite-horizon estimates of the probability of ever "
    "reaching u; compare horizons to gauge truncation"
)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    z = statistics.NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    # the bounds at 0 and 1 are exact; avoid a rounding residue there
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return (lo, hi)


@dataclass(frozen=True)
class EnsembleConfig:
    """Parameters of one ensemble run (times in units of 1/gamma).

    ``level`` picks the model: ``"population"`` integrates the closed
    population equation (heterodyne, optimal homodyne) or the coupled
    population/phase pair (general homodyne); ``"amplitude"`` integrates
    the wavefunction SSE.  ``None`` selects population level except for
    general homodyne, which runs at amplitude level.

    ``stop_below`` ends a trajectory once ``C`` drops under it; use it for
    passage-time studies with long horizons.  The mean trace is then not
    available.
    """

    scheme: DetectionScheme
    c0: float
    n_traj: int = 5000
    dt: float = 1e-4
    horizon: float = 5.0
    master_seed: int = 0
    u_grid: tuple[float, ...] = ()
    a_grid: tuple[float, ...] = ()
    exit_interval: tuple[float, float] | None = None
    occupation_interval: tuple[float, float] | None = None
    level: str | None = None
    integrator: Scheme = Scheme.MILSTEIN
    stop_below: float = 0.0
    keep_trace: bool = True
    batch_size: int = 50
    chunk_steps: int = 10000
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "u_grid", tuple(float(u) for u in self.u_grid))
        object.__setattr__(self, "a_grid", tuple(float(a) for a in self.a_grid))
        object.__setattr__(self, "integrator", Scheme(self.integrator))
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if not 0.0 <= self.c0 <= 1.0:
            raise ValueError(f"c0 must lie in [0, 1], got {self.c0}")
        if not 0 < self.dt <= self.horizon:
            raise ValueError("require 0 < dt <= horizon")
        if not 0 < self.gamma < math.inf:
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        if self.batch_size < 1 or self.chunk_steps < 1:
            raise ValueError("batch_size and chunk_steps must be positive")
        if any(not self.c0 <= u <= 1.0 for u in self.u_grid):
            raise ValueError("u_grid must lie in [c0, 1]")
        if any(not 0.0 < a <= self.c0 for a in self.a_grid):
            raise ValueError("a_grid must lie in (0, c0]")
        if self.exit_interval is not None:
            a, b = self.exit_interval
            if not 0.0 <= a <= self.c0 <= b <= 1.0:
                raise ValueError("exit interval must contain c0")
        if self.scheme.kind is DetectionKind.PHOTON_COUNTING and self.dt > MAX_PHOTON_DT:
            raise ValueError(f"photon counting needs dt <= {MAX_PHOTON_DT}")
        if self.resolved_level not in ("population", "amplitude"):
            raise ValueError(f"unknown level {self.level!r}")

    @property
    def resolved_level(self) -> str:
        if self.level is not None:
            return self.level
        return "amplitude" if self.scheme.kind is DetectionKind.HOMODYNE else "population"

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.horizon, self.dt)


@dataclass
class EnsembleStats:
    """Summary of one ensemble.

    Hit indices are first grid steps, so ``first_hit_mean_per_a`` averages
    only the trajectories that reached ``a``; ``first_hit_reached_per_a``
    says how many did.  ``final_C`` is the last simulated population of
    each trajectory (its value at the stop for runs with ``stop_below``).
    ``still_active`` counts trajectories that had not stopped when the
    horizon ran out.
    """

    config: EnsembleConfig
    n_traj: int
    effective_horizon: float
    u_grid: np.ndarray
    hit_counts: np.ndarray
    hit_fraction_per_u: np.ndarray
    wilson_ci: list[tuple[float, float]]
    a_grid: np.ndarray
    first_hit_mean_per_a: np.ndarray
    first_hit_sem_per_a: np.ndarray
    first_hit_reached_per_a: np.ndarray
    occupation_above_start: float
    occupation_above_start_sem: float
    occupation_mean: float | None
    occupation_sem: float | None
    exit_upper_fraction: float | None
    exit_upper_ci: tuple[float, float] | None
    exit_time_mean: float | None
    exit_time_sem: float | None
    exit_unresolved: int
    jump_fraction: float | None
    jump_count: int | None
    mean_trace: np.ndarray | None
    trace_sem: np.ndarray | None
    trace_times: np.ndarray | None
    max_C_observed: float
    max_C_per_traj: np.ndarray
    final_C: np.ndarray
    overshoots: int
    still_active: int
    caveat: str = HORIZON_CAVEAT


# ---------------------------------------------------------------------------
# batch machinery


@dataclass
class _Batch:
    start: int
    size: int
    hit_u: np.ndarray
    hit_a: np.ndarray
    above: np.ndarray
    occ: np.ndarray
    exit_idx: np.ndarray
    exit_side: np.ndarray
    cmax: np.ndarray
    jump_idx: np.ndarray
    overshoot: np.ndarray
    active: np.ndarray
    trace_sum: np.ndarray
    trace_sq: np.ndarray
    final_C: np.ndarray | None = None


def _population_of(state: np.ndarray) -> np.ndarray:
    if state.ndim == 1:
        return state.copy()
    if np.iscomplexobj(state):
        return np.abs(state[:, 0]) ** 2
    return state[:, 0].copy()


def _initial_state(cfg: EnsembleConfig, size: int):
    kind = cfg.scheme.kind
    level = cfg.resolved_level
    if level == "amplitude" and kind in (DetectionKind.HOMODYNE, DetectionKind.OPTIMAL_HOMODYNE,
                                         DetectionKind.HETERODYNE):
        psi = PureState.from_population(cfg.c0, cfg.scheme.phase)
        state = np.empty((size, 2), dtype=complex)
        state[:, 0] = psi.c_e
        state[:, 1] = psi.c_g
        return state
    if kind is DetectionKind.HOMODYNE:
        state = np.empty((size, 2))
        state[:, 0] = cfg.c0
        state[:, 1] = cfg.scheme.phase
        return state
    return np.full(size, float(cfg.c0))


def _noise_shape(cfg: EnsembleConfig):
    if cfg.resolved_level == "amplitude" and cfg.scheme.kind is DetectionKind.HETERODYNE:
        return (2,)
    return ()


def _run_batch(cfg: EnsembleConfig, start: int, size: int) -> _Batch:
    n_total = cfg.n_steps
    dt = cfg.dt
    nu, na = len(cfg.u_grid), len(cfg.a_grid)
    u_thr = np.array([min(u, HIT_ONE_THRESHOLD) if u >= 1.0 else u for u in cfg.u_grid])
    a_thr = np.array(cfg.a_grid, dtype=float)
    ell, r = cfg.occupation_interval or (2.0, -1.0)
    ex_lo, ex_hi = cfg.exit_interval or (-1.0, 2.0)
    keep_trace = cfg.keep_trace and cfg.stop_below <= 0.0
    b = _Batch(
        start, size,
        hit_u=np.full((size, nu), -1, dtype=np.int64),
        hit_a=np.full((size, na), -1, dtype=np.int64),
        above=np.zeros(size), occ=np.zeros(size),
        exit_idx=np.full(size, -1, dtype=np.int64), exit_side=np.zeros(size, dtype=np.int64),
        cmax=np.full(size, -np.inf), jump_idx=np.full(size, -1, dtype=np.int64),
        overshoot=np.zeros(size, dtype=np.int64), active=np.ones(size, dtype=np.bool_),
        trace_sum=np.zeros(n_total + 1 if keep_trace else 0),
        trace_sq=np.zeros(n_total + 1 if keep_trace else 0),
    )
    state = _initial_state(cfg, size)
    gens = [substream_generator(cfg.master_seed, start + i) for i in range(size)]
    kind = cfg.scheme.kind
    level = cfg.resolved_level
    gamma = cfg.gamma
    method = {Scheme.EULER_MARUYAMA: _kernels.EULER, Scheme.MILSTEIN: _kernels.MILSTEIN,
              Scheme.STRONG_TAYLOR_10: _kernels.TAYLOR}[cfg.integrator]
    extra = _noise_shape(cfg)
    obs = (cfg.c0, cfg.stop_below, b.active, b.overshoot, u_thr, a_thr, b.hit_u, b.hit_a,
           b.above, b.occ, float(ell), float(r), float(ex_lo), float(ex_hi), b.exit_idx,
           b.exit_side, b.cmax, b.trace_sum, b.trace_sq, 0)

    step0 = 0
    while step0 < n_total:
        n = min(cfg.chunk_steps, n_total - step0)
        if kind is DetectionKind.PHOTON_COUNTING:
            noise = np.stack([g.random(n) for g in gens])
        else:
            noise = np.stack([g.standard_normal((n,) + extra) for g in gens])
        if kind is DetectionKind.PHOTON_COUNTING:
            _kernels.photon_counting_chunk(state, noise, step0, n_total, dt, gamma, b.jump_idx, *obs)
        elif level == "amplitude" and kind is DetectionKind.HETERODYNE:
            _kernels.heterodyne_amp_chunk(state, noise, step0, n_total, dt, gamma, method, *obs)
        elif level == "amplitude":
            _kernels.homodyne_amp_chunk(state, noise, step0, n_total, dt, 1.0 + 0j, gamma,
                                        method, *obs)
        elif kind is DetectionKind.HOMODYNE:
            _kernels.coupled_chunk(state, noise, step0, n_total, dt, gamma, PHASE_FLOOR,
                                   method if method != _kernels.MILSTEIN else _kernels.TAYLOR,
                                   *obs)
        else:
            kd = HETERODYNE_K if kind is DetectionKind.HETERODYNE else OPTIMAL_HOMODYNE_K
            _kernels.population_chunk(state, noise, step0, n_total, dt, kd, gamma, method, *obs)
        step0 += n
        if not np.all(np.isfinite(state)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(state.reshape(size, -1)), axis=1))[0])
            raise SimulationError(f"non-finite state in trajectory {start + bad} before step {step0}",
                                  step=step0, trajectory=start + bad)
        if not b.active.any():
            break
    b.final_C = _population_of(state)
    return b


def _sem(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.inf


def run_ensemble(config: EnsembleConfig, workers: int = 1) -> EnsembleStats:
    """Simulate ``config.n_traj`` trajectories and summarize them."""
    cfg = config
    starts = list(range(0, cfg.n_traj, cfg.batch_size))
    sizes = [min(cfg.batch_size, cfg.n_traj - s) for s in starts]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(lambda sz: _run_batch(cfg, *sz), zip(starts, sizes)))
    else:
        batches = [_run_batch(cfg, s, n) for s, n in zip(starts, sizes)]
    batches.sort(key=lambda b: b.start)

    cat = lambda name: np.concatenate([getattr(b, name) for b in batches])  # noqa: E731
    hit_u, hit_a = cat("hit_u"), cat("hit_a")
    above, occ = cat("above"), cat("occ")
    exit_idx, exit_side = cat("exit_idx"), cat("exit_side")
    cmax, jump_idx = cat("cmax"), cat("jump_idx")
    n = cfg.n_traj
    dt = cfg.dt

    hit_counts = (hit_u >= 0).sum(axis=0)
    fractions = hit_counts / n
    ci = [wilson_interval(int(c), n) for c in hit_counts]

    reached_a = (hit_a >= 0).sum(axis=0)
    t_mean = np.full(len(cfg.a_grid), np.nan)
    t_sem = np.full(len(cfg.a_grid), np.nan)
    for j in range(len(cfg.a_grid)):
        t = hit_a[hit_a[:, j] >= 0, j] * dt
        if len(t):
            t_mean[j] = t.mean()
            t_sem[j] = _sem(t)

    exit_frac = exit_ci = exit_mean = exit_sem = None
    unresolved = 0
    if cfg.exit_interval is not None:
        done = exit_side != 0
        unresolved = int((~done).sum())
        upper = int((exit_side > 0).sum())
        exit_frac = upper / max(1, int(done.sum()))
        exit_ci = wilson_interval(upper, int(done.sum()))
        t = exit_idx[done] * dt
        exit_mean, exit_sem = float(t.mean()), _sem(t)

    occ_mean = occ_sem = None
    if cfg.occupation_interval is not None:
        occ_mean, occ_sem = float(occ.mean()), _sem(occ)

    jump_frac = jump_count = None
    if cfg.scheme.kind is DetectionKind.PHOTON_COUNTING:
        jump_count = int((jump_idx >= 0).sum())
        jump_frac = jump_count / n

    trace = trace_sem = times = None
    if batches[0].trace_sum.size:
        s1 = np.sum([b.trace_sum for b in batches], axis=0)
        s2 = np.sum([b.trace_sq for b in batches], axis=0)
        trace = s1 / n
        var = np.clip(s2 / n - trace ** 2, 0.0, None) * n / max(n - 1, 1)
        trace_sem = np.sqrt(var / n)
        times = dt * np.arange(len(trace))

    return EnsembleStats(
        config=cfg, n_traj=n, effective_horizon=cfg.n_steps * dt,
        u_grid=np.array(cfg.u_grid), hit_counts=hit_counts, hit_fraction_per_u=fractions,
        wilson_ci=ci, a_grid=np.array(cfg.a_grid), first_hit_mean_per_a=t_mean,
        first_hit_sem_per_a=t_sem, first_hit_reached_per_a=reached_a,
        occupation_above_start=float(above.mean()), occupation_above_start_sem=_sem(above),
        occupation_mean=occ_mean, occupation_sem=occ_sem,
        exit_upper_fraction=exit_frac, exit_upper_ci=exit_ci, exit_time_mean=exit_mean,
        exit_time_sem=exit_sem, exit_unresolved=unresolved,
        jump_fraction=jump_frac, jump_count=jump_count,
        mean_trace=trace, trace_sem=trace_sem, trace_times=times,
        max_C_observed=float(cmax.max()), max_C_per_traj=cmax, final_C=cat("final_C"),
        overshoots=int(cat("overshoot").sum()), still_active=int(cat("active").sum()),
    )


@dataclass(frozen=True)
class CurvePoint:
    u: float
    fraction: float
    ci: tuple[float, float]


def estimate_excitation_curve(config: EnsembleConfig, workers: int = 1):
    """Fraction of trajectories reaching each ``u`` in ``config.u_grid``.

    Returns ``(points, caveat)``; the caveat notes that a finite horizon
    estimates the probability of ever reaching ``u`` from below.
    """
    stats = run_ensemble(config, workers)
    points = [CurvePoint(float(u), float(f), ci)
              for u, f, ci in zip(stats.u_grid, stats.hit_fraction_per_u, stats.wilson_ci)]
    return points, stats.caveat


# ---------------------------------------------------------------------------
# validation


@dataclass
class ReportRow:
    quantity: str
    params: dict[str, Any]
    analytic: float
    estimate: float
    ci: tuple[float, float]
    passed: bool

    def as_record(self) -> dict[str, Any]:
        """Plain-Python dict: ``{quantity, params, analytic, estimate, ci, pass}``."""
        return {
            "quantity": self.quantity,
            "params": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                       for k, v in self.params.items()},
            "analytic": float(self.analytic),
            "estimate": float(self.estimate),
            "ci": [float(self.ci[0]), float(self.ci[1])],
            "pass": bool(self.passed),
        }


@dataclass
class ValidationReport:
    rows: list[ReportRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[ReportRow]:
        return [r for r in self.rows if not r.passed]


def _time_row(quantity, params, analytic, mean, sem, z):
    half = z * sem
    ok = bool(np.isfinite(mean)) and abs(mean - analytic) <= half
    return ReportRow(quantity, params, float(analytic), float(mean), (mean - half, mean + half), ok)


def trace_rows(stats: EnsembleStats, n_times: int = 10, z: float = 3.0) -> list[ReportRow]:
    """Ensemble mean of ``C_t`` against ``c0 exp(-gamma t)`` at evenly spaced times."""
    cfg = stats.config
    if stats.mean_trace is None:
        return []
    n = len(stats.mean_trace) - 1
    idx = np.linspace(n / n_times, n, n_times).round().astype(int)
    rows = []
    for i in idx:
        t = float(stats.trace_times[i])
        exact = master_equation_excitation(cfg.c0, t, cfg.gamma)
        rows.append(_time_row("mean_trace", {"scheme": cfg.scheme.label, "c0": cfg.c0, "t": t},
                              exact, stats.mean_trace[i], stats.trace_sem[i], z))
    return rows


def validate_analytics(config: EnsembleConfig, tolerance: float = 0.02, z: float = 3.0,
                       workers: int = 1, stats: EnsembleStats | None = None) -> ValidationReport:
    """Compare Monte Carlo estimates with the closed forms.

    Probabilities pass when within ``tolerance`` (absolute); times and the
    mean trace pass when within ``z`` standard errors.  Rows that a
    scheme does not admit are skipped.
    """
    cfg = config
    if stats is None:
        stats = run_ensemble(cfg, workers)
    report = ValidationReport()
    report.rows.extend(trace_rows(stats, z=z))
    kind = cfg.scheme.kind
    if kind is DetectionKind.PHOTON_COUNTING:
        n = stats.n_traj
        p = stats.jump_fraction
        sem = math.sqrt(max(cfg.c0 * (1 - cfg.c0), 1e-300) / n)
        report.rows.append(_time_row("jump_fraction", {"c0": cfg.c0, "horizon": cfg.horizon},
                                     cfg.c0, p, sem, z))
        return report
    if kind not in (DetectionKind.HETERODYNE, DetectionKind.OPTIMAL_HOMODYNE):
        return report

    sch = fp.Scheme1D(kind.value)
    base = {"scheme": sch.value, "y": cfg.c0}
    for u, f, ci in zip(stats.u_grid, stats.hit_fraction_per_u, stats.wilson_ci):
        exact = fp.excitation_prob(float(u), cfg.c0, sch)
        report.rows.append(ReportRow("excitation_prob", {**base, "u": float(u)}, exact, float(f),
                                     ci, abs(f - exact) <= tolerance))
    if cfg.exit_interval is not None:
        itv = fp.Interval01(*cfg.exit_interval)
        exact = fp.hit_prob_b_before_a(cfg.c0, itv, sch)
        params = {**base, "a": itv.a, "b": itv.b}
        f = stats.exit_upper_fraction
        report.rows.append(ReportRow("hit_prob_b_before_a", params, exact, f, stats.exit_upper_ci,
                                     abs(f - exact) <= tolerance))
        report.rows.append(_time_row("mean_exit_time", params,
                                     fp.mean_exit_time(cfg.c0, itv, sch, gamma=cfg.gamma),
                                     stats.exit_time_mean, stats.exit_time_sem, z))
    if cfg.stop_below > 0.0:
        # passage-time rows need runs that follow trajectories until they decay
        report.rows.append(_time_row("mean_excitation_time", base,
                                     fp.mean_excitation_time(cfg.c0, sch, cfg.gamma),
                                     stats.occupation_above_start,
                                     stats.occupation_above_start_sem, z))
        for a, m, s in zip(stats.a_grid, stats.first_hit_mean_per_a, stats.first_hit_sem_per_a):
            report.rows.append(_time_row("mean_first_passage_below", {**base, "a": float(a)},
                                         fp.mean_first_passage_below(float(a), cfg.c0, sch,
                                                                     gamma=cfg.gamma),
                                         m, s, z))
        if cfg.occupation_interval is not None:
            ell, r = cfg.occupation_interval
            report.rows.append(_time_row("mean_occupation_time", {**base, "ell": ell, "r": r},
                                         fp.mean_occupation_time(cfg.c0, ell, r, sch,
                                                                 gamma=cfg.gamma),
                                         stats.occupation_mean, stats.occupation_sem, z))
    return report


def standard_validation(scheme: DetectionScheme, c0: float = 0.5, n_traj: int = 5000,
                        tolerance: float = 0.02, master_seed: int = 0, dt: float = 1e-4,
                        horizon: float = 5.0, workers: int = 1) -> ValidationReport:
    """The default validation grid for one scheme.

    Hit fractions and the mean trace come from a run over ``horizon``;
    passage times from a second run followed until ``C < 0.02`` (at most
    ``30/gamma``), where returning above any tracked level is negligible.
    """
    u_grid = tuple(u for u in np.round(np.arange(0.05, 1.0, 0.05), 10) if u > c0)
    kind = scheme.kind
    report = ValidationReport()
    if kind is DetectionKind.PHOTON_COUNTING:
        cfg = EnsembleConfig(scheme, c0, n_traj=n_traj, dt=max(dt, 1e-4), horizon=max(horizon, 10.0),
                             master_seed=master_seed)
        return validate_analytics(cfg, tolerance, workers=workers)
    hit_cfg = EnsembleConfig(scheme, c0, n_traj=n_traj, dt=dt, horizon=horizon,
                             master_seed=master_seed, u_grid=u_grid)
    report.rows.extend(validate_analytics(hit_cfg, tolerance, workers=workers).rows)
    if kind in (DetectionKind.HETERODYNE, DetectionKind.OPTIMAL_HOMODYNE):
        a_grid = tuple(a for a in (0.1, 0.25) if a < c0)
        exit_itv = (max(c0 - 0.3, 0.05), min(c0 + 0.3, 0.95))
        time_cfg = EnsembleConfig(scheme, c0, n_traj=n_traj, dt=dt, horizon=30.0,
                                  master_seed=master_seed + 1, a_grid=a_grid,
                                  exit_interval=exit_itv, stop_below=0.02, keep_trace=False)
        report.rows.extend(validate_analytics(time_cfg, tolerance, workers=workers).rows)
    return report
