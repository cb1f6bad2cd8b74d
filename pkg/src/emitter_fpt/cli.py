"""Command-line front end.

Every command writes its data files plus a ``<name>.manifest.json``
sidecar into the output directory (``--out``, else ``$EMITTER_FPT_OUT``,
else ``./emitter-fpt-out``).  Rerunning the same command with
``--config <manifest>`` reproduces the files byte for byte.  Times are in
units of 1/gamma.

Exit status: 0 success, 1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import first_passage as fp
from .emitter_models import DetectionKind, DetectionScheme, master_equation_excitation, simulate
from .montecarlo import EnsembleConfig, run_ensemble, standard_validation
from .sde_core import NoiseStream, Scheme, StepConfig

OUT_ENV = "EMITTER_FPT_OUT"
DEFAULT_OUT = "emitter-fpt-out"
SCHEMES = [k.value for k in DetectionKind]
FAST_N_TRAJ = 1000
FAST_TOLERANCE = 0.04
TOLERANCE = 0.02
UNITS_LINE = "# times in units of 1/gamma"

# flag defaults; the key-value config file sits between these and the flags
DEFAULTS: dict[str, Any] = {
    "scheme": "optimal-homodyne",
    "c0": 0.5,
    "phase_frac": None,
    "dt": 1e-4,
    "horizon": 5.0,
    "n_traj": 5000,
    "seed": 0,
    "out": None,
    "fast": False,
    "tolerance": None,  # 0.02, or FAST_TOLERANCE with --fast
    "workers": 1,
    "integrator": "milstein",
}
_CASTS: dict[str, Callable[[str], Any]] = {
    "scheme": str, "c0": float, "phase_frac": float, "dt": float, "horizon": float,
    "n_traj": int, "seed": int, "out": str, "tolerance": float, "workers": int,
    "integrator": str,
    "fast": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}

PHASE_FRACS = (1.0, 0.7, 0.5, 0.3, 0.1)
FIG_Y = (0.3, 0.5, 0.7, 0.9)


class UsageError(Exception):
    """Bad parameters; reported on one line with exit status 2."""


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    seed: int
    outputs: list[str] = field(default_factory=list)
    versions: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        body = {"command": self.command, "config": self.config, "seed": self.seed,
                "outputs": self.outputs, "versions": self.versions}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _versions() -> dict[str, str]:
    out = {}
    for dist in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def _fmt(x) -> str:
    # repr of a Python float round-trips exactly
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv_text(header: list[str], rows, comment: str = UNITS_LINE) -> str:
    buf = io.StringIO()
    buf.write(comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# option handling


def _manifest_config(path: str, text: str) -> dict[str, Any]:
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not a valid manifest: {exc.msg}") from None
    if not isinstance(body, dict) or not isinstance(body.get("config"), dict):
        raise UsageError(f"{path}: manifest has no config block")
    # command-specific extras (figure number, grids) are not options
    return {k: v for k, v in body["config"].items() if k in _CASTS}


def read_config_file(path: str) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes equal underscores.

    A JSON run manifest is accepted too; its ``config`` block is used.
    """
    cfg: dict[str, Any] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        return _manifest_config(path, text)
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CASTS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        try:
            cfg[key] = _CASTS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{n}: bad value for {key}: {value!r}") from None
    return cfg


def resolve_options(args: argparse.Namespace) -> dict[str, Any]:
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(read_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            opts[key] = value
    if opts["scheme"] not in SCHEMES:
        raise UsageError(f"unknown scheme {opts['scheme']!r}; choose from {', '.join(SCHEMES)}")
    if opts["integrator"] not in [s.value for s in Scheme]:
        raise UsageError(f"unknown integrator {opts['integrator']!r}")
    if not 0.0 <= opts["c0"] <= 1.0:
        raise UsageError(f"--c0 must lie in [0, 1], got {opts['c0']}")
    if not (opts["dt"] > 0 and opts["horizon"] >= opts["dt"]):
        raise UsageError("need --dt > 0 and --horizon >= --dt")
    if opts["n_traj"] < 1:
        raise UsageError("--n-traj must be at least 1")
    if opts["workers"] < 1:
        raise UsageError("--workers must be at least 1")
    if opts["phase_frac"] is not None and opts["scheme"] != "homodyne":
        raise UsageError(f"--phase-frac only applies to homodyne, not {opts['scheme']}")
    return opts


def _scheme(opts) -> DetectionScheme:
    return DetectionScheme.parse(opts["scheme"], opts["phase_frac"])


def _out_dir(opts) -> Path:
    return Path(opts["out"] or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _write_outputs(opts, command: str, files: dict[str, str], extra: dict | None = None,
                   stem: str | None = None) -> list[Path]:
    out = _out_dir(opts)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        written.append(p)
    config = {k: v for k, v in opts.items() if k not in ("out", "workers")}
    config.update(extra or {})
    manifest = RunManifest(command, config, opts["seed"], sorted(files), _versions())
    mpath = out / f"{stem or command}.manifest.json"
    mpath.write_text(manifest.to_json())
    written.append(mpath)
    return written


# ---------------------------------------------------------------------------
# simulate / figure 1


def path_table(path) -> tuple[list[str], list[list]]:
    """Rows ``t, C, dq_re, dq_im, jumped, rho_ee``; row i carries the step ending at t_i."""
    t = path.times
    n = len(t)
    dq = np.zeros(n, dtype=complex)
    jumped = np.zeros(n, dtype=bool)
    rec = path.record
    if rec is not None and rec.dq is not None:
        dq[1:] = rec.dq
    if rec is not None and rec.jumps:
        jumped[np.searchsorted(t, rec.jumps)] = True
    rho = master_equation_excitation(path.c0, t)
    rows = [[t[i], path.values[i], dq[i].real, dq[i].imag, jumped[i], rho[i]] for i in range(n)]
    return ["t", "C", "dq_re", "dq_im", "jumped", "rho_ee"], rows


def _simulate_path(opts):
    cfg = StepConfig(dt=opts["dt"], horizon=opts["horizon"], scheme=Scheme(opts["integrator"]))
    try:
        return simulate(_scheme(opts), opts["c0"], cfg, NoiseStream(opts["seed"], 0))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(opts) -> int:
    path = _simulate_path(opts)
    header, rows = path_table(path)
    label = _scheme(opts).label
    comment = f"{UNITS_LINE}; scheme={label}; c0={opts['c0']!r}; seed={opts['seed']}"
    written = _write_outputs(opts, "simulate", {"simulate.csv": _csv_text(header, rows, comment)})
    print(f"C_max={float(np.max(path.values))!r} C_final={float(path.values[-1])!r}")
    for p in written:
        print(p)
    return 0


# ---------------------------------------------------------------------------
# figures


def _u_grid(y: float) -> list[float]:
    grid = [round(u, 10) for u in np.arange(0.0, 1.0, 0.01) if u > y + 1e-12]
    return grid + [0.999]


def _fig1(opts):
    o = dict(opts, scheme="optimal-homodyne", phase_frac=None)
    path = _simulate_path(o)
    rho = master_equation_excitation(path.c0, path.times)
    rows = zip(path.times, path.values, rho)
    return _csv_text(["t", "C", "rho_ee"], rows), {"scheme": "optimal-homodyne"}


def _hit_curves(opts, ys):
    n_traj = FAST_N_TRAJ if opts["fast"] else opts["n_traj"]
    rows = []
    for y in ys:
        grid = _u_grid(y)
        for u in grid:
            rows.append([y, 0.0, "analytic", u,
                         fp.excitation_prob(u, y, fp.Scheme1D.OPTIMAL_HOMODYNE), "", ""])
        for i, frac in enumerate(PHASE_FRACS):
            cfg = EnsembleConfig(DetectionScheme.homodyne(0.5 * math.pi * frac), y, n_traj=n_traj,
                                 dt=opts["dt"], horizon=opts["horizon"],
                                 master_seed=opts["seed"] + i, u_grid=grid,
                                 integrator=Scheme(opts["integrator"]), keep_trace=False)
            stats = run_ensemble(cfg, opts["workers"])
            for u, f, ci in zip(grid, stats.hit_fraction_per_u, stats.wilson_ci):
                rows.append([y, frac, "monte-carlo", u, f, ci[0], ci[1]])
    header = ["c0", "phase_frac", "source", "u", "P", "ci_lo", "ci_hi"]
    return _csv_text(header, rows), {"n_traj_used": n_traj, "phase_fracs": list(PHASE_FRACS)}


def _fig2(opts):
    return _hit_curves(opts, (0.3, 0.5, 0.7))


def _fig3(opts):
    return _hit_curves(opts, (0.9,))


def _fig4(opts):
    us = [round(u, 10) for u in np.arange(0.0, 1.0, 0.005)] + [1.0]
    rows = []
    for sch in (fp.Scheme1D.HETERODYNE, fp.Scheme1D.OPTIMAL_HOMODYNE):
        for u in us:
            rows.append([sch.value, u] + [fp.excitation_prob(u, y, sch) if u > y else 1.0
                                         for y in FIG_Y])
    header = ["scheme", "u"] + [f"P_y{y}" for y in FIG_Y]
    return _csv_text(header, rows), {}


def _fig5(opts):
    rows = []
    for y in np.round(np.arange(0.01, 1.0, 0.01), 10):
        rows.append([y, fp.mean_excitation_time(y, fp.Scheme1D.HETERODYNE),
                     fp.mean_excitation_time(y, fp.Scheme1D.OPTIMAL_HOMODYNE)])
    return _csv_text(["y", "T_het", "T_hom"], rows), {}


def _fig6(opts):
    y = 0.5
    rows = []
    for a in np.round(np.arange(0.01, y, 0.01), 10):
        rows.append([a, fp.mean_first_passage_below(a, y, fp.Scheme1D.HETERODYNE),
                     fp.mean_first_passage_below(a, y, fp.Scheme1D.OPTIMAL_HOMODYNE),
                     fp.exponential_passage_time(a, y)])
    return _csv_text(["a", "T_het", "T_hom", "t_exp"], rows, f"{UNITS_LINE}; y={y!r}"), {"y": y}


FIGURES = {1: _fig1, 2: _fig2, 3: _fig3, 4: _fig4, 5: _fig5, 6: _fig6}


def cmd_figure(opts, n: int) -> int:
    if n not in FIGURES:
        raise UsageError(f"figure number must be 1..6, got {n}")
    text, extra = FIGURES[n](opts)
    written = _write_outputs(opts, "figure", {f"fig{n}.csv": text}, {"figure": n, **extra},
                             stem=f"fig{n}")
    for p in written:
        print(p)
    return 0


# ---------------------------------------------------------------------------
# validate / hitprob / times


def cmd_validate(opts) -> int:
    n_traj = FAST_N_TRAJ if opts["fast"] else opts["n_traj"]
    tol = opts["tolerance"]
    if tol is None:
        tol = FAST_TOLERANCE if opts["fast"] else TOLERANCE
    report = standard_validation(_scheme(opts), opts["c0"], n_traj=n_traj, tolerance=tol,
                                 master_seed=opts["seed"], dt=opts["dt"],
                                 horizon=opts["horizon"], workers=opts["workers"])
    lines = [json.dumps(r.as_record(), sort_keys=True) for r in report.rows]
    written = _write_outputs(opts, "validate", {"validate.jsonl": "\n".join(lines) + "\n"},
                             {"n_traj_used": n_traj, "tolerance_used": tol})
    for r in report.failures():
        print(f"FAIL {r.quantity} {r.params} analytic={r.analytic:.6g} estimate={r.estimate:.6g}",
              file=sys.stderr)
    n_ok = len(report.rows) - len(report.failures())
    print(f"{n_ok}/{len(report.rows)} rows pass")
    for p in written:
        print(p)
    return 0 if report.passed else 1


def _analytic_scheme(opts) -> fp.Scheme1D:
    if opts["scheme"] not in ("heterodyne", "optimal-homodyne"):
        raise UsageError("closed forms exist only for heterodyne and optimal-homodyne")
    return fp.Scheme1D(opts["scheme"])


def cmd_hitprob(opts, us: list[float] | None, mc: bool) -> int:
    sch = _analytic_scheme(opts)
    y = opts["c0"]
    grid = sorted(us) if us else [round(u, 10) for u in np.arange(0.05, 1.0001, 0.05) if u >= y]
    if any(not y <= u <= 1.0 for u in grid):
        raise UsageError("--u values must lie in [c0, 1]")
    rows = [[sch.value, y, u, fp.excitation_prob(u, y, sch)] for u in grid]
    header = ["scheme", "y", "u", "P"]
    extra = {"u": grid}
    if mc:
        n_traj = FAST_N_TRAJ if opts["fast"] else opts["n_traj"]
        cfg = EnsembleConfig(_scheme(opts), y, n_traj=n_traj, dt=opts["dt"],
                             horizon=opts["horizon"], master_seed=opts["seed"], u_grid=grid,
                             integrator=Scheme(opts["integrator"]), keep_trace=False)
        stats = run_ensemble(cfg, opts["workers"])
        for row, f, ci in zip(rows, stats.hit_fraction_per_u, stats.wilson_ci):
            row += [f, ci[0], ci[1]]
        header += ["P_mc", "ci_lo", "ci_hi"]
        extra["n_traj_used"] = n_traj
    text = _csv_text(header, rows)
    sys.stdout.write(text)
    _write_outputs(opts, "hitprob", {"hitprob.csv": text}, extra)
    return 0


def cmd_times(opts, a_values: list[float] | None, interval) -> int:
    sch = _analytic_scheme(opts)
    y = opts["c0"]
    if not 0.0 < y <= 1.0:
        raise UsageError("times need 0 < c0 <= 1")
    a_values = sorted(a_values) if a_values else [a for a in (0.1, 0.25) if a < y]
    if any(not 0.0 < a <= y for a in a_values):
        raise UsageError("--a values must lie in (0, c0]")
    rows = [["mean_excitation_time", sch.value, y, "", "", fp.mean_excitation_time(y, sch)]]
    for a in a_values:
        rows.append(["mean_first_passage_below", sch.value, y, a, "",
                     fp.mean_first_passage_below(a, y, sch)])
        rows.append(["exponential_passage_time", "master-equation", y, a, "",
                     fp.exponential_passage_time(a, y)])
    if interval is not None:
        a, b = interval
        if not 0.0 <= a <= y <= b <= 1.0 or a >= b:
            raise UsageError("--interval A B must satisfy 0 <= A <= c0 <= B <= 1, A < B")
        itv = fp.Interval01(a, b)
        rows.append(["hit_prob_b_before_a", sch.value, y, a, b, fp.hit_prob_b_before_a(y, itv, sch)])
        rows.append(["mean_exit_time", sch.value, y, a, b, fp.mean_exit_time(y, itv, sch)])
    text = _csv_text(["quantity", "scheme", "y", "a", "b", "value"], rows)
    sys.stdout.write(text)
    _write_outputs(opts, "times", {"times.csv": text},
                   {"a": a_values, "interval": list(interval) if interval else None})
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser):
    # defaults are None so that flags can be told apart from config-file values
    p.add_argument("--scheme", help=f"one of {', '.join(SCHEMES)} (default optimal-homodyne)")
    p.add_argument("--c0", type=float, help="initial excited-state population (default 0.5)")
    p.add_argument("--phase-frac", type=float,
                   help="initial homodyne phase offset as a fraction of pi/2")
    p.add_argument("--dt", type=float, help="time step in 1/gamma (default 1e-4)")
    p.add_argument("--horizon", type=float, help="final time in 1/gamma (default 5)")
    p.add_argument("--n-traj", type=int, help="trajectories per ensemble (default 5000)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--fast", action="store_true",
                   help=f"use {FAST_N_TRAJ} trajectories (validate: tolerance {FAST_TOLERANCE})")
    p.add_argument("--integrator", help="euler, milstein or taylor (default milstein)")
    p.add_argument("--workers", type=int, help="worker threads for ensembles (default 1)")
    p.add_argument("--config", help="key = value file or run manifest; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emitter-fpt",
        description="Trajectory simulation and first-passage statistics for a decaying "
                    "two-level emitter under continuous detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write one trajectory as CSV")
    _common(p)

    p = sub.add_parser("figure", help="write the dataset behind one figure")
    p.add_argument("n", type=int, help="figure number 1..6")
    _common(p)

    p = sub.add_parser("validate", help="compare Monte Carlo with the closed forms")
    p.add_argument("--tolerance", type=float, help="absolute tolerance on probabilities")
    _common(p)

    p = sub.add_parser("hitprob", help="probability of ever reaching u from c0")
    p.add_argument("--u", type=float, nargs="+", help="target levels (default 0.05 grid)")
    p.add_argument("--mc", action="store_true", help="add Monte Carlo estimates")
    _common(p)

    p = sub.add_parser("times", help="mean excitation, passage and exit times at c0")
    p.add_argument("--a", type=float, nargs="+", help="lower levels (default 0.1 0.25)")
    p.add_argument("--interval", type=float, nargs=2, metavar=("A", "B"),
                   help="also report exit statistics for ]A, B[")
    _common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on malformed flags
    try:
        opts = resolve_options(args)
        if args.command == "simulate":
            return cmd_simulate(opts)
        if args.command == "figure":
            return cmd_figure(opts, args.n)
        if args.command == "validate":
            return cmd_validate(opts)
        if args.command == "hitprob":
            return cmd_hitprob(opts, args.u, args.mc)
        return cmd_times(opts, args.a, args.interval)
    except (UsageError, ValueError) as exc:
        print(f"emitter-fpt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
