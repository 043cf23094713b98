"""Command-line front end.

Every command writes CSV (comma separated, '#' metadata lines) to ``--output``
or stdout.  Dead times are given in units of the emitter lifetime tau.

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure,
4 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import WindowSpec, fano_curve, mean_finite, ratio_grid, saturation, var_finite
from .inversion import InversionConfig, InversionError, counting_distribution, moments_by_inversion
from .model import DetectorParams, IdealCycle, PumpParams, RateParams, detection_model
from .simulator import (
    SimConfig,
    SimulationError,
    deadtime_mode_report,
    fano_curve_mc,
    simulate,
    window_stats,
    write_trace,
)
from .validation import run_validation

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4
SEED_ENV = "SPSSTATS_SEED"

log = logging.getLogger("spsstats")


class UsageError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def render_csv(columns, rows, meta=(), trailer=()) -> str:
    buf = io.StringIO()
    for key, value in meta:
        buf.write(f"# {key}={value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    for key, value in trailer:
        buf.write(f"# {key}={value}\n")
    return buf.getvalue()


def write_output(text: str, output: str) -> None:
    """Write to stdout for '-', otherwise atomically (temp file in the same directory, then rename)."""
    if output == "-":
        sys.stdout.write(text)
        return
    path = Path(output)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# commands ----------------------------------------------------------------

def cmd_fano_curve(args) -> int:
    grid = ratio_grid(args.ratio_min, args.ratio_max, args.points)
    curve = fano_curve(grid, args.mu2, args.eta, args.deadtime)
    columns = ["ratio", "eta", "deadtime_over_tau", "fano_analytic"]
    meta = [("command", "fano-curve"), ("version", __version__), ("mu2", _fmt(args.mu2))]
    if args.mc:
        mc = fano_curve_mc(grid, args.mu2, args.eta, args.deadtime, args.windows,
                           args.intervals_per_window, args.seed, args.mode, args.jobs)
        columns += ["fano_mc", "fano_mc_stderr"]
        meta += [("mc_mode", args.mode), ("mc_windows", args.windows), ("seed", args.seed),
                 ("intervals_per_window", _fmt(args.intervals_per_window))]
        rows = zip(grid, [args.eta] * len(grid), [args.deadtime] * len(grid),
                   curve.fano, mc.fano, mc.stderr)
    else:
        rows = zip(grid, [args.eta] * len(grid), [args.deadtime] * len(grid), curve.fano)
    r_min, f_min = curve.minimum()
    trailer = [("minimum_ratio", _fmt(r_min)), ("minimum_fano", _fmt(f_min)),
               ("interior_minima", len(curve.interior_minima()))]
    write_output(render_csv(columns, rows, meta, trailer), args.output)
    return EXIT_OK


def cmd_counting_dist(args) -> int:
    rates = RateParams(args.mu1, args.mu2)
    det = DetectorParams(args.eta, args.deadtime / args.mu2)
    kind = detection_model(rates, det)
    w = WindowSpec(args.window)
    kw = {"method": args.method, "node_count": args.nodes}
    if args.precision is not None:
        kw["precision_target"] = args.precision
    cfg = InversionConfig.for_kind(kind, **kw)
    try:
        dist = counting_distribution(kind, w, args.n_max, cfg)
    except InversionError as exc:
        if exc.index is None:
            raise
        msg = str(exc).replace(f"at index {exc.index}", f"at n={exc.index}")
        raise InversionError(msg, exc.residual, exc.t, exc.index) from None
    ref_mean, ref_var = moments_by_inversion(kind, w, cfg)
    trailer = [
        ("mass", _fmt(dist.probs.sum())),
        ("tail_mass", _fmt(dist.tail_mass)),
        ("mean", _fmt(dist.mean())),
        ("variance", _fmt(dist.variance())),
        ("mean_residual", _fmt(dist.mean() - ref_mean)),
        ("variance_residual", _fmt(dist.variance() - ref_var)),
    ]
    if isinstance(kind, IdealCycle):
        trailer += [("mean_residual_closed_form", _fmt(dist.mean() - mean_finite(rates, w))),
                    ("variance_residual_closed_form", _fmt(dist.variance() - var_finite(rates, w)))]
    meta = [("command", "counting-dist"), ("version", __version__), ("mu1", _fmt(args.mu1)),
            ("mu2", _fmt(args.mu2)), ("eta", _fmt(args.eta)),
            ("deadtime_over_tau", _fmt(args.deadtime)), ("window", _fmt(args.window)),
            ("method", cfg.method), ("precision_target", _fmt(cfg.precision_target))]
    rows = zip(range(len(dist.probs)), dist.probs)
    write_output(render_csv(["n", "probability"], rows, meta, trailer), args.output)
    return EXIT_OK


def cmd_saturation(args) -> int:
    if args.powers:
        powers = np.asarray(args.powers, dtype=float)
    elif args.log:
        if args.power_min <= 0:
            raise UsageError("--log needs a positive --power-min")
        powers = np.logspace(np.log10(args.power_min), np.log10(args.power_max), args.points)
    else:
        powers = np.linspace(args.power_min, args.power_max, args.points)
    if args.points < 1 or np.any(np.diff(powers) <= 0):
        raise UsageError("powers must be strictly increasing")
    results = [saturation(PumpParams(args.alpha, float(p), args.tau)) for p in powers]
    head = results[0]
    meta = [("command", "saturation"), ("version", __version__), ("alpha", _fmt(args.alpha)),
            ("tau", _fmt(args.tau)), ("rate_saturation", _fmt(head.rate_saturation)),
            ("power_saturation", _fmt(head.power_saturation))]
    rows = ((p, r.rate_asymptotic) for p, r in zip(powers, results))
    write_output(render_csv(["power", "rate_asymptotic"], rows, meta), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    rates = RateParams(args.mu1, args.mu2)
    det = DetectorParams(args.eta, args.deadtime / args.mu2)
    cfg = SimConfig(rates, WindowSpec(args.window), args.windows, det, args.seed, args.mode,
                    windows_per_trace=args.windows_per_trace, burn_in=args.burn_in,
                    n_jobs=args.jobs)
    trace = simulate(cfg)
    st = window_stats(trace, cfg)
    if args.trace_out:
        write_trace(trace, args.trace_out, {"mode": cfg.mode.value, "seed": cfg.seed,
                                            "window": args.window, "windows": args.windows})
    columns = ["mean", "variance", "fano", "fano_stderr", "mean_stderr", "variance_stderr",
               "total_detections"]
    row = [st.mean, st.variance, np.nan if st.fano is None else st.fano,
           np.nan if st.fano_stderr is None else st.fano_stderr,
           st.mean_stderr, st.variance_stderr, st.total_detections]
    meta = [("command", "simulate"), ("version", __version__), ("mode", cfg.mode.value),
            ("seed", cfg.seed), ("windows", cfg.window_count), ("window", _fmt(args.window))]
    trailer = [("fano_note", st.fano_reason)] if st.fano_reason else []
    write_output(render_csv(columns, [row], meta, trailer), args.output)
    return EXIT_OK


def cmd_deadtime_report(args) -> int:
    rows = deadtime_mode_report(args.ratios, args.deadtimes, args.eta, args.mu2, args.windows,
                                args.intervals_per_window, args.seed, args.jobs)
    columns = list(rows[0])
    meta = [("command", "deadtime-report"), ("version", __version__), ("eta", _fmt(args.eta)),
            ("windows", args.windows), ("seed", args.seed)]
    write_output(render_csv(columns, ([r[c] for c in columns] for r in rows), meta), args.output)
    return EXIT_OK


def cmd_validate(args) -> int:
    results = run_validation(quick=args.quick, seed=args.seed)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VALIDATION if failed else EXIT_OK


# parser --------------------------------------------------------------------

def _common(p, seed=False):
    p.add_argument("--config", help="JSON file whose keys mirror the long flag names")
    p.add_argument("-o", "--output", default="-", help="output CSV path ('-' for stdout)")
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed (default: ${SEED_ENV} or 0)")


def _physics(p, eta=1.0):
    p.add_argument("--mu1", type=float, default=1.0, help="absorption rate")
    p.add_argument("--mu2", type=float, default=1.0, help="emission rate 1/tau")
    p.add_argument("--eta", type=float, default=eta, help="detection efficiency in (0, 1]")
    p.add_argument("--deadtime", type=float, default=0.0, help="dead time in units of tau")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spsstats", description="Photon-counting statistics of a CW-pumped two-level emitter.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fano-curve", help="long-window Fano factor versus mu1/mu2")
    _common(p, seed=True)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--deadtime", type=float, default=0.0, help="dead time in units of tau")
    p.add_argument("--mu2", type=float, default=1.0)
    p.add_argument("--ratio-min", type=float, default=1e-3)
    p.add_argument("--ratio-max", type=float, default=1e3)
    p.add_argument("--points", type=int, default=121)
    p.add_argument("--mc", action="store_true", help="add Monte Carlo columns")
    p.add_argument("--mode", choices=["renewal", "physical"], default="renewal")
    p.add_argument("--windows", type=int, default=10_000)
    p.add_argument("--intervals-per-window", type=float, default=100.0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_fano_curve)

    p = sub.add_parser("counting-dist", help="P_T(n) by numerical Laplace inversion")
    _common(p)
    _physics(p)
    p.add_argument("--window", type=float, default=1.0, help="window length T")
    p.add_argument("--n-max", type=int, default=40)
    p.add_argument("--method", choices=["euler", "talbot"], default="euler")
    p.add_argument("--nodes", type=int, default=64)
    p.add_argument("--precision", type=float, default=None)
    p.set_defaults(func=cmd_counting_dist)

    p = sub.add_parser("saturation", help="emission rate versus pump power")
    _common(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--power-min", type=float, default=0.0)
    p.add_argument("--power-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--log", action="store_true", help="logarithmic power grid")
    p.add_argument("--powers", type=float, nargs="+", help="explicit power values")
    p.set_defaults(func=cmd_saturation)

    p = sub.add_parser("simulate", help="Monte Carlo window statistics (optional trace export)")
    _common(p, seed=True)
    _physics(p)
    p.add_argument("--window", type=float, default=100.0)
    p.add_argument("--windows", type=int, default=10_000)
    p.add_argument("--mode", choices=["renewal", "physical"], default="physical")
    p.add_argument("--windows-per-trace", type=int, default=None)
    p.add_argument("--burn-in", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--trace-out", help="write detection timestamps to this file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("deadtime-report", help="compare physical and renewal-model dead time")
    _common(p, seed=True)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--mu2", type=float, default=1.0)
    p.add_argument("--ratios", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    p.add_argument("--deadtimes", type=float, nargs="+", default=[0.1, 0.5, 1.0])
    p.add_argument("--windows", type=int, default=10_000)
    p.add_argument("--intervals-per-window", type=float, default=100.0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_deadtime_report)

    p = sub.add_parser("validate", help="run the cross-route consistency checks")
    p.add_argument("--quick", action="store_true", help="smaller Monte Carlo samples")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_validate)
    return parser


def _apply_config(parser, argv, args):
    """Reparse with values from ``--config`` as defaults so explicit flags still win."""
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    known = set(vars(args))
    defaults = {}
    for key, value in data.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in known or dest in ("func", "command", "config"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        defaults[dest] = value
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config(parser, argv, args)
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        return args.func(args)
    except (InversionError, SimulationError, FloatingPointError) as exc:
        print(f"spsstats: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"spsstats: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
