"""Command-line front end: ``qpos <subcommand> [flags]``.

Every subcommand writes data (CSV or JSON lines) to ``--out`` or stdout.
Output depends only on the flags and ``--seed``; ``QPOS_THREADS`` changes
speed, never bytes. Floats in CSV are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .losschannel import beam_splitter_check, kraus_operators, apply_loss, random_density_matrix
from .montecarlo import analytic_std, estimate, simulate, stream
from .protocol import (
    DETECTED,
    INCONCLUSIVE,
    CLEAN,
    EveConfig,
    ProtocolInconclusive,
    run_protocol_one,
    run_protocol_two,
    session_seed_stream,
)
from .spectrum import GroupSpectrum, time_std
from .states import (
    GroupEntangled,
    classify_region,
    gain_lambda,
    lossless_accuracy,
    lossy_accuracy,
    make_family,
    region_accuracies,
    threshold_eta,
)

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class UsageError(ValueError):
    pass


# -- sweep grids -----------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    points: int
    scale: str = "linear"
    integer: bool = False

    def __post_init__(self):
        if self.points < 2:
            raise UsageError(f"axis {self.name} needs at least 2 points")
        if self.scale not in ("linear", "log"):
            raise UsageError(f"axis {self.name}: scale must be linear or log")
        if self.max < self.min:
            raise UsageError(f"axis {self.name}: max < min")
        if self.scale == "log" and self.min <= 0:
            raise UsageError(f"axis {self.name}: log scale needs positive bounds")

    def values(self) -> list:
        if self.scale == "log":
            v = np.geomspace(self.min, self.max, self.points)
        else:
            v = np.linspace(self.min, self.max, self.points)
        if self.integer:
            return sorted({int(round(x)) for x in v})
        return [float(x) for x in v]


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian product of axes, iterated row-major (first axis outermost)."""

    axes: tuple
    fixed: dict = field(default_factory=dict)

    def __iter__(self):
        def rec(i, acc):
            if i == len(self.axes):
                yield {**self.fixed, **acc}
                return
            ax = self.axes[i]
            for v in ax.values():
                yield from rec(i + 1, {**acc, ax.name: v})

        return rec(0, {})


def _eta_axis(args) -> Axis:
    if not (0 < args.eta_min <= args.eta_max <= 1):
        raise UsageError("eta bounds must satisfy 0 < eta-min <= eta-max <= 1")
    return Axis("eta", args.eta_min, args.eta_max, args.eta_points, args.eta_scale)


def _M_values(args, multiple_of: int = 1) -> list:
    if args.M_min < 1 or args.M_max < args.M_min:
        raise UsageError("M bounds must satisfy 1 <= M-min <= M-max")
    step = args.M_step or multiple_of
    start = args.M_min + (-args.M_min) % multiple_of
    vals = [m for m in range(start, args.M_max + 1, step) if m % multiple_of == 0]
    if len(vals) < 2:
        raise UsageError("M axis needs at least 2 points")
    return vals


# -- formatting ------------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        return None if math.isnan(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def render(rows: list[dict], columns: list[str], kind: str) -> str:
    if kind == "json":
        return "".join(json.dumps({c: _jsonable(r.get(c)) for c in columns}) + "\n" for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


# -- commands --------------------------------------------------------------

ACCURACY_COLUMNS = ["family", "M", "N", "N_mean", "Q", "G", "K", "eta", "dtau", "r",
                    "delta_t_lossless", "delta_t_per_run", "delta_t_r_runs", "usable_run_fraction"]


def _family(args, M):
    spec = GroupSpectrum.from_ratio(args.ratio, args.delta_Omega)
    try:
        return make_family(args.family, M=M, N=args.N, N_mean=args.N_mean, Q=args.Q,
                           G=args.G, K=args.K, spec=spec)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _family_row(f, args):
    row = {"family": args.family, "M": f.M, "N": getattr(f, "N", None),
           "N_mean": getattr(f, "N_mean", None), "Q": getattr(f, "Q", None),
           "G": getattr(f, "G", None), "K": getattr(f, "K", None)}
    return row


def cmd_accuracy(args) -> list[dict]:
    rows = []
    for M in args.M or [None]:
        f = _family(args, M)
        dtau = time_std(f.spec) if isinstance(f, GroupEntangled) else args.dtau
        for eta in args.eta:
            try:
                rep = lossy_accuracy(f, eta, dtau, args.r)
            except (TypeError, ValueError) as exc:
                raise UsageError(str(exc)) from exc
            rows.append({**_family_row(f, args), "eta": eta, "dtau": dtau, "r": args.r,
                         "delta_t_lossless": lossless_accuracy(f, dtau),
                         "delta_t_per_run": rep.delta_t_per_run,
                         "delta_t_r_runs": rep.delta_t_r_runs,
                         "usable_run_fraction": rep.usable_run_fraction})
    return rows


REGION_COLUMNS = ["M", "eta", "lambda", "threshold", "region_label", "G", "dt_en", "dt_G", "dt_un"]


def cmd_region_map(args) -> list[dict]:
    if args.ratio <= 0:
        raise UsageError("ratio must be positive")
    rows = []
    grid = SweepGrid((_eta_axis(args),))
    for M in _M_values(args, args.K):
        for p in grid:
            eta = p["eta"]
            acc = region_accuracies(M, eta, args.K, args.ratio)
            rows.append({"M": M, "eta": eta, "lambda": gain_lambda(M, eta),
                         "threshold": threshold_eta(M) if M >= 2 else math.nan,
                         "region_label": classify_region(M, eta, args.K, args.ratio),
                         "G": M // args.K, "dt_en": acc["en"], "dt_G": acc["G"], "dt_un": acc["un"]})
    return rows


GAIN_COLUMNS = ["M", "eta", "lambda", "threshold", "entangled_wins"]


def cmd_gain_surface(args) -> list[dict]:
    rows = []
    grid = SweepGrid((_eta_axis(args),))
    for M in _M_values(args):
        for p in grid:
            lam = gain_lambda(M, p["eta"])
            rows.append({"M": M, "eta": p["eta"], "lambda": lam,
                         "threshold": threshold_eta(M) if M >= 2 else math.nan,
                         "entangled_wins": lam > 1.0})
    return rows


MC_COLUMNS = ["family", "M", "N", "Q", "G", "K", "eta", "runs", "runs_used", "mean",
              "std_of_mean", "analytic_std", "empirical_std"]


def cmd_montecarlo(args) -> list[dict]:
    rows = []
    kw = {"weighting": args.weighting} if args.family == "partial" else {}
    for i, M in enumerate(args.M or [None]):
        f = _family(args, M)
        dtau = time_std(f.spec) if isinstance(f, GroupEntangled) else args.dtau
        for j, eta in enumerate(args.eta):
            try:
                batch = simulate(f, eta, args.runs, args.seed, dtau, args.true_offset,
                                 key=(i, j), **kw)
                est = estimate(batch)
            except (TypeError, ValueError) as exc:
                raise UsageError(str(exc)) from exc
            rows.append({**_family_row(f, args), "eta": eta, "runs": args.runs,
                         "runs_used": est.runs_used, "mean": est.mean,
                         "std_of_mean": est.std_of_mean,
                         "analytic_std": analytic_std(f, eta, dtau, args.weighting),
                         "empirical_std": est.run_std})
    return rows


KRAUS_COLUMNS = ["eta", "dim", "max_photons", "bs_deviation", "completeness_error", "trace_error"]


def cmd_kraus_verify(args) -> list[dict]:
    if args.dim < 2:
        raise UsageError("dim must be >= 2")
    max_photons = args.dim - 2 if args.max_photons is None else args.max_photons
    rows = []
    for i, eta in enumerate(args.eta):
        try:
            ks = kraus_operators(eta, args.dim)
            dev = beam_splitter_check(eta, args.dim, max_photons)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        comp = float(np.abs(ks.completeness() - np.eye(args.dim)).max())
        rng = stream(args.seed, 0xC9, i)
        tr = max(abs(apply_loss(random_density_matrix(args.dim, rng), ks).trace() - 1.0)
                 for _ in range(args.samples))
        rows.append({"eta": eta, "dim": args.dim, "max_photons": max_photons,
                     "bs_deviation": dev, "completeness_error": comp, "trace_error": tr})
    return rows


def cmd_protocol(args) -> str:
    if args.mode == "one":
        try:
            res = run_protocol_one(args.M, args.eta, args.dtau, args.distance,
                                   stream(args.seed, 0x01), r=args.r)
        except ProtocolInconclusive as exc:
            return json.dumps({"type": "summary", "verdict": INCONCLUSIVE, "reason": str(exc)}) + "\n"
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        lines = []
        for k in range(len(res.per_copy)):
            b = res.bob_broadcasts[k]
            lost = bool(np.isnan(res.per_copy[k]))
            lines.append(json.dumps({"type": "copy", "index": k, "lost": lost,
                                     "bob_broadcast": None if lost else b.tolist()}, sort_keys=True))
        per_copy = res.per_copy[~np.isnan(res.per_copy)]
        summary = {"type": "summary", "mode": "one", "M": args.M, "r": args.r, "eta": args.eta,
                   "estimate": res.estimate.as_dict(),
                   "per_copy_std": float(np.std(per_copy, ddof=1)) if per_copy.size > 1 else None}
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"

    try:
        eve = EveConfig(args.eve, args.eve_fraction)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = []
    counts = {CLEAN: 0, DETECTED: 0, INCONCLUSIVE: 0}
    predicted = 0.0
    for s in range(args.sessions):
        try:
            tr = run_protocol_two(args.M, args.r, args.eta, args.dtau, args.freq_bin, eve,
                                  session_seed_stream(args.seed, s), args.distance)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        counts[tr.verdict] += 1
        if tr.verdict != INCONCLUSIVE:
            predicted += tr.detection_probability
        if args.sessions == 1:
            out.append(tr.to_jsonl())
        else:
            out.append(json.dumps({"type": "session", "session": s, **tr.summary()}, sort_keys=True) + "\n")
    if args.sessions > 1:
        out.append(json.dumps({"type": "aggregate", "sessions": args.sessions, **counts,
                               "expected_detections": predicted}, sort_keys=True) + "\n")
    return "".join(out)


PROTOCOL_ESTIMATES = ("estimate", "alice_estimate", "bob_estimate")


def _protocol_csv(text: str) -> str:
    """Flatten summary/session lines to CSV, one fixed set of columns per mode."""
    rows = [json.loads(line) for line in text.splitlines()]
    rows = [r for r in rows if r.get("type") in ("summary", "session")]
    flat = []
    for r in rows:
        item = {k: v for k, v in r.items() if not isinstance(v, (dict, list)) and k not in PROTOCOL_ESTIMATES}
        for key in PROTOCOL_ESTIMATES:
            if key in r:
                est = r[key] or {}
                item.update({f"{key}_{k}": est.get(k) for k in ("mean", "std_of_mean", "runs_used", "runs_total")})
        flat.append(item)
    cols = sorted({k for r in flat for k in r})
    return render(flat, cols, "csv")


# -- parser ----------------------------------------------------------------

def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--config", help="TOML file with default flag values")


def _add_family(p):
    # required, but checked after any config file has been applied
    p.add_argument("--family", choices=("cl", "en", "un", "partial", "group"))
    p.add_argument("--M", type=int, nargs="+")
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--N-mean", dest="N_mean", type=float)
    p.add_argument("--Q", type=int)
    p.add_argument("--G", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--ratio", type=float, default=2.0, help="delta_omega^2 / delta_Omega^2")
    p.add_argument("--delta-Omega", dest="delta_Omega", type=float, default=1.0)
    p.add_argument("--eta", type=float, nargs="+", default=[1.0])
    p.add_argument("--dtau", type=float, default=1.0)


def _add_grid(p, M_min, M_max, M_step):
    p.add_argument("--M-min", dest="M_min", type=int, default=M_min)
    p.add_argument("--M-max", dest="M_max", type=int, default=M_max)
    p.add_argument("--M-step", dest="M_step", type=int, default=M_step)
    p.add_argument("--eta-min", dest="eta_min", type=float, default=0.05)
    p.add_argument("--eta-max", dest="eta_max", type=float, default=1.0)
    p.add_argument("--eta-points", dest="eta_points", type=int, default=20)
    p.add_argument("--eta-scale", dest="eta_scale", choices=("linear", "log"), default="linear")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpos", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qpos {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("accuracy", help="closed-form accuracies for one state family")
    _add_common(p)
    _add_family(p)
    p.add_argument("--r", type=int, default=1, help="number of runs to pool")

    p = sub.add_parser("region-map", help="which of en / G / un is best over (M, eta)")
    _add_common(p)
    _add_grid(p, 2, 60, None)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--ratio", type=float, default=2.0)

    p = sub.add_parser("gain-surface", help="gain Lambda(M, eta) over a grid")
    _add_common(p)
    _add_grid(p, 1, 30, 1)

    p = sub.add_parser("montecarlo", help="simulate runs and compare with the closed form")
    _add_common(p)
    _add_family(p)
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--true-offset", dest="true_offset", type=float, default=0.0)
    p.add_argument("--weighting", choices=("channel", "inverse_variance"), default="channel")

    p = sub.add_parser("kraus-verify", help="Kraus map vs beam-splitter unitary")
    _add_common(p)
    p.add_argument("--eta", type=float, nargs="+", default=[0.1, 0.36, 0.5, 0.9, 1.0])
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--max-photons", dest="max_photons", type=int)
    p.add_argument("--samples", type=int, default=20, help="random states for the trace check")

    p = sub.add_parser("protocol", help="crypto-positioning protocol sessions")
    _add_common(p)
    p.add_argument("--mode", choices=("one", "two"), default="two")
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--r", type=int, default=100)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--dtau", type=float, default=1.0)
    p.add_argument("--distance", type=float, default=0.0)
    p.add_argument("--freq-bin", dest="freq_bin", type=float)
    p.add_argument("--eve", choices=("none", "measure_time", "measure_frequency"), default="none")
    p.add_argument("--eve-fraction", dest="eve_fraction", type=float, default=1.0)
    p.add_argument("--sessions", type=int, default=1)
    return parser


COMMANDS = {
    "accuracy": (cmd_accuracy, ACCURACY_COLUMNS),
    "region-map": (cmd_region_map, REGION_COLUMNS),
    "gain-surface": (cmd_gain_surface, GAIN_COLUMNS),
    "montecarlo": (cmd_montecarlo, MC_COLUMNS),
    "kraus-verify": (cmd_kraus_verify, KRAUS_COLUMNS),
}


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            cfg = tomllib.load(fh)
        cfg = cfg.get(args.cmd, cfg)
        sub = parser._subparsers._group_actions[0].choices[args.cmd]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()
                            if not isinstance(v, dict)})
        args = parser.parse_args(argv)
    if hasattr(args, "family") and args.family is None:
        sub = parser._subparsers._group_actions[0].choices[args.cmd]
        sub.error("the following arguments are required: --family")
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = _parse(parser, argv)
    try:
        if args.cmd == "protocol":
            text = cmd_protocol(args)
            if args.format == "csv":
                text = _protocol_csv(text)
        else:
            fn, columns = COMMANDS[args.cmd]
            text = render(fn(args), columns, args.format or "csv")
    except (UsageError, ValueError, TypeError) as exc:
        print(f"qpos {args.cmd}: error: {exc}", file=sys.stderr)
        return 2
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
