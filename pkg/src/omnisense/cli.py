"""Command-line entry point: omnisense {trace,calibrate,synthesize,localize,evaluate,compare}.

Lengths on the command line are in mm; mirror geometry is converted to cm
internally. Every subcommand accepts ``--config FILE.json`` whose keys are
the long option names (dashes or underscores); explicit flags win.
Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .calibration import calibrate
from .datasets import LightPath, read_sweep_csv, sweep_to_csv, synthesize_sweep
from .errors import InputError, NumericalError
from .evaluation import MAEReport, closed_loop_eval, compare_designs
from .geometry import (LED_HALF_ANGLE_DEG, ProfileKind, default_receiver_height, load_profile,
                       trace_emission_fan, vertical_absorbers)
from .grid import SweepSpec
from .io import atomic_write_text
from .localization import localize
from .reference import REFERENCE_MODELS
from .response import N_PD, Design, NoiseSpec, load_model, save_model

log = logging.getLogger("omnisense")

MM_PER_CM = 10.0


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _emit(text: str, out) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _model_from(arg: str):
    """Model JSON path, or ``reference:vertical`` / ``reference:flower``."""
    if arg.startswith("reference:"):
        name = arg.split(":", 1)[1]
        try:
            return REFERENCE_MODELS[Design(name)]()
        except ValueError:
            raise InputError(f"unknown reference model {name!r}") from None
    return load_model(arg)


def _grid(args) -> SweepSpec:
    return SweepSpec((args.d_min, args.d_max), args.d_step, args.arc_step)


def _noise(args):
    return NoiseSpec(args.noise, args.seed) if args.noise else None


# trace

def cmd_trace(args) -> int:
    profile = load_profile(args.profile)
    source = None if args.source_z is None else (0.0, args.source_z / MM_PER_CM)
    absorbers = ()
    if profile.kind is ProfileKind.VERTICAL_STAGE1 and not args.no_absorbers:
        absorbers = vertical_absorbers()
    fan = trace_emission_fan(profile, args.rays, args.half_angle, source, absorbers)
    z = (args.receiver_z / MM_PER_CM if args.receiver_z is not None
         else default_receiver_height(profile.kind))
    report = {
        "profile": profile.kind.value,
        "n_rays": fan.n_rays,
        "half_angle_deg": args.half_angle,
        "source_mm": [c * MM_PER_CM for c in fan.source],
        "receiver_z_mm": z * MM_PER_CM,
        "n_hit": int(np.count_nonzero(fan.hit)),
        "n_escaped": int(np.count_nonzero(fan.escaped)),
        "contiguous": fan.is_contiguous(z),
    }
    try:
        lo, hi = fan.radial_range_at_height(z)
        report["span_mm"] = [lo * MM_PER_CM, hi * MM_PER_CM]
    except NumericalError as exc:
        report["span_mm"] = None
        report["span_error"] = str(exc)

    rows = ["ray,point,x_mm,z_mm"]
    for i, line in enumerate(fan.polylines(z)):
        for j, (x, zz) in enumerate(line):
            rows.append(f"{i},{j},{float(x) * MM_PER_CM!r},{float(zz) * MM_PER_CM!r}")
    atomic_write_text(args.out, "\n".join(rows) + "\n")
    _emit(_json(report), args.report)
    return 0


# calibrate

def _load_sweeps(args):
    free = post = None
    for p in [args.sweeps] + ([args.post] if args.post else []):
        for ds in read_sweep_csv(p, args.d_step, args.arc_step):
            if ds.path is LightPath.FREE and free is None:
                free = ds
            elif ds.path is LightPath.POST and post is None:
                post = ds
    if free is None:
        raise InputError("no free-path records found")
    return free, post


def cmd_calibrate(args) -> int:
    free, post = _load_sweeps(args)
    model, report = calibrate(free, post, args.bins)
    for w in report.warnings:
        log.warning(w)
    save_model(model, args.out)
    _emit(report.to_json(), args.report)
    return 0


# synthesize

def cmd_synthesize(args) -> int:
    model = _model_from(args.model)
    spec = _grid(args)
    if not spec.within(model.domain):
        raise InputError(f"grid {spec.d_range} lies outside model domain {model.domain}")
    rng = np.random.default_rng(args.seed)
    noise = _noise(args)
    paths = [LightPath.FREE, LightPath.POST] if args.path == "both" else [LightPath(args.path)]
    datasets = [synthesize_sweep(model, spec, noise, rng, p, args.rotation) for p in paths]
    atomic_write_text(args.out, sweep_to_csv(datasets))
    return 0


# localize

def _parse_readouts(text_or_path: str):
    """Return (signals N x 8, truths or None per row)."""
    p = Path(text_or_path)
    if not p.is_file():
        try:
            vals = [float(v) for v in text_or_path.split(",")]
        except ValueError:
            raise InputError(f"not a file or {N_PD} comma-separated numbers: {text_or_path!r}") from None
        if len(vals) != N_PD:
            raise InputError(f"a readout has {N_PD} signals, got {len(vals)}")
        return np.array([vals]), [None]
    with p.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{p}: no readouts")
    cols = [f"S{i}" for i in range(N_PD)]
    head = [c.strip() for c in rows[0]]
    try:
        if all(c in head for c in cols):
            idx = [head.index(c) for c in cols]
            has_truth = "d_mm" in head and "theta_deg" in head
            signals, truths = [], []
            for r in rows[1:]:
                signals.append([float(r[i]) for i in idx])
                truths.append((float(r[head.index("d_mm")]), float(r[head.index("theta_deg")])) if has_truth else None)
        else:
            signals = [[float(c) for c in r] for r in rows]
            truths = [None] * len(signals)
    except (ValueError, IndexError) as exc:
        raise InputError(f"{p}: {exc}") from exc
    signals = np.asarray(signals, dtype=float)
    if signals.ndim != 2 or signals.shape[1] != N_PD:
        raise InputError(f"{p}: every readout needs {N_PD} signals")
    if not np.all(np.isfinite(signals)):
        raise InputError(f"{p}: readouts must be finite")
    return signals, truths


def cmd_localize(args) -> int:
    model = _model_from(args.model)
    signals, truths = _parse_readouts(args.readout)
    out = []
    for s, truth in zip(signals, truths):
        rec = localize(s, model).to_dict()
        if truth is not None:
            rec["truth"] = {"d_mm": truth[0], "theta_deg": truth[1]}
        out.append(rec)
    inline = not Path(args.readout).is_file()
    _emit(_json(out[0] if inline else out), args.out)
    return 0


# evaluate / compare

def cmd_evaluate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = _grid(args)
    noise = _noise(args)
    if len(args.model) > 2:
        raise InputError("evaluate takes one or two models")
    if args.truth and len(args.truth) != len(args.model):
        raise InputError("--truth needs one entry per --model")
    reports = []
    for k, arg in enumerate(args.model):
        model = _model_from(arg)
        truth = _model_from(args.truth[k]) if args.truth else None
        rep = closed_loop_eval(model, noise, spec, args.seed, truth_model=truth)
        rep.provenance["model"] = arg
        name = rep.design.value if rep.design is not None else f"model{k}"
        if any(r.design == rep.design for r in reports):
            name = f"{name}{k}"
        atomic_write_text(out_dir / f"mae_{name}.csv", rep.to_csv())
        atomic_write_text(out_dir / f"mae_{name}.json", rep.to_json() + "\n")
        reports.append(rep)
    if len(reports) == 2:
        summary = compare_designs(*reports)
        atomic_write_text(out_dir / "comparison.json", summary.to_json() + "\n")
        atomic_write_text(out_dir / "comparison.csv", summary.to_csv())
        print(summary.statement())
    return 0


def _read_report(path) -> MAEReport:
    try:
        return MAEReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise InputError(f"report not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def cmd_compare(args) -> int:
    summary = compare_designs(_read_report(args.a), _read_report(args.b))
    _emit(summary.to_json() + "\n", args.out)
    if args.csv:
        atomic_write_text(args.csv, summary.to_csv())
    return 0


# parser

def _add_grid(p):
    p.add_argument("--d-min", type=float, default=70.0, help="mm")
    p.add_argument("--d-max", type=float, default=450.0, help="mm")
    p.add_argument("--d-step", type=float, default=10.0, help="mm")
    p.add_argument("--arc-step", type=float, default=10.0, help="mm of arc")


def _add_noise(p):
    p.add_argument("--noise", type=float, default=0.0, help="sigma as a fraction of the model's peak signal")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omnisense", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="trace an LED emission fan off a mirror profile")
    p.add_argument("--profile", required=True, help="vertical-stage1, vertical-stage2, flower, or a profile JSON")
    p.add_argument("--half-angle", type=float, default=LED_HALF_ANGLE_DEG, help="degrees")
    p.add_argument("--rays", type=int, default=64)
    p.add_argument("--source-z", type=float, default=None, help="LED height in mm (default: cone edge at the rim)")
    p.add_argument("--receiver-z", type=float, default=None, help="receiver height in mm")
    p.add_argument("--no-absorbers", action="store_true", help="ignore the focusing stage when tracing stage 1")
    p.add_argument("--out", required=True, help="polyline CSV")
    p.add_argument("--report", default=None, help="fan report JSON (default: stdout)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("calibrate", help="fit a response model from sweep CSVs")
    p.add_argument("--sweeps", required=True, help="sweep CSV (free path, optionally with post rows)")
    p.add_argument("--post", default=None, help="separate post-path sweep CSV")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--d-step", type=float, default=10.0)
    p.add_argument("--arc-step", type=float, default=10.0)
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--report", default=None, help="calibration report JSON (default: stdout)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synthesize", help="generate a sweep CSV from a model")
    p.add_argument("--model", required=True, help="model JSON or reference:vertical / reference:flower")
    _add_grid(p)
    _add_noise(p)
    p.add_argument("--path", choices=["free", "post", "both"], default="both")
    p.add_argument("--rotation", type=float, default=0.0, help="sensor heading offset in degrees")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("localize", help="estimate (d, theta) from readouts")
    p.add_argument("--model", required=True)
    p.add_argument("--readout", required=True, help="8 comma-separated signals or a CSV of readouts")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="closed-loop MAE per distance for one or two models")
    p.add_argument("--model", required=True, nargs="+", help="one or two models")
    p.add_argument("--truth", nargs="+", default=None, help="models that generate the readouts, one per --model")
    _add_grid(p)
    _add_noise(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare two MAE report JSONs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_compare)

    for sp in sub.choices.values():
        sp.add_argument("--config", default=None, help="JSON file of option defaults")
    return parser


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _config_path(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((t for t in argv if t in choices), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    subparser = choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for k, v in cfg.items():
        dest = k.replace("-", "_")
        if dest not in actions or dest in ("help", "config"):
            raise InputError(f"unknown config key {k!r} for {command}")
        defaults[dest] = v
        # Required options may come from the config instead of the command line.
        actions[dest].required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
