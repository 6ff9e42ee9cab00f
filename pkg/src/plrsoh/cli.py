"""Command-line entry point: ``plrsoh <subcommand> ...``.

Every failure prints one JSON object ``{"error": ..., "message": ...}`` to
stderr and exits with status 2.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .data import SECONDS_PER_DAY, ingest_csv, try_true_eol
from .errors import DataError, PlrsohError
from .featurize import (PercentileBounds, compute_bounds, export_features_csv,
                        featurize, featurize_many, read_features_csv)
from .forecast import forecast_cell, score
from .gpr import GprModel
from .harness import (METHODS, SweepConfig, TrialConfig, TrialReport, fit_method, report,
                      run_sweep, run_trial, write_sweep)
from .regress import PiecewiseModel
from .select import SelectionConfig, select_features
from .synthetic import SyntheticSpec, export_synthetic, generate_synthetic

# CLI flag -> TrialConfig field
TRIAL_FLAGS = {
    "method": "method", "repeats": "n_repeats", "train_cells": "n_train_cells",
    "features": "n_features", "rho_max": "rho_max", "beta_improv": "beta_improv",
    "max_models": "max_models", "seed": "rng_seed", "interval_hours": "interval_hours",
    "bounds_from": "bounds_from", "workers": "workers",
}


def _add_data_args(p):
    p.add_argument("--samples", help="samples CSV (cell_id,time_s,current_a,voltage_v,temperature_c)")
    p.add_argument("--capacity", help="capacity CSV; defaults to the companion of --samples")


def _add_model_args(p, with_trial=False):
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--features", type=int, help="number of features to select")
    p.add_argument("--rho-max", type=float)
    p.add_argument("--beta-improv", type=float)
    p.add_argument("--max-models", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--interval-hours", type=float)
    if with_trial:
        p.add_argument("--config", help="JSON file with TrialConfig fields; flags override it")
        p.add_argument("--repeats", type=int)
        p.add_argument("--train-cells", type=int)
        p.add_argument("--bounds-from", choices=("train", "all"))
        p.add_argument("--workers", type=int)
        p.add_argument("--synthetic-cells", type=int, help="use a synthetic corpus of this many cells")
        p.add_argument("--noise", type=float, default=0.05, help="synthetic ΔQ noise std (%% per interval)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plrsoh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--cells", type=int, default=157)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--knee", type=float, nargs=2, default=(0.45, 0.7), metavar=("LO", "HI"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--interval-hours", type=float, default=12.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("featurize", help="export the interval feature matrix")
    _add_data_args(p)
    p.add_argument("--bounds", help="percentile bounds JSON; computed from the data if absent")
    p.add_argument("--bounds-out", help="write the bounds used to this JSON file")
    p.add_argument("--interval-hours", type=float, default=12.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select", help="rank and select features")
    p.add_argument("--input", required=True, help="feature CSV from 'featurize'")
    p.add_argument("--features", type=int, default=5)
    p.add_argument("--rho-max", type=float, default=0.85)
    p.add_argument("--out", help="write the selection JSON here instead of stdout")

    p = sub.add_parser("fit", help="fit a model on every cell of a corpus")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", required=True, help="model JSON")

    p = sub.add_parser("forecast", help="forecast and score cells with a fitted model")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="per-cell results CSV")

    p = sub.add_parser("trial", help="repeated train/test trial")
    _add_data_args(p)
    _add_model_args(p, with_trial=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="repeat trials over values of one parameter")
    _add_data_args(p)
    _add_model_args(p, with_trial=True)
    p.add_argument("--param", required=True, help="TrialConfig field to sweep")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="tables and histograms from trial outputs")
    p.add_argument("--inputs", nargs="+", required=True, help="trial output directories")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--plots", action="store_true", help="also write PNG plots (needs matplotlib)")
    p.add_argument("--out", required=True)
    return parser


def _trial_config(args) -> TrialConfig:
    base = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = TrialConfig.from_dict(base)
    over = {field: getattr(args, flag) for flag, field in TRIAL_FLAGS.items()
            if getattr(args, flag, None) is not None}
    if args.samples:
        over["samples_path"] = args.samples
        over["capacity_path"] = args.capacity
    elif getattr(args, "synthetic_cells", None):
        over["synthetic"] = SyntheticSpec(n_cells=args.synthetic_cells, noise_std=args.noise,
                                          rng_seed=over.get("rng_seed", cfg.rng_seed))
    cfg = replace(cfg, **over)
    if cfg.samples_path is None and cfg.synthetic is None:
        raise DataError("give --samples, --synthetic-cells or a config with a data source")
    return cfg


def _load(args):
    if not args.samples:
        raise DataError("--samples is required")
    return ingest_csv(args.samples, args.capacity)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_synth(args):
    spec = SyntheticSpec(n_cells=args.cells, noise_std=args.noise, knee_onset_range=tuple(args.knee),
                         rng_seed=args.seed, interval_hours=args.interval_hours)
    cells, truth = generate_synthetic(spec)
    export_synthetic(cells, truth, args.out)
    _emit({"cells": len(cells), "out": args.out})


def cmd_featurize(args):
    cells = _load(args)
    if args.bounds:
        bounds = PercentileBounds.from_dict(json.loads(Path(args.bounds).read_text(encoding="utf-8")))
    else:
        bounds = compute_bounds(cells)
    table = featurize_many(cells, bounds, args.interval_hours)
    export_features_csv(table, args.out)
    if args.bounds_out:
        Path(args.bounds_out).write_text(json.dumps(bounds.to_dict(), indent=2), encoding="utf-8")
    _emit({"rows": len(table), "out": args.out})


def cmd_select(args):
    table = read_features_csv(args.input)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        res = select_features(table.features, table.delta_q, SelectionConfig(args.features, args.rho_max))
    if args.out:
        Path(args.out).write_text(res.to_json(), encoding="utf-8")
        _emit({"selected": res.names, "out": args.out})
    else:
        print(res.to_json())


def cmd_fit(args):
    cells = _load(args)
    over = {field: getattr(args, flag) for flag, field in TRIAL_FLAGS.items()
            if getattr(args, flag, None) is not None}
    cfg = TrialConfig(**over)
    bounds = compute_bounds(cells)
    table = featurize_many(cells, bounds, cfg.interval_hours)
    fitted = fit_method(table, bounds, cfg, cfg.rng_seed)
    d = fitted.model.to_dict()
    d["method"] = cfg.method
    d["bounds"] = bounds.to_dict()
    d["interval_hours"] = cfg.interval_hours
    Path(args.out).write_text(json.dumps(d, indent=2), encoding="utf-8")
    _emit({"method": cfg.method, "selected": fitted.selection.names,
           "n_models": fitted.n_models, "out": args.out})


def load_model(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    bounds = PercentileBounds.from_dict(d["bounds"])
    model = GprModel.from_dict(d) if d.get("method") == "gpr" else PiecewiseModel.from_dict(d)
    return model, bounds, float(d.get("interval_hours", 12.0))


def cmd_forecast(args):
    cells = _load(args)
    model, bounds, hours = load_model(args.model)

    n = 0
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cell_id", "rmse_dq", "rmse_capacity", "eol_error", "eol_predicted",
                    "eol_observed", "unreachable", "extrapolated"))
        for cell in cells:
            table = featurize(cell, bounds, hours)
            if len(table) == 0:
                continue
            fc = forecast_cell(model, table, float(table.q_start[0]), float(cell.time[0]) / SECONDS_PER_DAY)
            obs = try_true_eol(cell)
            m = score(fc, table, obs)
            w.writerow((cell.cell_id, repr(m.rmse_dq), repr(m.rmse_capacity), repr(float(m.eol_error)),
                        repr(float(fc.eol_days)), repr(float("nan") if obs is None else float(obs)),
                        int(fc.unreachable), int(fc.extrapolated)))
            n += 1
    _emit({"cells": n, "out": args.out})


def cmd_trial(args):
    cfg = _trial_config(args)
    rep = run_trial(cfg)
    rep.write(args.out)
    _emit({"rows": len(rep.rows), "summary": rep.summary.to_dict(), "out": args.out})


def _coerce(values: str, parameter: str, base: TrialConfig):
    kind = type(getattr(base, parameter))
    out = []
    for v in values.split(","):
        v = v.strip()
        out.append(v if kind is str else kind(float(v)) if kind is int else kind(v))
    return out


def cmd_sweep(args):
    base = _trial_config(args)
    known = {f.name for f in fields(TrialConfig)}
    if args.param not in known:
        raise ValueError(f"unknown sweep parameter {args.param!r}")
    values = _coerce(args.values, args.param, base)
    cfg = SweepConfig(base, args.param, tuple(values),
                      args.repeats if args.repeats is not None else 20)
    results = run_sweep(cfg)
    write_sweep(results, args.param, args.out)
    _emit({"values": [str(v) for v in values], "out": args.out})


def cmd_report(args):
    reports = [TrialReport.read(p) for p in args.inputs]
    written = report(reports, args.out, bins=args.bins, plots=args.plots)
    _emit({"written": [str(p) for p in written]})


COMMANDS = {"synth": cmd_synth, "featurize": cmd_featurize, "select": cmd_select, "fit": cmd_fit,
            "forecast": cmd_forecast, "trial": cmd_trial, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with np.errstate(all="ignore"):
            COMMANDS[args.command](args)
    except (PlrsohError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
