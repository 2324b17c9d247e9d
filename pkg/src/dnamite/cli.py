"""Command-line interface: simulate, fit, predict, explain, evaluate,
calibrate.

Every failure prints a single machine-parseable line ``error: <message>``
to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import interpret, metrics
from .binning import CATEGORICAL, CONTINUOUS
from .data import ColumnSchema, load_csv, save_csv
from .model import encode_columns
from .persist import ModelFormatError, load_model, save_model
from .synthetic import SyntheticSpec, generate
from .train import TrainConfig, fit_ensemble, parse_pair_list

log = logging.getLogger(__name__)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dnamite", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="log fit progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a synthetic survival dataset")
    sim.add_argument("--out", required=True, help="dataset CSV path")
    sim.add_argument("--n", type=int, default=10000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--censor-rate", type=float, default=0.0)
    sim.add_argument("--noise-sd", type=float, default=0.1)
    sim.add_argument("--horizon", type=float, default=1.0)
    sim.add_argument("--t-max", type=float, default=2.0)
    sim.add_argument("--weights", default="0,0,0,4", help="interaction region weights w00,w01,w10,w11")
    sim.add_argument("--thresholds", default="0.5,0.5", help="interaction thresholds p1,p2")
    sim.add_argument("--noise-features", type=int, default=1)

    fit = sub.add_parser("fit", help="fit a model ensemble")
    fit.add_argument("--data", required=True)
    fit.add_argument("--time-col", required=True)
    fit.add_argument("--event-col", required=True)
    fit.add_argument("--categorical", default="", help="comma-separated categorical columns")
    fit.add_argument("--out", required=True, help="model file path")
    fit.add_argument("--config", default=None, help="flat key=value config file; flags override")
    group = fit.add_mutually_exclusive_group()
    group.add_argument("--pairs", type=int, default=None, help="number of interaction pairs to select (default 0)")
    group.add_argument("--pair-list", default=None, help="explicit pairs j:l,... (0-based feature indices)")
    fit.add_argument("--gamma", type=float, default=None, help="kernel strength (default 1.0)")
    fit.add_argument("--kernel-width", type=int, default=None, help="kernel half-width (default 8)")
    fit.add_argument("--max-bins", type=int, default=None, help="max bins per feature (default 32)")
    fit.add_argument("--embed-dim", type=int, default=None, help="embedding dimension (default 32)")
    fit.add_argument("--hidden-dim", type=int, default=None, help="MLP hidden width (default 32)")
    fit.add_argument("--k-times", type=int, default=None, help="number of evaluation times (default 32)")
    fit.add_argument("--ensemble-b", type=int, default=None, help="ensemble members (default 5)")
    fit.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    fit.add_argument("--lr", type=float, default=None, help="learning rate (default 5e-4)")
    fit.add_argument("--batch-size", type=int, default=None, help="batch size (default 128)")
    fit.add_argument("--max-epochs", type=int, default=None, help="max epochs (default 100)")
    fit.add_argument("--patience", type=int, default=None, help="early-stop patience (default 5)")
    fit.add_argument("--val-frac", type=float, default=None, help="validation fraction (default 0.2)")
    fit.add_argument("--g-floor", type=float, default=None, help="censoring-survival floor (default 0.05)")
    fit.add_argument("--nam-mode", action="store_true", default=None, help="bypass discretization/embedding (raw scaled inputs)")

    pred = sub.add_parser("predict", help="write CIF predictions as CSV")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--times", default="all", help="'all' or one evaluation-time index")
    pred.add_argument("--out", required=True)

    exp = sub.add_parser("explain", help="export shape functions and importances")
    exp.add_argument("--model", required=True)
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--feature", default=None, help="feature name (or 0-based index)")
    exp.add_argument("--pair", default=None, help="pair j:l (names or 0-based indices)")
    exp.add_argument("--all", action="store_true", help="export every main effect and fitted pair")
    exp.add_argument("--time", default="all", help="'all' or one evaluation-time index")
    exp.add_argument("--svg", action="store_true", help="also render step-plot figures")
    exp.add_argument("--data", default=None, help="compute importances on this CSV instead of stored bin counts")
    exp.add_argument("--time-col", default="time")
    exp.add_argument("--event-col", default="event")

    ev = sub.add_parser("evaluate", help="td-AUC, Brier, and C-index on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True, help="metrics CSV; a JSON summary lands next to it")
    ev.add_argument("--time-col", default="time")
    ev.add_argument("--event-col", default="event")

    cal = sub.add_parser("calibrate", help="calibration curve at one evaluation time")
    cal.add_argument("--model", required=True)
    cal.add_argument("--data", required=True)
    cal.add_argument("--time", type=int, required=True, help="evaluation-time index")
    cal.add_argument("--bins", type=int, default=10)
    cal.add_argument("--out", required=True)
    cal.add_argument("--svg", action="store_true", help="also render the calibration figure")
    cal.add_argument("--time-col", default="time")
    cal.add_argument("--event-col", default="event")
    return parser


def _parse_floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise CliError(f"{what} needs {n} comma-separated values")
    return tuple(float(p) for p in parts)


def _cmd_simulate(args) -> int:
    spec = SyntheticSpec(
        n=args.n,
        seed=args.seed,
        censor_rate=args.censor_rate,
        noise_sd=args.noise_sd,
        horizon=args.horizon,
        t_max=args.t_max,
        weights=_parse_floats(args.weights, 4, "--weights"),
        thresholds=_parse_floats(args.thresholds, 2, "--thresholds"),
        noise_features=args.noise_features,
    )
    ds, truth = generate(spec)
    save_csv(ds, args.out)
    sidecar = Path(args.out).with_suffix(".truth.json")
    doc = {
        "grid": truth.grid.tolist(),
        "curves": truth.curves.tolist(),
        "risk": truth.risk.tolist(),
        "event_prob": truth.event_prob.tolist(),
        "horizon": spec.horizon,
        "t_max": spec.t_max,
        "thresholds": list(spec.thresholds),
        "weights": list(spec.weights),
    }
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    log.info("wrote %s and %s", args.out, sidecar)
    return 0


_FIT_FLAG_TO_FIELD = {
    "gamma": "gamma",
    "kernel_width": "width",
    "max_bins": "max_bins",
    "embed_dim": "dim",
    "hidden_dim": "hidden_dim",
    "k_times": "n_times",
    "ensemble_b": "ensemble_b",
    "seed": "seed",
    "lr": "learning_rate",
    "batch_size": "batch_size",
    "max_epochs": "max_epochs",
    "patience": "patience",
    "val_frac": "val_fraction",
    "g_floor": "g_floor",
    "nam_mode": "nam_mode",
}


def _cmd_fit(args) -> int:
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {}
    for flag, field_name in _FIT_FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[field_name] = value
    if args.pairs is not None:
        overrides["n_pairs"] = args.pairs
        overrides["pair_list"] = None
    if args.pair_list is not None:
        overrides["pair_list"] = parse_pair_list(args.pair_list)
    config = replace(config, **overrides)
    categorical = tuple(c.strip() for c in args.categorical.split(",") if c.strip())
    schema = ColumnSchema(time_col=args.time_col, event_col=args.event_col, categorical=categorical)
    ds = load_csv(args.data, schema)
    model = fit_ensemble(ds, config)
    save_model(model, args.out)
    log.info("wrote %s", args.out)
    return 0


def _load_feature_frame(path, model):
    """Parse just the model's feature columns from a CSV (labels optional)."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    cols = []
    for name, spec in zip(model.feature_names, model.bin_specs):
        if name not in df.columns:
            raise CliError(f"column {name!r} missing from {path}")
        raw = df[name].to_numpy(dtype=str)
        if spec.kind == CONTINUOUS:
            col = np.array(
                [np.nan if c.strip().lower() in ("", "na", "nan") else float(c) for c in raw]
            )
        else:
            col = np.array(
                [None if c.strip().lower() in ("", "na", "nan") else c.strip() for c in raw],
                dtype=object,
            )
        cols.append(col)
    return encode_columns(model.bin_specs, cols), len(df)


def _time_indices(arg: str, n_times: int, what: str) -> list[int]:
    if arg == "all":
        return list(range(n_times))
    try:
        idx = int(arg)
    except ValueError:
        raise CliError(f"{what} must be 'all' or an integer index") from None
    if not 0 <= idx < n_times:
        raise CliError(f"{what} index {idx} out of range 0..{n_times - 1}")
    return [idx]


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    enc, n = _load_feature_frame(args.data, model)
    indices = _time_indices(args.times, model.n_times, "--times")
    cif = model.predict_cif(enc)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row"] + [f"cif@{repr(float(model.eval_times[k]))}" for k in indices])
        for i in range(n):
            w.writerow([i] + [repr(float(cif[i, k])) for k in indices])
    return 0


def _resolve_feature(model, token: str) -> int:
    names = list(model.feature_names)
    if token in names:
        return names.index(token)
    try:
        idx = int(token)
    except ValueError:
        raise CliError(f"unknown feature {token!r}") from None
    if not 0 <= idx < len(names):
        raise CliError(f"feature index {idx} out of range 0..{len(names) - 1}")
    return idx


def _cmd_explain(args) -> int:
    model = load_model(args.model)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    requested: list[object] = []
    if args.all:
        requested.extend(range(model.n_features))
        seen = []
        for m in interpret._members(model):
            for key in m.pair_list:
                if key not in seen:
                    seen.append(key)
        requested.extend(seen)
    if args.feature is not None:
        requested.append(_resolve_feature(model, args.feature))
    if args.pair is not None:
        a, _, b = args.pair.partition(":")
        requested.append((_resolve_feature(model, a), _resolve_feature(model, b)))
    if not requested:
        raise CliError("nothing to explain: pass --feature, --pair, or --all")
    indices = _time_indices(args.time, model.n_times, "--time")
    for source in requested:
        curve = interpret.shape_function(model, source)
        if isinstance(source, tuple):
            stem = f"shape_{curve.name.replace('*', '__x__')}"
        else:
            stem = f"shape_{curve.name}"
        for k in indices:
            path = out_dir / f"{stem}_time{k}.csv"
            interpret.write_shape_csv(curve, k, path)
            if args.svg:
                from . import plots

                plots.render_shape(curve, k, out_dir / f"{stem}_time{k}.svg")
    data = None
    if args.data is not None:
        schema = ColumnSchema(time_col=args.time_col, event_col=args.event_col)
        data = load_csv(args.data, schema)
    interpret.write_importance_csv(model, out_dir / "importance.csv", data=data)
    return 0


def _load_labeled(args, model):
    schema = ColumnSchema(time_col=args.time_col, event_col=args.event_col)
    ds = load_csv(args.data, schema)
    missing = [n for n in model.feature_names if n not in ds.feature_names]
    if missing:
        raise CliError(f"columns missing from {args.data}: {missing}")
    order = [ds.feature_names.index(n) for n in model.feature_names]
    cols = [ds.columns[i] for i in order]
    return encode_columns(model.bin_specs, cols), ds.time, ds.event


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    enc, time, event = _load_labeled(args, model)
    cif = model.predict_cif(enc)
    members = interpret._members(model)
    ghat = members[0].censor
    times = model.eval_times
    auc_t, auc_mean = metrics.td_auc(cif, time, event, ghat, times)
    bs_t, bs_mean = metrics.brier_ipcw(cif, time, event, ghat, times)
    median_idx = (model.n_times - 1) // 2
    cidx = metrics.c_index(cif[:, median_idx], time, event)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "time_index", "time", "value"])
        for k, t in enumerate(times):
            w.writerow(["td_auc", k, repr(float(t)), repr(float(auc_t[k]))])
        w.writerow(["td_auc", "mean", "", repr(float(auc_mean))])
        for k, t in enumerate(times):
            w.writerow(["brier", k, repr(float(t)), repr(float(bs_t[k]))])
        w.writerow(["brier", "mean", "", repr(float(bs_mean))])
        w.writerow(["c_index", median_idx, repr(float(times[median_idx])), repr(float(cidx))])
    summary = {
        "n": int(time.shape[0]),
        "n_times": int(model.n_times),
        "mean_td_auc": auc_mean,
        "mean_brier": bs_mean,
        "c_index": cidx,
        "median_time": float(times[median_idx]),
    }
    with open(Path(args.out).with_suffix(".summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
    return 0


def _cmd_calibrate(args) -> int:
    model = load_model(args.model)
    enc, time, event = _load_labeled(args, model)
    if not 0 <= args.time < model.n_times:
        raise CliError(f"--time index {args.time} out of range 0..{model.n_times - 1}")
    t = float(model.eval_times[args.time])
    cif = model.predict_cif(enc)[:, args.time]
    bins, mae = metrics.calibration_curve(cif, time, event, t, n_bins=args.bins)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "mean_predicted", "km_observed", "count", "valid"])
        for i, b in enumerate(bins):
            w.writerow(
                [
                    i,
                    repr(b.mean_predicted),
                    "" if not b.valid else repr(b.km_observed),
                    b.count,
                    int(b.valid),
                ]
            )
    summary = {"time_index": args.time, "time": t, "mae": mae, "n_bins": len(bins)}
    with open(Path(args.out).with_suffix(".summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
    if args.svg:
        from . import plots

        plots.render_calibration(bins, t, mae, Path(args.out).with_suffix(".svg"))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "explain": _cmd_explain,
    "evaluate": _cmd_evaluate,
    "calibrate": _cmd_calibrate,
}


def run(argv) -> int:
    """Parse argv (without the program name) and run one subcommand."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except (ValueError, ModelFormatError, OSError) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 1


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
