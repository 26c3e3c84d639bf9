"""Batch command-line front end: clean, simulate, fit, predict, baseline, evaluate, report.

Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import figures, ingest, metrics
from .config import apply_overrides, read_config
from .errors import (
    DegenerateProblemError,
    FlowcastError,
    InvalidInputError,
    NoConvergenceError,
    NoInteriorModeError,
    NotAMaximumError,
    NotPositiveDefiniteError,
    ParseError,
)
from .frames import CountFrame, parse_date, read_count_csv
from .graphs import read_graph, write_graph, write_presence_grid
from .model import ModelSpec, fit as fit_model
from .simulate import SimConfig, sample_counts, sample_graph, write_truth

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_NUMERIC_ERRORS = (
    NoConvergenceError,
    NotPositiveDefiniteError,
    DegenerateProblemError,
    NotAMaximumError,
    NoInteriorModeError,
)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> dict[str, str]:
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    return apply_overrides(cfg, getattr(args, "set", None) or [])


def _apply_weekpart(frame: CountFrame, weekpart: str) -> CountFrame:
    if weekpart == "all":
        return frame
    weekday, weekend = ingest.split_weekpart(frame)
    return weekday if weekpart == "weekday" else weekend


def _read_covariates(path: str, frame: CountFrame) -> dict[str, np.ndarray]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:3]] != ["date", "timebin", "id"]:
            raise ParseError(f"{path}: expected header Date,TimeBin,ID,<covariate...>")
        names = [c.strip() for c in header[3:]]
        table: dict[tuple, list[float]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                key = (parse_date(row[0]), int(row[1]), int(row[2]))
                table[key] = [float(v) for v in row[3 : 3 + len(names)]]
            except (ValueError, IndexError, InvalidInputError):
                raise ParseError(f"{path}:{lineno}: bad row {row!r}", line_number=lineno) from None
    out = {name: np.empty(len(frame)) for name in names}
    for i, key in enumerate(zip(frame.dates, frame.time_bins, frame.sites)):
        normalized = (key[0], int(key[1]), int(key[2]))
        if normalized not in table:
            raise InvalidInputError(f"covariate row missing for {normalized}")
        for j, name in enumerate(names):
            out[name][i] = table[normalized][j]
    return out


def cmd_clean(args) -> int:
    out = _out_dir(args)
    keep = ingest.read_keep_detectors(args.keep_detectors)
    frame = ingest.clean(ingest.read_raw_csv(args.data), keep)
    frame.write_csv(out / "counts30.csv")
    if args.hourly:
        hourly = ingest.aggregate_hourly(frame)
        hourly.write_csv(out / "counts.csv")
        reported = hourly
    else:
        reported = frame
    report = ingest.missingness_report(reported)
    report.write_csv(out / "missing_by_week.csv", out / "missing_by_site.csv")
    with open(out / "id_map.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Site", "ID"])
        for site, sid in sorted(frame.id_map.items()):
            writer.writerow([site, sid])
    print(f"cleaned {len(frame)} half-hour cells over {len(frame.id_map)} sites; "
          f"{report.total} missing at the reported resolution")
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    cfg_file = _load_config(args)
    kwargs = dict(
        n_sites=args.sites,
        n_days=args.days,
        seed=args.seed,
        missing_rate=args.missing_rate,
        weekdays_only=args.weekdays_only,
    )
    for key in ("period", "intercept", "tau_spatial_structured", "tau_spatial_iid",
                "tau_seasonal", "tau_temporal_iid", "tau_interaction", "zigzag_factor",
                "stuck_low_factor", "jitter"):
        if key in cfg_file:
            value = cfg_file[key]
            kwargs[key] = int(value) if key == "period" else float(value)
    if "zigzag_site" in cfg_file:
        kwargs["zigzag_site"] = int(cfg_file["zigzag_site"])
    if cfg_file.get("stuck_low", "").strip().lower() in ("1", "true", "yes", "on"):
        kwargs["stuck_low"] = True
    if "start_date" in cfg_file:
        kwargs["start_date"] = parse_date(cfg_file["start_date"])
    cfg = SimConfig(**kwargs)
    graph = sample_graph(cfg.n_sites, cfg.seed)
    frame, truth = sample_counts(cfg, graph)
    write_graph(graph, out / "graph.txt")
    write_presence_grid(graph, out / "presence_grid.csv")
    frame.write_csv(out / "counts.csv")
    write_truth(truth, frame, out)
    print(f"simulated {len(frame)} cells at {cfg.n_sites} sites over {cfg.n_days} days "
          f"(seed {cfg.seed})")
    return EXIT_OK


def _prediction_range(args) -> tuple:
    start = parse_date(args.predict_from) if args.predict_from else None
    end = parse_date(args.predict_to) if args.predict_to else None
    if (start is None) != (end is None):
        raise InvalidInputError("--predict-from and --predict-to must be given together")
    return start, end


def cmd_fit(args) -> int:
    out = _out_dir(args)
    cfg = _load_config(args)
    spec = ModelSpec.from_config(cfg)
    frame = read_count_csv(args.data, bins_per_day=spec.period)
    frame = _apply_weekpart(frame, args.weekpart)
    graph = read_graph(args.graph)
    covariates = _read_covariates(args.covariates, frame) if args.covariates else None

    start, end = _prediction_range(args)
    masked = frame
    if start is not None:
        in_range = frame.date_range_mask(start, end)
        if not in_range.any():
            raise InvalidInputError("prediction range contains no rows")
        values = frame.values.copy()
        values[in_range] = np.nan
        masked = frame.with_values(values)

    result = fit_model(
        spec, masked, graph, covariates=covariates,
        init_log_precision=float(cfg.get("init_log_precision", 0.0)),
        max_evals=int(cfg.get("max_evals", 500)),
    )
    result.write_csv(out / "fitted.csv")
    with open(out / "hyper.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "log_precisions": dict(zip(result.hyper_names, result.psi_mode.tolist())),
                "log_evidence": result.log_evidence,
            },
            fh,
            indent=2,
        )
    if start is not None:
        pred_rows = masked.date_range_mask(start, end)
        predictions = masked.subset(pred_rows).with_values(result.fitted[pred_rows])
        predictions.write_csv(out / "predictions.csv")
        print(f"fit done; wrote {int(pred_rows.sum())} predictions for {start}..{end}")
    else:
        print("fit done; no prediction range requested")
    print("log precisions: "
          + ", ".join(f"{n}={v:.3f}" for n, v in zip(result.hyper_names, result.psi_mode)))
    return EXIT_OK


def cmd_predict(args) -> int:
    start, end = parse_date(args.predict_from), parse_date(args.predict_to)
    dates, bins, sites, fitted = [], [], [], []
    with open(args.fitted, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:5]] != [
            "date", "timebin", "id", "observed", "fitted",
        ]:
            raise ParseError(f"{args.fitted}: expected a fitted.csv artifact")
        for row in reader:
            if not row:
                continue
            d = parse_date(row[0])
            if start <= d <= end:
                dates.append(d)
                bins.append(int(row[1]))
                sites.append(int(row[2]))
                fitted.append(float(row[4]))
    if not dates:
        raise InvalidInputError(f"no fitted rows within {start}..{end}")
    frame = CountFrame(
        dates=np.array(dates, dtype=object),
        time_bins=np.array(bins, dtype=int),
        sites=np.array(sites, dtype=int),
        values=np.array(fitted, dtype=float),
        bins_per_day=max(bins) + 1,
    )
    frame.write_csv(args.out)
    print(f"wrote {len(frame)} predictions to {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    out = _out_dir(args)
    frame = read_count_csv(args.data)
    frame = _apply_weekpart(frame, args.weekpart)
    start, end = parse_date(args.predict_from), parse_date(args.predict_to)
    baseline = metrics.prior_mean_baseline(frame, start, end, args.history_weeks)
    baseline.write_csv(out / "baseline.csv")
    print(f"wrote {len(baseline)} baseline predictions")
    predictions_path = args.predictions or (out / "predictions.csv")
    if Path(predictions_path).exists():
        preds = read_count_csv(predictions_path, bins_per_day=frame.bins_per_day)
        actual = read_count_csv(args.actual, bins_per_day=frame.bins_per_day) if args.actual else frame
        table = metrics.compare(preds, baseline, actual)
        table.write_csv(out / "comparison.csv")
        print(f"comparison aggregate: meanPE={table.aggregate_mean_pe:.2f} "
              f"predPE={table.aggregate_pred_pe:.2f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    actual = read_count_csv(args.data)
    preds = read_count_csv(args.predictions, bins_per_day=actual.bins_per_day)
    pred_index = preds.key_index()
    actual_index = actual.key_index()
    aligned = np.full(len(preds), np.nan)
    observed = np.full(len(preds), np.nan)
    for key, i in pred_index.items():
        aligned[i] = preds.values[i]
        if key in actual_index:
            observed[i] = actual.values[actual_index[key]]
    value = metrics.mpe(observed, aligned)
    print(f"MPE: {value:.2f}")
    if args.out:
        out = _out_dir(args)
        with open(out / "mpe_overall.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["MPE"])
            writer.writerow([f"{value:.4f}"])
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out_dir(args)
    actual = read_count_csv(args.data)
    preds = read_count_csv(args.predictions, bins_per_day=actual.bins_per_day)
    actual_index = actual.key_index()
    observed = np.full(len(preds), np.nan)
    for key, i in preds.key_index().items():
        if key in actual_index:
            observed[i] = actual.values[actual_index[key]]
    target = preds.with_values(observed)

    groupings = {
        metrics.GROUP_SITE: "mpe_by_site.csv",
        metrics.GROUP_DAY: "mpe_by_day.csv",
        metrics.GROUP_TIME: "mpe_by_time.csv",
        metrics.GROUP_DAY_TIME: "mpe_by_day_time.csv",
    }
    reports = {}
    for group, filename in groupings.items():
        report = metrics.grouped_mpe(target, preds.values, group)
        report.write_csv(out / filename, group)
        reports[group] = report
    overall = reports[metrics.GROUP_SITE].overall
    with open(out / "mpe_overall.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["MPE"])
        writer.writerow([f"{overall:.4f}"])
    print(f"MPE: {overall:.2f}")

    table = None
    if args.baseline:
        baseline = read_count_csv(args.baseline, bins_per_day=actual.bins_per_day)
        table = metrics.compare(preds, baseline, target)
        table.write_csv(out / "comparison.csv")
        print(f"comparison aggregate: meanPE={table.aggregate_mean_pe:.2f} "
              f"predPE={table.aggregate_pred_pe:.2f}")

    if not args.no_figures:
        figures.mpe_by_site_figure(reports[metrics.GROUP_SITE], out / "mpe_by_site.png")
        figures.mpe_by_day_time_figure(reports[metrics.GROUP_DAY_TIME], out / "mpe_by_day_time.png")
        figures.observed_vs_predicted_figure(target, preds, out / "observed_vs_predicted.png")
        if table is not None:
            figures.comparison_figure(table, out / "comparison.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcast",
        description="Spatio-temporal forecasting and imputation of intersection traffic counts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="clean a raw detector export into count frames")
    p.add_argument("--data", required=True, help="raw Date,Time,Site,Detector,Count CSV")
    p.add_argument("--keep-detectors", required=True, help="'site: d1 d2 ...' config file")
    p.add_argument("--out", required=True)
    p.add_argument("--no-hourly", dest="hourly", action="store_false",
                   help="skip the 07:00-19:00 hourly aggregation")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("simulate", help="draw a synthetic network and counts")
    p.add_argument("--sites", type=int, required=True)
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--weekdays-only", action="store_true")
    p.add_argument("--config", help="flat key=value generator settings")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the spatio-temporal model")
    p.add_argument("--data", required=True, help="Date,TimeBin,ID,Sum counts CSV")
    p.add_argument("--graph", required=True, help="edge-list graph file")
    p.add_argument("--config", help="flat key=value model settings")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--covariates", help="Date,TimeBin,ID,<name...> covariate CSV")
    p.add_argument("--weekpart", choices=("all", "weekday", "weekend"), default="all")
    p.add_argument("--predict-from", help="first date to mask and predict")
    p.add_argument("--predict-to", help="last date to mask and predict")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="extract predictions from a fitted artifact")
    p.add_argument("--fitted", required=True, help="fitted.csv from a fit run")
    p.add_argument("--predict-from", required=True)
    p.add_argument("--predict-to", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("baseline", help="history-mean predictions for a target range")
    p.add_argument("--data", required=True)
    p.add_argument("--predict-from", required=True)
    p.add_argument("--predict-to", required=True)
    p.add_argument("--history-weeks", type=int, default=7)
    p.add_argument("--weekpart", choices=("all", "weekday", "weekend"), default="all")
    p.add_argument("--predictions", help="model predictions CSV for a comparison table")
    p.add_argument("--actual", help="actuals CSV when --data holds masked values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="overall MPE of predictions against actuals")
    p.add_argument("--data", required=True, help="actual counts CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="grouped MPE tables, comparison, and figures")
    p.add_argument("--data", required=True, help="actual counts CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--baseline", help="baseline predictions CSV for the comparison table")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FlowcastError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
