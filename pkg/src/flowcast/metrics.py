"""Mean-percentage-error metrics, grouped reports, and the history-mean baseline.

MPE is the mean over observations of |y - yhat| / y * 100.  Pairs with a
missing or zero observed count are excluded (the data floor for real exports
is 1, so zero exclusion only guards synthetic corner cases).
"""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMetricError, InvalidInputError
from .frames import WEEKDAY_NAMES, CountFrame

GROUP_SITE = "site"
GROUP_DAY = "day"
GROUP_TIME = "time"
GROUP_DAY_TIME = "day_time"


def _percent_errors(observed: np.ndarray, predicted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape:
        raise InvalidInputError(
            f"length mismatch: {observed.shape} observed vs {predicted.shape} predicted"
        )
    include = np.isfinite(observed) & (observed > 0) & np.isfinite(predicted)
    pe = np.full(observed.shape, np.nan)
    pe[include] = np.abs(observed[include] - predicted[include]) / observed[include] * 100.0
    return pe, include


def mpe(observed: np.ndarray, predicted: np.ndarray) -> float:
    """Mean absolute percentage deviation over includable pairs."""
    pe, include = _percent_errors(observed, predicted)
    if not include.any():
        raise EmptyMetricError("no pairs with a positive observed count")
    return float(pe[include].mean())


@dataclass
class MpeReport:
    """Overall MPE plus whichever grouping was requested."""

    overall: float
    by_site: dict[int, float] = field(default_factory=dict)
    by_day: dict[str, float] = field(default_factory=dict)
    by_time: dict[int, float] = field(default_factory=dict)
    by_day_time: dict[tuple[str, int], float] = field(default_factory=dict)

    def write_csv(self, path: str | Path, group_by: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            if group_by == GROUP_SITE:
                writer.writerow(["ID", "MPE"])
                for site, v in sorted(self.by_site.items()):
                    writer.writerow([site, f"{v:.4f}"])
            elif group_by == GROUP_DAY:
                writer.writerow(["Day", "MPE"])
                for name in WEEKDAY_NAMES:
                    if name in self.by_day:
                        writer.writerow([name, f"{self.by_day[name]:.4f}"])
            elif group_by == GROUP_TIME:
                writer.writerow(["TimeBin", "MPE"])
                for t, v in sorted(self.by_time.items()):
                    writer.writerow([t, f"{v:.4f}"])
            elif group_by == GROUP_DAY_TIME:
                bins = sorted({t for _, t in self.by_day_time})
                writer.writerow(["Day"] + [str(t) for t in bins])
                for name in WEEKDAY_NAMES:
                    if any(day == name for day, _ in self.by_day_time):
                        row = [name] + [
                            f"{self.by_day_time[(name, t)]:.4f}" if (name, t) in self.by_day_time else ""
                            for t in bins
                        ]
                        writer.writerow(row)
            else:
                raise InvalidInputError(f"unknown grouping {group_by!r}")


def grouped_mpe(frame: CountFrame, predictions: np.ndarray, group_by: str) -> MpeReport:
    """MPE within each group of the requested kind, plus the overall MPE.

    The overall figure is the unweighted mean over all included observations,
    not the mean of the group figures.  Groups with no includable pair are
    omitted with a warning.
    """
    pe, include = _percent_errors(frame.values, predictions)
    if not include.any():
        raise EmptyMetricError("no pairs with a positive observed count")
    report = MpeReport(overall=float(pe[include].mean()))

    def labels() -> np.ndarray:
        if group_by == GROUP_SITE:
            return frame.sites
        if group_by == GROUP_DAY:
            return np.array([WEEKDAY_NAMES[d.weekday()] for d in frame.dates], dtype=object)
        if group_by == GROUP_TIME:
            return frame.time_bins
        if group_by == GROUP_DAY_TIME:
            out = np.empty(len(frame), dtype=object)
            for i, (d, t) in enumerate(zip(frame.dates, frame.time_bins)):
                out[i] = (WEEKDAY_NAMES[d.weekday()], int(t))
            return out
        raise InvalidInputError(f"unknown grouping {group_by!r}")

    lab = labels()
    groups = sorted(set(lab.tolist()), key=str)
    target = {
        GROUP_SITE: report.by_site,
        GROUP_DAY: report.by_day,
        GROUP_TIME: report.by_time,
        GROUP_DAY_TIME: report.by_day_time,
    }[group_by]
    for g in groups:
        mask = np.array([x == g for x in lab.tolist()]) & include
        if not mask.any():
            warnings.warn(f"group {g!r} has no includable observation; omitted", stacklevel=2)
            continue
        target[g] = float(pe[mask].mean())
    return report


def prior_mean_baseline(
    frame: CountFrame,
    target_start: dt.date,
    target_end: dt.date,
    history_weeks: int,
) -> CountFrame:
    """History-mean predictor for every target-range row.

    For each (site, date, bin) in the target range, the prediction is the mean
    of the counts at the same site, weekday, and bin over the preceding
    ``history_weeks`` weeks, skipping missing history cells; it is missing when
    no history cell was observed.
    """
    if history_weeks < 1:
        raise InvalidInputError(f"history_weeks must be >= 1, got {history_weeks}")
    if target_start > target_end:
        raise InvalidInputError("target range is empty (start after end)")
    in_target = frame.date_range_mask(target_start, target_end)
    if not in_target.any():
        raise InvalidInputError("target week lies outside the frame")
    if not any(d < target_start for d in frame.dates):
        raise InvalidInputError("no history available before the target week")
    index: dict[tuple[dt.date, int, int], float] = {}
    for d, t, s, v in zip(frame.dates, frame.time_bins, frame.sites, frame.values):
        index[(d, int(t), int(s))] = v
    target = frame.subset(in_target)
    preds = np.full(len(target), np.nan)
    for i, (d, t, s) in enumerate(zip(target.dates, target.time_bins, target.sites)):
        history = []
        for k in range(1, history_weeks + 1):
            v = index.get((d - dt.timedelta(days=7 * k), int(t), int(s)))
            if v is not None and np.isfinite(v):
                history.append(v)
        if history:
            preds[i] = float(np.mean(history))
    return target.with_values(preds)


@dataclass(frozen=True)
class ComparisonRow:
    date: dt.date
    time_bin: int
    site: int
    actual: float
    pred: float
    mean: float
    mean_pe: float
    pred_pe: float


@dataclass(frozen=True)
class ComparisonTable:
    rows: list[ComparisonRow]
    aggregate_mean_pe: float
    aggregate_pred_pe: float

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["Date", "TimeBin", "ID", "ActualY", "pred", "mean", "meanPE", "predPE"])
            for r in self.rows:
                writer.writerow([
                    r.date.isoformat(), r.time_bin, r.site,
                    _num(r.actual), _num(r.pred), _num(r.mean),
                    _num(r.mean_pe), _num(r.pred_pe),
                ])
            writer.writerow(["aggregate", "", "", "", "", "",
                             _num(self.aggregate_mean_pe), _num(self.aggregate_pred_pe)])


def _num(v: float) -> str:
    return "" if not np.isfinite(v) else f"{v:.4f}"


def compare(model_preds: CountFrame, baseline_preds: CountFrame, frame: CountFrame) -> ComparisonTable:
    """Side-by-side percentage errors of the model and the history-mean baseline."""
    model_index = model_preds.key_index()
    base_index = baseline_preds.key_index()
    if set(model_index) != set(base_index):
        raise InvalidInputError("model and baseline predictions cover different keys")
    frame_index = frame.key_index()
    missing_keys = [k for k in model_index if k not in frame_index]
    if missing_keys:
        raise InvalidInputError(f"{len(missing_keys)} prediction keys absent from the frame")
    rows = []
    mean_pes, pred_pes = [], []
    for key in sorted(model_index, key=lambda k: (k[0], k[1], k[2])):
        d, t, s = key
        actual = frame.values[frame_index[key]]
        pred = model_preds.values[model_index[key]]
        mean = baseline_preds.values[base_index[key]]
        if np.isfinite(actual) and actual > 0:
            mean_pe = abs(actual - mean) / actual * 100.0 if np.isfinite(mean) else np.nan
            pred_pe = abs(actual - pred) / actual * 100.0 if np.isfinite(pred) else np.nan
        else:
            mean_pe = pred_pe = np.nan
        if np.isfinite(mean_pe):
            mean_pes.append(mean_pe)
        if np.isfinite(pred_pe):
            pred_pes.append(pred_pe)
        rows.append(ComparisonRow(date=d, time_bin=int(t), site=int(s), actual=actual,
                                  pred=pred, mean=mean, mean_pe=mean_pe, pred_pe=pred_pe))
    return ComparisonTable(
        rows=rows,
        aggregate_mean_pe=float(np.mean(mean_pes)) if mean_pes else np.nan,
        aggregate_pred_pe=float(np.mean(pred_pes)) if pred_pes else np.nan,
    )
