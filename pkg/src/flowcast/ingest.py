"""Cleaning of raw per-detector exports into count frames.

Raw rows carry one count per (date, half-hour interval, site, detector); a
failed reading appears as the token BAD.  Cleaning keeps only the configured
stop-line detectors per site, sums them per interval (any BAD kept detector
poisons the whole interval), and recodes sites to dense sequential IDs.
"""

from __future__ import annotations

import csv
import datetime as dt
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DuplicateRowError, InvalidInputError, ParseError
from .frames import CountFrame, parse_date

_INTERVAL_RE = re.compile(r"^(\d{1,2}):(\d{2})-(\d{1,2}):(\d{2})$")

HOURLY_FIRST_HOUR = 7
HOURLY_LAST_HOUR = 19  # exclusive; 07:00-19:00 gives 12 hourly bins
HOURLY_BINS = HOURLY_LAST_HOUR - HOURLY_FIRST_HOUR


@dataclass(frozen=True)
class RawDetectorRow:
    date: dt.date
    interval: str
    site: int
    detector: int
    count: int | None  # None encodes BAD


def parse_interval(label: str, lineno: int | None = None) -> int:
    """Half-hour bin index 0..47 from a 'HH:MM-HH:MM' label."""
    m = _INTERVAL_RE.match(label.strip())
    if not m:
        raise ParseError(f"bad interval label {label!r}", line_number=lineno)
    h1, m1, h2, m2 = (int(g) for g in m.groups())
    start = h1 * 60 + m1
    end = h2 * 60 + m2
    if end == 0:
        end = 24 * 60
    if end - start != 30 or m1 not in (0, 30):
        raise ParseError(f"interval {label!r} is not a half-hour bin", line_number=lineno)
    return start // 30


def read_raw_csv(path: str | Path) -> Iterable[RawDetectorRow]:
    """Stream rows from a Date,Time,Site,Detector,Count export."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file", line_number=1)
        cols = [c.strip().lower() for c in header]
        if cols[:5] != ["date", "time", "site", "detector", "count"]:
            raise ParseError(f"{path}: expected header Date,Time,Site,Detector,Count", line_number=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                date = parse_date(row[0])
                interval = row[1].strip()
                site = int(row[2])
                det = int(row[3])
            except (ValueError, IndexError, InvalidInputError):
                raise ParseError(f"{path}:{lineno}: bad row {row!r}", line_number=lineno) from None
            raw_count = row[4].strip() if len(row) > 4 else ""
            if raw_count.upper() == "BAD":
                count = None
            else:
                try:
                    count = int(raw_count)
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: count {raw_count!r} is neither an integer nor BAD",
                        line_number=lineno,
                    ) from None
                if count < 0:
                    raise ParseError(f"{path}:{lineno}: negative count {count}", line_number=lineno)
            parse_interval(interval, lineno)
            yield RawDetectorRow(date=date, interval=interval, site=site, detector=det, count=count)


def read_keep_detectors(path: str | Path) -> dict[int, set[int]]:
    """Parse a keep-detectors config of ``site: d1 d2 ...`` lines."""
    keep: dict[int, set[int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'site: d1 d2 ...'", line_number=lineno)
            site_part, det_part = line.split(":", 1)
            try:
                site = int(site_part)
                dets = {int(tok) for tok in det_part.split()}
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad site/detector list", line_number=lineno) from None
            if not dets:
                raise ParseError(f"{path}:{lineno}: site {site} keeps no detectors", line_number=lineno)
            keep[site] = dets
    return keep


def clean(raw: Iterable[RawDetectorRow], keep_detectors: dict[int, set[int]]) -> CountFrame:
    """Sum kept detectors per (site, date, interval) and recode sites.

    Any BAD reading among the kept detectors makes the whole interval missing
    rather than a biased partial sum.  Sites are recoded to 1..n in ascending
    original order; the mapping is kept on the frame.
    """
    if not keep_detectors:
        raise InvalidInputError("keep_detectors is empty: no site of interest")
    sums: dict[tuple[int, dt.date, int], float] = {}
    seen: set[tuple[int, int, dt.date, str]] = set()
    for row in raw:
        kept = keep_detectors.get(row.site)
        if kept is None or row.detector not in kept:
            continue
        dup_key = (row.site, row.detector, row.date, row.interval)
        if dup_key in seen:
            raise DuplicateRowError(f"duplicate reading for {dup_key}")
        seen.add(dup_key)
        bin_idx = parse_interval(row.interval)
        key = (row.site, row.date, bin_idx)
        current = sums.get(key, 0.0)
        if row.count is None or not np.isfinite(current):
            sums[key] = np.nan
        else:
            sums[key] = current + row.count
    original_sites = sorted({site for site, _, _ in sums})
    id_map = {site: i + 1 for i, site in enumerate(original_sites)}
    items = sorted(sums.items(), key=lambda kv: (kv[0][1], kv[0][2], id_map[kv[0][0]]))
    return CountFrame(
        dates=np.array([date for (_, date, _), _ in items], dtype=object),
        time_bins=np.array([b for (_, _, b), _ in items], dtype=int),
        sites=np.array([id_map[s] for (s, _, _), _ in items], dtype=int),
        values=np.array([v for _, v in items], dtype=float),
        bins_per_day=48,
        id_map=id_map,
    )


def aggregate_hourly(frame: CountFrame) -> CountFrame:
    """Pair half-hour bins into hours, restricted to 07:00-19:00 (12 bins).

    An hour is missing if either half is missing; an hour with only one half
    present in the input is dropped with a coverage warning.
    """
    if frame.bins_per_day != 48:
        raise InvalidInputError("hourly aggregation expects a 30-minute frame (48 bins/day)")
    halves: dict[tuple[dt.date, int, int], dict[int, float]] = {}
    for d, t, s, v in zip(frame.dates, frame.time_bins, frame.sites, frame.values):
        hour = int(t) // 2
        if not (HOURLY_FIRST_HOUR <= hour < HOURLY_LAST_HOUR):
            continue
        halves.setdefault((d, s, hour), {})[int(t) % 2] = v
    dates, bins, sites, values = [], [], [], []
    dropped = 0
    for (d, s, hour), pair in sorted(halves.items(), key=lambda kv: (kv[0][0], kv[0][2], kv[0][1])):
        if len(pair) < 2:
            dropped += 1
            continue
        dates.append(d)
        bins.append(hour - HOURLY_FIRST_HOUR)
        sites.append(s)
        a, b = pair[0], pair[1]
        values.append(a + b if np.isfinite(a) and np.isfinite(b) else np.nan)
    if dropped:
        warnings.warn(f"dropped {dropped} hour bins with a dangling half-hour", stacklevel=2)
    return CountFrame(
        dates=np.array(dates, dtype=object),
        time_bins=np.array(bins, dtype=int),
        sites=np.array(sites, dtype=int),
        values=np.array(values, dtype=float),
        bins_per_day=HOURLY_BINS,
        id_map=dict(frame.id_map),
    )


def split_weekpart(frame: CountFrame) -> tuple[CountFrame, CountFrame]:
    """Partition into (Monday-Friday, Saturday-Sunday) frames."""
    wd = frame.weekdays()
    return frame.subset(wd < 5), frame.subset(wd >= 5)


@dataclass(frozen=True)
class MissingnessReport:
    by_week: dict[tuple[int, int], int]
    by_site: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.by_site.values())

    def write_csv(self, week_path: str | Path, site_path: str | Path) -> None:
        with open(week_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["IsoYear", "IsoWeek", "Missing"])
            for (year, week), count in sorted(self.by_week.items()):
                writer.writerow([year, week, count])
        with open(site_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ID", "Missing"])
            for site, count in sorted(self.by_site.items()):
                writer.writerow([site, count])


def missingness_report(frame: CountFrame) -> MissingnessReport:
    """Tally missing cells per ISO week and per site."""
    by_week: dict[tuple[int, int], int] = {}
    by_site: dict[int, int] = {}
    for d in frame.distinct_dates():
        iso = d.isocalendar()
        by_week.setdefault((iso[0], iso[1]), 0)
    for s in sorted(set(frame.sites.tolist())):
        by_site.setdefault(int(s), 0)
    for d, s, miss in zip(frame.dates, frame.sites, frame.missing_mask()):
        if miss:
            iso = d.isocalendar()
            by_week[(iso[0], iso[1])] += 1
            by_site[int(s)] += 1
    return MissingnessReport(by_week=by_week, by_site=by_site)
