"""Long-format count observations keyed by (date, time bin, site ID).

The same frame format flows through cleaning, simulation, fitting, and
evaluation; values are floats with NaN marking a missing count.  The CSV form
is ``Date,TimeBin,ID,Sum`` with an empty Sum field for missing.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicateRowError, InvalidInputError, ParseError

WEEKDAY_NAMES = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")


def parse_date(text: str) -> dt.date:
    """Accept ISO YYYY-MM-DD or D/M/YY(YY); everything is normalized to ISO."""
    text = text.strip()
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        pass
    parts = text.split("/")
    if len(parts) == 3:
        try:
            day, month, year = (int(p) for p in parts)
        except ValueError:
            raise InvalidInputError(f"unparseable date {text!r}") from None
        if year < 100:
            year += 2000
        return dt.date(year, month, day)
    raise InvalidInputError(f"unparseable date {text!r}")


@dataclass
class CountFrame:
    """Column-oriented rows of (date, time_bin, site, value-or-NaN).

    ``site`` holds dense sequential IDs 1..n_sites; ``id_map`` remembers the
    original site numbers when the frame came from a recoding step.
    ``bins_per_day`` records the time resolution (48 half-hours, 12 hours, ...).
    """

    dates: np.ndarray
    time_bins: np.ndarray
    sites: np.ndarray
    values: np.ndarray
    bins_per_day: int
    id_map: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype=object)
        self.time_bins = np.asarray(self.time_bins, dtype=int)
        self.sites = np.asarray(self.sites, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.dates)
        if not (len(self.time_bins) == len(self.sites) == len(self.values) == n):
            raise InvalidInputError("frame columns have inconsistent lengths")
        if n and (self.time_bins.min() < 0 or self.time_bins.max() >= self.bins_per_day):
            raise InvalidInputError("time bin outside 0..bins_per_day-1")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_sites(self) -> int:
        return int(self.sites.max()) if len(self.sites) else 0

    def keys(self) -> list[tuple[dt.date, int, int]]:
        return list(zip(self.dates, self.time_bins, self.sites))

    def key_index(self) -> dict[tuple[dt.date, int, int], int]:
        index = {}
        for i, key in enumerate(zip(self.dates, self.time_bins, self.sites)):
            if key in index:
                raise DuplicateRowError(f"duplicate frame row for {key}")
            index[key] = i
        return index

    def subset(self, mask: np.ndarray) -> "CountFrame":
        return CountFrame(
            dates=self.dates[mask],
            time_bins=self.time_bins[mask],
            sites=self.sites[mask],
            values=self.values[mask],
            bins_per_day=self.bins_per_day,
            id_map=dict(self.id_map),
        )

    def with_values(self, values: np.ndarray) -> "CountFrame":
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise InvalidInputError("replacement values have the wrong length")
        out = self.subset(np.ones(len(self), dtype=bool))
        out.values = values
        return out

    def distinct_dates(self) -> list[dt.date]:
        return sorted(set(self.dates))

    def missing_mask(self) -> np.ndarray:
        return ~np.isfinite(self.values)

    def weekdays(self) -> np.ndarray:
        return np.array([d.weekday() for d in self.dates], dtype=int)

    def date_range_mask(self, start: dt.date, end: dt.date) -> np.ndarray:
        return np.array([start <= d <= end for d in self.dates], dtype=bool)

    def total_count(self) -> float:
        vals = self.values[np.isfinite(self.values)]
        return float(vals.sum())

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["Date", "TimeBin", "ID", "Sum"])
            for d, t, s, v in zip(self.dates, self.time_bins, self.sites, self.values):
                writer.writerow([d.isoformat(), int(t), int(s), "" if not np.isfinite(v) else _fmt(v)])


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def read_count_csv(path: str | Path, bins_per_day: int | None = None) -> CountFrame:
    """Read a Date,TimeBin,ID,Sum file; empty Sum means missing."""
    dates, bins, sites, values = [], [], [], []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file", line_number=1)
        cols = [c.strip().lower() for c in header]
        if cols[:4] != ["date", "timebin", "id", "sum"]:
            raise ParseError(f"{path}: expected header Date,TimeBin,ID,Sum", line_number=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                dates.append(parse_date(row[0]))
                bins.append(int(row[1]))
                sites.append(int(row[2]))
                raw = row[3].strip() if len(row) > 3 else ""
                values.append(float(raw) if raw else np.nan)
            except (ValueError, IndexError, InvalidInputError):
                raise ParseError(f"{path}:{lineno}: bad row {row!r}", line_number=lineno) from None
    bins_arr = np.array(bins, dtype=int)
    if bins_per_day is None:
        bins_per_day = int(bins_arr.max(initial=0)) + 1
    return CountFrame(
        dates=np.array(dates, dtype=object),
        time_bins=bins_arr,
        sites=np.array(sites, dtype=int),
        values=np.array(values, dtype=float),
        bins_per_day=bins_per_day,
    )
