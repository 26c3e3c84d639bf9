"""Cleaning, hourly aggregation, week split, and missingness tallies."""

import datetime as dt

import numpy as np
import pytest

from flowcast.errors import DuplicateRowError, InvalidInputError, ParseError
from flowcast.frames import read_count_csv
from flowcast.ingest import (
    RawDetectorRow,
    aggregate_hourly,
    clean,
    missingness_report,
    parse_interval,
    read_keep_detectors,
    read_raw_csv,
    split_weekpart,
)


def row(date, interval, site, det, count):
    return RawDetectorRow(date=dt.date.fromisoformat(date), interval=interval,
                          site=site, detector=det, count=count)


class TestParseInterval:
    def test_half_hours(self):
        assert parse_interval("00:00-00:30") == 0
        assert parse_interval("07:30-08:00") == 15
        assert parse_interval("23:30-00:00") == 47

    def test_bad_labels(self):
        with pytest.raises(ParseError):
            parse_interval("00:00-01:00")
        with pytest.raises(ParseError):
            parse_interval("7am-8am")


class TestClean:
    def test_single_row_survives(self):
        frame = clean([row("2017-10-16", "00:00-00:30", 1, 5, 90)], {1: {5}})
        assert len(frame) == 1
        assert frame.values[0] == 90.0
        assert frame.sites[0] == 1
        assert frame.id_map == {1: 1}

    def test_detector_sum(self):
        rows = [
            row("2017-10-16", "00:00-00:30", 1, 1, 40),
            row("2017-10-16", "00:00-00:30", 1, 2, 50),
            row("2017-10-16", "00:00-00:30", 1, 9, 999),  # advance detector, dropped
        ]
        frame = clean(rows, {1: {1, 2}})
        assert frame.values[0] == 90.0

    def test_any_bad_poisons_interval(self):
        rows = [
            row("2017-10-16", "00:00-00:30", 1, 1, 40),
            row("2017-10-16", "00:00-00:30", 1, 2, None),
        ]
        frame = clean(rows, {1: {1, 2}})
        assert np.isnan(frame.values[0])

    def test_bad_order_independent(self):
        rows = [
            row("2017-10-16", "00:00-00:30", 1, 2, None),
            row("2017-10-16", "00:00-00:30", 1, 1, 40),
        ]
        assert np.isnan(clean(rows, {1: {1, 2}}).values[0])

    def test_dense_recode(self):
        rows = [
            row("2017-10-16", "00:00-00:30", 90, 1, 1),
            row("2017-10-16", "00:00-00:30", 3, 1, 2),
            row("2017-10-16", "00:00-00:30", 17, 1, 3),
        ]
        frame = clean(rows, {3: {1}, 17: {1}, 90: {1}})
        assert frame.id_map == {3: 1, 17: 2, 90: 3}
        assert frame.n_sites == len(frame.id_map)

    def test_duplicate_reading_rejected(self):
        rows = [
            row("2017-10-16", "00:00-00:30", 1, 1, 40),
            row("2017-10-16", "00:00-00:30", 1, 1, 41),
        ]
        with pytest.raises(DuplicateRowError):
            clean(rows, {1: {1}})

    def test_empty_keep_config_rejected(self):
        with pytest.raises(InvalidInputError):
            clean([], {})

    def test_conservation_under_recode(self):
        rng = np.random.default_rng(0)
        rows = []
        total = 0
        for site in (4, 9, 30):
            for half in range(6):
                c = int(rng.integers(0, 100))
                total += c
                label = f"{half // 2:02d}:{(half % 2) * 30:02d}-" \
                        f"{(half + 1) // 2:02d}:{((half + 1) % 2) * 30:02d}"
                rows.append(row("2018-01-15", label, site, 1, c))
        frame = clean(rows, {4: {1}, 9: {1}, 30: {1}})
        assert frame.total_count() == total

    def test_round_trip_stability(self, tmp_path):
        rows = [
            row("2017-10-16", "07:00-07:30", 2, 1, 11),
            row("2017-10-16", "07:30-08:00", 2, 1, None),
        ]
        frame = clean(rows, {2: {1}})
        path = tmp_path / "c.csv"
        frame.write_csv(path)
        back = read_count_csv(path, bins_per_day=48)
        np.testing.assert_array_equal(back.time_bins, frame.time_bins)
        np.testing.assert_array_equal(np.isnan(back.values), np.isnan(frame.values))
        # cleaning an already-clean stream changes nothing (sites now carry IDs)
        rows2 = [
            row(d.isoformat(), f"{b // 2:02d}:{(b % 2) * 30:02d}-"
                               f"{(b + 1) // 2:02d}:{((b + 1) % 2) * 30:02d}",
                int(s), 1, None if not np.isfinite(v) else int(v))
            for d, b, s, v in zip(back.dates, back.time_bins, back.sites, back.values)
        ]
        again = clean(rows2, {1: {1}})
        np.testing.assert_array_equal(again.values[np.isfinite(again.values)],
                                      frame.values[np.isfinite(frame.values)])


class TestRawCsv:
    def test_read(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text(
            "Date,Time,Site,Detector,Count\n"
            "16/10/17,00:00-00:30,1,1,90\n"
            "16/10/17,00:30-01:00,1,1,BAD\n"
        )
        rows = list(read_raw_csv(path))
        assert rows[0].count == 90
        assert rows[1].count is None

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("Date,Time,Site,Detector,Count\n16/10/17,junk,1,1,90\n")
        with pytest.raises(ParseError) as err:
            list(read_raw_csv(path))
        assert err.value.line_number == 2

    def test_keep_detectors_file(self, tmp_path):
        path = tmp_path / "keep.cfg"
        path.write_text("# stop-line detectors\n1: 1 2 7\n2: 4\n")
        assert read_keep_detectors(path) == {1: {1, 2, 7}, 2: {4}}


def half_hour_label(bin_idx: int) -> str:
    start = bin_idx * 30
    end = start + 30
    return f"{start // 60:02d}:{start % 60:02d}-{(end // 60) % 24:02d}:{end % 60:02d}"


def frame_from_halves(cells):
    """cells: list of (date_iso, half_hour_bin, site, value-or-None)."""
    rows = [row(d, half_hour_label(b), s, 1, v) for d, b, s, v in cells]
    return clean(rows, {s: {1} for _, _, s, _ in cells})


class TestAggregateHourly:
    def test_pair_sum(self):
        frame = frame_from_halves([
            ("2017-10-16", 14, 1, 67),  # 07:00-07:30
            ("2017-10-16", 15, 1, 90),  # 07:30-08:00
        ])
        hourly = aggregate_hourly(frame)
        assert len(hourly) == 1
        assert hourly.values[0] == 157.0
        assert hourly.time_bins[0] == 0

    def test_missing_propagates(self):
        frame = frame_from_halves([
            ("2017-10-16", 14, 1, None),
            ("2017-10-16", 15, 1, 50),
        ])
        hourly = aggregate_hourly(frame)
        assert np.isnan(hourly.values[0])

    def test_full_day_gives_twelve_bins(self):
        cells = [("2017-10-16", b, 1, 10) for b in range(48)]
        hourly = aggregate_hourly(frame_from_halves(cells))
        assert len(hourly) == 12
        assert sorted(hourly.time_bins.tolist()) == list(range(12))

    def test_window_excludes_night(self):
        frame = frame_from_halves([
            ("2017-10-16", 0, 1, 90),
            ("2017-10-16", 1, 1, 67),
        ])
        assert len(aggregate_hourly(frame)) == 0

    def test_dangling_half_warns_and_drops(self):
        frame = frame_from_halves([("2017-10-16", 14, 1, 40)])
        with pytest.warns(UserWarning):
            hourly = aggregate_hourly(frame)
        assert len(hourly) == 0

    def test_conservation_when_fully_observed(self):
        cells = [("2017-10-16", b, 1, b + 1) for b in range(14, 38)]
        frame = frame_from_halves(cells)
        hourly = aggregate_hourly(frame)
        assert hourly.total_count() == frame.total_count()


class TestWeekpart:
    def test_examples(self):
        frame = frame_from_halves([
            ("2018-04-09", 14, 1, 5),  # Monday
            ("2018-04-08", 14, 1, 7),  # Sunday
        ])
        weekday, weekend = split_weekpart(frame)
        assert weekday.dates[0] == dt.date(2018, 4, 9)
        assert weekend.dates[0] == dt.date(2018, 4, 8)

    def test_partition(self):
        cells = [(f"2018-04-{d:02d}", 14, 1, d) for d in range(2, 16)]
        frame = frame_from_halves(cells)
        weekday, weekend = split_weekpart(frame)
        assert len(weekday) + len(weekend) == len(frame)
        assert set(weekday.dates.tolist()) | set(weekend.dates.tolist()) == set(frame.dates.tolist())


class TestMissingnessReport:
    def test_all_zero(self):
        frame = frame_from_halves([("2018-01-15", 14, 1, 5), ("2018-01-15", 15, 1, 6)])
        report = missingness_report(frame)
        assert report.total == 0
        assert all(v == 0 for v in report.by_week.values())

    def test_single_missing_cell(self):
        frame = frame_from_halves([
            ("2018-01-08", 14, 1, 5),
            ("2018-01-08", 14, 4, None),
        ])
        report = missingness_report(frame)
        assert report.total == 1
        iso = dt.date(2018, 1, 8).isocalendar()
        assert report.by_week[(iso[0], iso[1])] == 1
        assert report.by_site[2] == 1  # site 4 recodes to ID 2

    def test_csv(self, tmp_path):
        frame = frame_from_halves([("2018-01-15", 14, 1, None)])
        report = missingness_report(frame)
        report.write_csv(tmp_path / "w.csv", tmp_path / "s.csv")
        assert (tmp_path / "w.csv").read_text().startswith("IsoYear,IsoWeek,Missing")
