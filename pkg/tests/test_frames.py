"""Count frame container and its CSV round trip."""

import datetime as dt

import numpy as np
import pytest

from flowcast.errors import DuplicateRowError, InvalidInputError, ParseError
from flowcast.frames import CountFrame, parse_date, read_count_csv


def small_frame() -> CountFrame:
    d1, d2 = dt.date(2024, 1, 1), dt.date(2024, 1, 2)
    return CountFrame(
        dates=np.array([d1, d1, d2, d2], dtype=object),
        time_bins=np.array([0, 1, 0, 1]),
        sites=np.array([1, 1, 1, 1]),
        values=np.array([10.0, np.nan, 12.0, 13.0]),
        bins_per_day=12,
    )


class TestParseDate:
    def test_iso(self):
        assert parse_date("2017-10-16") == dt.date(2017, 10, 16)

    def test_slash_two_digit_year(self):
        assert parse_date("16/10/17") == dt.date(2017, 10, 16)

    def test_slash_four_digit_year(self):
        assert parse_date("16/10/2017") == dt.date(2017, 10, 16)

    def test_garbage(self):
        with pytest.raises(InvalidInputError):
            parse_date("yesterday")


class TestCountFrame:
    def test_round_trip(self, tmp_path):
        frame = small_frame()
        path = tmp_path / "counts.csv"
        frame.write_csv(path)
        back = read_count_csv(path, bins_per_day=12)
        assert back.bins_per_day == 12
        np.testing.assert_array_equal(back.dates, frame.dates)
        np.testing.assert_array_equal(back.time_bins, frame.time_bins)
        np.testing.assert_array_equal(back.sites, frame.sites)
        np.testing.assert_array_equal(np.isnan(back.values), np.isnan(frame.values))
        np.testing.assert_allclose(back.values[~np.isnan(back.values)],
                                   frame.values[~np.isnan(frame.values)])

    def test_key_index_rejects_duplicates(self):
        frame = small_frame()
        frame.sites[1] = 1
        frame.time_bins[1] = 0  # now duplicates row 0
        with pytest.raises(DuplicateRowError):
            frame.key_index()

    def test_subset_and_masks(self):
        frame = small_frame()
        first_day = frame.subset(frame.date_range_mask(dt.date(2024, 1, 1), dt.date(2024, 1, 1)))
        assert len(first_day) == 2
        assert frame.missing_mask().sum() == 1
        assert frame.total_count() == 35.0

    def test_bad_bin_rejected(self):
        with pytest.raises(InvalidInputError):
            CountFrame(
                dates=np.array([dt.date(2024, 1, 1)], dtype=object),
                time_bins=np.array([12]),
                sites=np.array([1]),
                values=np.array([1.0]),
                bins_per_day=12,
            )

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c,d\n1,2,3,4\n")
        with pytest.raises(ParseError):
            read_count_csv(path)
