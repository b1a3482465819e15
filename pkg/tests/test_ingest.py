from datetime import datetime, timedelta

import numpy as np
import pytest

from cosinorcp.ingest import (
    ColumnFormat,
    EpochSeries,
    ParseError,
    aggregate,
    find_wear_periods,
    parse_series,
    screen,
)

T0 = datetime(2021, 3, 1, 12, 0)


def series(counts, epoch_seconds=60, markers=(), start=T0):
    return EpochSeries(start_time=start, epoch_seconds=epoch_seconds, counts=np.asarray(counts, float), markers=markers)


def csv_text(rows, header="timestamp,count,marker"):
    return header + "\n" + "\n".join(rows) + "\n"


class TestParse:
    def test_three_rows(self):
        rows = [f"{(T0 + timedelta(minutes=i)).isoformat()},{c},0" for i, c in enumerate([0, 5, 12])]
        s = parse_series(csv_text(rows))
        assert len(s) == 3
        np.testing.assert_array_equal(s.counts, [0.0, 5.0, 12.0])
        assert s.epoch_seconds == 60
        assert s.start_time == T0

    def test_marker_column(self):
        rows = [f"{(T0 + timedelta(minutes=i)).isoformat()},1,{m}" for i, m in enumerate([0, 1, 0])]
        s = parse_series(csv_text(rows))
        assert s.markers == (1,)

    def test_malformed_count_reports_line(self):
        rows = ["2021-03-01T12:00:00,3,0", "2021-03-01T12:01:00,abc,0"]
        with pytest.raises(ParseError) as err:
            parse_series(csv_text(rows))
        assert err.value.line == 3
        assert "abc" in str(err.value)

    def test_negative_count_rejected(self):
        rows = ["2021-03-01T12:00:00,3,0", "2021-03-01T12:01:00,-1,0"]
        with pytest.raises(ParseError):
            parse_series(csv_text(rows))

    def test_non_uniform_stride_rejected(self):
        rows = [
            "2021-03-01T12:00:00,1,0",
            "2021-03-01T12:01:00,2,0",
            "2021-03-01T12:03:00,3,0",
        ]
        with pytest.raises(ParseError) as err:
            parse_series(csv_text(rows))
        assert "stride" in str(err.value)

    def test_30s_stride_detected(self):
        rows = [f"{(T0 + timedelta(seconds=30 * i)).isoformat()},1,0" for i in range(4)]
        s = parse_series(csv_text(rows))
        assert s.epoch_seconds == 30

    def test_no_timestamp_column_uses_format_defaults(self):
        text = "count\n1\n2\n3\n"
        fmt = ColumnFormat(epoch_seconds=60, start_time=T0)
        s = parse_series(text, fmt)
        assert s.start_time == T0 and len(s) == 3

    def test_missing_count_column(self):
        with pytest.raises(ParseError):
            parse_series("time,activity\n1,2\n")

    def test_custom_column_names_and_delimiter(self):
        fmt = ColumnFormat(timestamp="when", count="vm", marker="event", delimiter=";")
        text = "when;vm;event\n2021-03-01T12:00:00;4;0\n2021-03-01T12:01:00;5;1\n"
        s = parse_series(text, fmt)
        np.testing.assert_array_equal(s.counts, [4.0, 5.0])
        assert s.markers == (1,)


class TestWearPeriods:
    def test_long_zero_run_splits(self):
        counts = [1] * 100 + [0] * 130 + [1] * 100
        periods = find_wear_periods(series(counts))
        assert [(p.start_index, p.end_index) for p in periods] == [(0, 99), (230, 329)]
        assert all(p.length_minutes == 100 for p in periods)

    def test_run_at_limit_does_not_split(self):
        counts = [1] * 100 + [0] * 120 + [1] * 100
        periods = find_wear_periods(series(counts))
        assert [(p.start_index, p.end_index) for p in periods] == [(0, 319)]
        assert periods[0].length_minutes == 320

    def test_all_zeros_yield_nothing(self):
        assert find_wear_periods(series([0] * 200)) == []

    def test_limit_counts_minutes_not_epochs(self):
        # 30-second epochs: 130 minutes of zeros is 260 epochs
        counts = [1] * 10 + [0] * 260 + [1] * 10
        assert len(find_wear_periods(series(counts, epoch_seconds=30))) == 2
        counts = [1] * 10 + [0] * 240 + [1] * 10
        assert len(find_wear_periods(series(counts, epoch_seconds=30))) == 1

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            chunks = []
            for _block in range(rng.integers(1, 6)):
                chunks.append(rng.gamma(1.0, 5.0, rng.integers(1, 300)) + 0.5)
                chunks.append(np.zeros(rng.integers(1, 300)))
            counts = np.concatenate(chunks)
            s = series(counts)
            periods = find_wear_periods(s)
            covered = set()
            for p in periods:
                covered.update(range(p.start_index, p.end_index + 1))
            separators = set()
            zero = counts == 0
            run_start = None
            for i in range(len(counts) + 1):
                inside = i < len(counts) and zero[i]
                if inside and run_start is None:
                    run_start = i
                if not inside and run_start is not None:
                    if i - run_start > 120:
                        separators.update(range(run_start, i))
                    run_start = None
            assert covered | separators == set(range(len(counts)))
            assert covered & separators == set()

    def test_idempotent_under_restriction(self):
        counts = [0] * 30 + [5] * 200 + [0] * 121 + [3] * 50 + [0] * 60
        s = series(counts)
        for p in find_wear_periods(s):
            inner = find_wear_periods(s.crop(p.start_index, p.end_index))
            assert len(inner) == 1
            assert (inner[0].start_index, inner[0].end_index) == (0, p.end_index - p.start_index)


class TestScreen:
    def test_too_short_total(self):
        report = screen(series([5] * 5000))
        assert not report.passed
        assert report.reason == "too-short-total"
        assert report.longest_wear is None

    def test_passes_with_long_wear(self):
        counts = [5] * 6000 + [0] * 200 + [5] * 1800
        report = screen(series(counts))
        assert report.passed and report.reason is None
        assert (report.longest_wear.start_index, report.longest_wear.end_index) == (0, 5999)

    def test_fails_when_all_wear_periods_short(self):
        counts = ([5] * 2500 + [0] * 150) * 3 + [5] * 50
        s = series(counts)
        assert s.total_minutes >= 8000
        report = screen(s)
        assert not report.passed
        assert report.reason == "no-long-wear-period"

    def test_passed_slice_passes_again(self):
        counts = [0] * 300 + [7] * 6200 + [0] * 130 + [2] * 100
        report = screen(series(counts))
        assert report.passed
        wear = series(counts).crop(report.longest_wear.start_index, report.longest_wear.end_index)
        assert screen(wear).passed


class TestAggregate:
    def test_pairwise_sum(self):
        out = aggregate(series([3, 5, 0, 7], epoch_seconds=30))
        np.testing.assert_array_equal(out.counts, [8.0, 7.0])
        assert out.epoch_seconds == 60

    def test_marker_index_mapping(self):
        out = aggregate(series([1, 1, 1, 1], epoch_seconds=30, markers=(2,)))
        assert out.markers == (1,)

    def test_odd_length_drops_trailing_epoch_with_warning(self):
        with pytest.warns(UserWarning):
            out = aggregate(series([1, 2, 3, 4, 9], epoch_seconds=30))
        np.testing.assert_array_equal(out.counts, [3.0, 7.0])

    def test_mass_preserved(self):
        rng = np.random.default_rng(1)
        counts = rng.gamma(1.0, 10.0, 500)
        out = aggregate(series(counts, epoch_seconds=30))
        assert float(out.counts.sum()) == pytest.approx(float(counts.sum()), rel=1e-12)

    def test_rejects_60s_series(self):
        with pytest.raises(ValueError):
            aggregate(series([1, 2]))


class TestEpochSeries:
    def test_validation(self):
        with pytest.raises(ValueError):
            series([])
        with pytest.raises(ValueError):
            series([-1.0])
        with pytest.raises(ValueError):
            series([1.0], epoch_seconds=45)
        with pytest.raises(ValueError):
            series([1.0, 2.0], markers=(5,))

    def test_crop_remaps_markers_and_time(self):
        s = series([1] * 100, markers=(10, 50, 90))
        cropped = s.crop(40, 80)
        assert cropped.markers == (10,)
        assert cropped.start_time == T0 + timedelta(minutes=40)
        assert len(cropped) == 41

    def test_time_at(self):
        s = series([1] * 10, epoch_seconds=30)
        assert s.time_at(4) == T0 + timedelta(seconds=120)
