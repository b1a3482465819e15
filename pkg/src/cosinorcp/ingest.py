"""Actigraphy ingestion: delimited-file parsing, wear screening, epoch aggregation.

A recording enters detection only if it carries at least four days
(5,760 minutes) of continuous wear, where "continuous" tolerates zero-count
runs of at most 120 minutes.  Detection downstream runs on the single
longest wear period, aggregated to 60-second epochs.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timedelta

import numpy as np

__all__ = [
    "ParseError",
    "ColumnFormat",
    "EpochSeries",
    "WearPeriod",
    "ScreenReport",
    "parse_series",
    "find_wear_periods",
    "screen",
    "aggregate",
]

MIN_SCREEN_MINUTES = 5760
DEFAULT_MAX_ZERO_RUN_MINUTES = 120


class ParseError(ValueError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ColumnFormat:
    """Column names and fallbacks for delimited actigraphy files.

    ``epoch_seconds`` and ``start_time`` are only used when the file has no
    timestamp column; otherwise both are derived from the timestamps.
    """

    timestamp: str = "timestamp"
    count: str = "count"
    marker: str = "marker"
    delimiter: str = ","
    epoch_seconds: int = 60
    start_time: datetime = datetime(2000, 1, 1)


@dataclass(frozen=True)
class EpochSeries:
    """Uniformly sampled activity counts with optional event-marker indices."""

    start_time: datetime
    epoch_seconds: int
    counts: np.ndarray
    markers: tuple[int, ...] = ()

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(counts)):
            raise ValueError("counts contain non-finite values")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if self.epoch_seconds not in (30, 60):
            raise ValueError(f"epoch_seconds must be 30 or 60, got {self.epoch_seconds}")
        markers = tuple(sorted(set(int(m) for m in self.markers)))
        object.__setattr__(self, "markers", markers)
        if markers and not (0 <= markers[0] and markers[-1] < counts.size):
            raise ValueError("marker index outside the series")

    def __len__(self) -> int:
        return self.counts.size

    @property
    def total_minutes(self) -> int:
        return self.counts.size * self.epoch_seconds // 60

    def time_at(self, index: int) -> datetime:
        """Wall-clock time of the epoch at ``index``."""
        return self.start_time + timedelta(seconds=index * self.epoch_seconds)

    def with_counts(self, counts: np.ndarray) -> EpochSeries:
        """Same series with counts replaced (markers and timing kept)."""
        return replace(self, counts=counts)

    def crop(self, start_index: int, end_index: int) -> EpochSeries:
        """Restrict to epochs ``start_index..end_index`` (inclusive)."""
        if not 0 <= start_index <= end_index < self.counts.size:
            raise ValueError("crop range outside the series")
        markers = tuple(m - start_index for m in self.markers if start_index <= m <= end_index)
        return EpochSeries(
            start_time=self.time_at(start_index),
            epoch_seconds=self.epoch_seconds,
            counts=self.counts[start_index : end_index + 1].copy(),
            markers=markers,
        )


@dataclass(frozen=True)
class WearPeriod:
    """Maximal stretch with no internal zero-run beyond the configured limit."""

    start_index: int
    end_index: int
    epoch_seconds: int

    @property
    def length_minutes(self) -> int:
        return (self.end_index - self.start_index + 1) * self.epoch_seconds // 60


@dataclass(frozen=True)
class ScreenReport:
    passed: bool
    total_minutes: int
    longest_wear: WearPeriod | None
    reason: str | None  # "too-short-total" | "no-long-wear-period" | None


def parse_series(text: str, fmt: ColumnFormat = ColumnFormat()) -> EpochSeries:
    """Parse delimited actigraphy text into an :class:`EpochSeries`.

    The file must have a header row naming at least the count column.
    Timestamps, when present, must be ISO-8601 and strictly increasing at a
    uniform 30 s or 60 s stride.  Non-zero marker-column values flag the row
    as a self-reported event.
    """
    reader = csv.reader(io.StringIO(text), delimiter=fmt.delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty file") from None
    header = [h.strip() for h in header]
    try:
        count_col = header.index(fmt.count)
    except ValueError:
        raise ParseError(1, f"missing count column {fmt.count!r}") from None
    ts_col = header.index(fmt.timestamp) if fmt.timestamp in header else None
    marker_col = header.index(fmt.marker) if fmt.marker in header else None

    counts: list[float] = []
    markers: list[int] = []
    times: list[datetime] = []
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) <= count_col:
            raise ParseError(line, f"expected at least {count_col + 1} columns, got {len(row)}")
        try:
            value = float(row[count_col])
        except ValueError:
            raise ParseError(line, f"count {row[count_col]!r} is not a number") from None
        if not np.isfinite(value) or value < 0:
            raise ParseError(line, f"count {value} is negative or non-finite")
        counts.append(value)
        if marker_col is not None and len(row) > marker_col and row[marker_col].strip():
            try:
                flag = float(row[marker_col])
            except ValueError:
                raise ParseError(line, f"marker {row[marker_col]!r} is not a number") from None
            if flag != 0:
                markers.append(len(counts) - 1)
        if ts_col is not None:
            if len(row) <= ts_col or not row[ts_col].strip():
                raise ParseError(line, "missing timestamp")
            try:
                times.append(datetime.fromisoformat(row[ts_col].strip()))
            except ValueError:
                raise ParseError(line, f"timestamp {row[ts_col]!r} is not ISO-8601") from None

    if not counts:
        raise ParseError(2, "no data rows")

    start_time = fmt.start_time
    epoch_seconds = fmt.epoch_seconds
    if times:
        start_time = times[0]
        if len(times) >= 2:
            stride = (times[1] - times[0]).total_seconds()
            if stride not in (30.0, 60.0):
                raise ParseError(3, f"timestamp stride {stride:g} s is neither 30 s nor 60 s")
            for i in range(1, len(times)):
                if (times[i] - times[i - 1]).total_seconds() != stride:
                    raise ParseError(i + 2, "non-uniform timestamp stride")
            epoch_seconds = int(stride)

    return EpochSeries(
        start_time=start_time,
        epoch_seconds=epoch_seconds,
        counts=np.asarray(counts, dtype=float),
        markers=tuple(markers),
    )


def _zero_runs(counts: np.ndarray) -> list[tuple[int, int]]:
    """(start, end) inclusive index pairs of maximal zero runs."""
    zero = counts == 0
    if not zero.any():
        return []
    padded = np.flatnonzero(np.diff(np.concatenate(([0], zero.astype(np.int8), [0]))))
    return [(int(padded[i]), int(padded[i + 1] - 1)) for i in range(0, padded.size, 2)]


def find_wear_periods(
    s: EpochSeries, max_zero_run_minutes: int = DEFAULT_MAX_ZERO_RUN_MINUTES
) -> list[WearPeriod]:
    """Split the series at zero-runs strictly longer than the limit.

    Runs exactly at the limit remain inside a period.  Separator runs belong
    to no period; stretches containing no activity at all are not wear.
    """
    limit_epochs = max_zero_run_minutes * 60 // s.epoch_seconds
    separators = [(a, b) for a, b in _zero_runs(s.counts) if b - a + 1 > limit_epochs]

    periods = []
    cursor = 0
    for a, b in separators + [(len(s), len(s))]:
        if a > cursor and np.any(s.counts[cursor:a] != 0):
            periods.append(WearPeriod(cursor, a - 1, s.epoch_seconds))
        cursor = b + 1
    return periods


def screen(s: EpochSeries) -> ScreenReport:
    """Decide whether the recording supports circadian-rhythm estimation.

    Passing requires a total duration of at least ``MIN_SCREEN_MINUTES`` and
    a longest wear period of at least the same length; the longest period is
    reported for downstream cropping.
    """
    total = s.total_minutes
    if total < MIN_SCREEN_MINUTES:
        return ScreenReport(False, total, None, "too-short-total")
    periods = find_wear_periods(s)
    if not periods:
        return ScreenReport(False, total, None, "no-long-wear-period")
    longest = max(periods, key=lambda p: p.length_minutes)
    if longest.length_minutes < MIN_SCREEN_MINUTES:
        return ScreenReport(False, total, longest, "no-long-wear-period")
    return ScreenReport(True, total, longest, None)


def aggregate(s: EpochSeries) -> EpochSeries:
    """Sum 30-second epoch pairs into 60-second epochs.

    Marker indices map to the containing 60-second epoch.  An odd trailing
    epoch is dropped with a warning; a marker on it is dropped with it.
    """
    if s.epoch_seconds != 30:
        raise ValueError("aggregate expects a 30-second series")
    n = len(s)
    if n % 2:
        warnings.warn("odd-length 30-second series: dropping the trailing epoch")
        n -= 1
    if n == 0:
        raise ValueError("series too short to aggregate")
    counts = s.counts[:n].reshape(-1, 2).sum(axis=1)
    markers = tuple(sorted({m // 2 for m in s.markers if m < n}))
    return EpochSeries(
        start_time=s.start_time,
        epoch_seconds=60,
        counts=counts,
        markers=markers,
    )
