"""Synthetic actigraphy with a known sleep/wake schedule.

Minute epochs are drawn from regime-specific Gamma distributions (wake scale
well above sleep scale, shared shape by default) around a daily schedule with
per-day jitter.  Optional noisy event markers mimic self-reported bed and
wake button presses.  Generation is a pure function of the spec, using
numpy's PCG64 generator, so fixtures are reproducible from (seed, spec).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .detector import SOT, WOT
from .gamma import GammaParams
from .ingest import EpochSeries

__all__ = ["SynthSpec", "GroundTruth", "generate", "write_series_csv", "write_truth_csv"]

MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class SynthSpec:
    days: int = 7
    sleep_onset_clock: int = 1380  # 23:00
    wake_onset_clock: int = 420  # 07:00
    jitter_sd: float = 20.0
    wake_params: GammaParams = GammaParams(shape=0.8, scale=250.0)
    sleep_params: GammaParams = GammaParams(shape=0.8, scale=12.5)
    marker_noise_sd: float = 0.0
    marker_miss_prob: float = 0.0
    seed: int = 0
    # Noon start keeps scheduled transitions away from the recording edges,
    # like a device handed out during the day.
    start_time: datetime = datetime(2021, 3, 1, 12, 0)

    def __post_init__(self):
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if not (0 <= self.sleep_onset_clock < MINUTES_PER_DAY and 0 <= self.wake_onset_clock < MINUTES_PER_DAY):
            raise ValueError("onset clocks must lie in [0, 1440)")
        if self.wake_params.scale < self.sleep_params.scale:
            raise ValueError("wake scale must be >= sleep scale")
        if not 0.0 <= self.marker_miss_prob <= 1.0:
            raise ValueError("marker_miss_prob must lie in [0, 1]")
        if self.jitter_sd < 0 or self.marker_noise_sd < 0:
            raise ValueError("noise SDs must be non-negative")


@dataclass(frozen=True)
class GroundTruth:
    """True transitions, and which of them produced a (noisy) marker."""

    true_events: tuple[tuple[int, str], ...]
    marker_indices: tuple[int, ...]
    event_markers: tuple[int | None, ...]  # aligned with true_events


def generate(spec: SynthSpec) -> tuple[EpochSeries, GroundTruth]:
    """Generate one subject's series plus its ground truth.

    Sleep episodes follow the wall clock: the episode of calendar day d
    starts at ``sleep_onset_clock`` of day d and ends at ``wake_onset_clock``
    of the following morning, each with its own jitter draw.  The recording
    begins at ``start_time`` (its clock time decides how episodes fall on
    series indices) and covers ``days * 1440`` minute epochs, so the default
    noon start over 7 days yields exactly 7 sleep and 7 wake onsets inside
    the series.  Jitter that would make consecutive episodes overlap raises
    instead of silently reordering the schedule.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.days * MINUTES_PER_DAY
    start_clock = spec.start_time.hour * 60 + spec.start_time.minute

    crosses_midnight = spec.sleep_onset_clock >= spec.wake_onset_clock
    episodes = []  # (sleep_start, wake) as fractional series indices
    for day in range(-1, spec.days + 1):
        onset = day * MINUTES_PER_DAY + spec.sleep_onset_clock + rng.normal(0.0, spec.jitter_sd)
        wake_day = day + 1 if crosses_midnight else day
        wake = wake_day * MINUTES_PER_DAY + spec.wake_onset_clock + rng.normal(0.0, spec.jitter_sd)
        episodes.append((onset - start_clock, wake - start_clock))

    previous_wake = -np.inf
    for onset, wake in episodes:
        if onset >= wake or onset <= previous_wake:
            raise ValueError("infeasible schedule: jittered sleep windows overlap")
        previous_wake = wake

    awake = np.ones(n, dtype=bool)
    true_events: list[tuple[int, str]] = []
    for onset, wake in episodes:
        lo = int(round(onset))
        hi = int(round(wake))
        if hi <= 0 or lo >= n:
            continue
        awake[max(lo, 0) : min(hi, n)] = False
        if 0 < lo < n:
            true_events.append((lo, SOT))
        if 0 < hi < n:
            true_events.append((hi, WOT))
    true_events.sort()

    shape = np.where(awake, spec.wake_params.shape, spec.sleep_params.shape)
    scale = np.where(awake, spec.wake_params.scale, spec.sleep_params.scale)
    counts = rng.gamma(shape, scale)

    event_markers: list[int | None] = []
    for index, _label in true_events:
        keep = rng.random() >= spec.marker_miss_prob
        noisy = int(round(index + rng.normal(0.0, spec.marker_noise_sd)))
        event_markers.append(min(max(noisy, 0), n - 1) if keep else None)

    markers = tuple(sorted({m for m in event_markers if m is not None}))
    series = EpochSeries(
        start_time=spec.start_time,
        epoch_seconds=60,
        counts=counts,
        markers=markers,
    )
    truth = GroundTruth(
        true_events=tuple(true_events),
        marker_indices=markers,
        event_markers=tuple(event_markers),
    )
    return series, truth


def write_series_csv(series: EpochSeries, path: str | Path) -> None:
    """Write the series in the same delimited schema the parser consumes."""
    marker_set = set(series.markers)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["timestamp", "count", "marker"])
        for i, count in enumerate(series.counts):
            writer.writerow(
                [series.time_at(i).isoformat(), f"{count:.6f}", 1 if i in marker_set else 0]
            )


def write_truth_csv(truth: GroundTruth, series: EpochSeries, path: str | Path) -> None:
    """Write true events: index, wall time, label, and whether a marker survived."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["index", "wall_time", "label", "is_marker"])
        for (index, label), marker in zip(truth.true_events, truth.event_markers):
            writer.writerow(
                [index, series.time_at(index).isoformat(), label, 0 if marker is None else 1]
            )
