"""Agreement between detected sleep/wake onsets and self-reported event markers.

Detected events are paired with markers found within a +/-180 minute window;
of several candidates, a sleep onset keeps the latest and a wake onset the
earliest, since people tend to press the button before falling asleep and
after getting up.  Times are compared as minutes since midnight, with sleep
onsets past midnight shifted by +1440 so late and early bedtimes stay on one
numeric scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .detector import SOT, ChangePointEvent

__all__ = [
    "DEFAULT_WINDOW_MINUTES",
    "ValidationPair",
    "AgreementStats",
    "AgreementReport",
    "VarianceShares",
    "match_markers",
    "to_minutes_since_midnight",
    "bland_altman",
    "variance_summary",
]

DEFAULT_WINDOW_MINUTES = 180
NOON_CUTOFF_MINUTES = 720
LOA_MULTIPLIER = 1.96


@dataclass(frozen=True)
class ValidationPair:
    """One matched (estimated onset, marker) pair in minutes since midnight."""

    subject_id: str
    day_index: int
    label: str
    estimated_min: float
    marker_min: float

    @property
    def diff(self) -> float:
        return self.estimated_min - self.marker_min


@dataclass(frozen=True)
class AgreementStats:
    n: int
    bias: float
    sd: float | None
    loa_low: float | None
    loa_high: float | None


@dataclass(frozen=True)
class AgreementReport:
    n: int
    bias: float
    sd: float
    loa_low: float
    loa_high: float
    by_label: dict[str, AgreementStats]


@dataclass(frozen=True)
class VarianceShares:
    """Descriptive percentage shares of the summed variance components."""

    method: float
    subject: float
    day: float
    residual: float
    zero_variance: bool = False

    def as_dict(self) -> dict[str, float]:
        return {
            "method": self.method,
            "subject": self.subject,
            "day": self.day,
            "residual": self.residual,
        }


def to_minutes_since_midnight(ts: datetime, label: str) -> float:
    """Minutes elapsed since the most recent midnight.

    Sleep onsets on the morning side of midnight (before noon) get +1440 so
    they sort after the previous evening's bedtimes.
    """
    minutes = ts.hour * 60 + ts.minute + ts.second / 60 + ts.microsecond / 6e7
    if label == SOT and minutes < NOON_CUTOFF_MINUTES:
        minutes += 1440.0
    return minutes


def _day_index(ts: datetime, label: str, base: datetime) -> int:
    day = (ts.date() - base.date()).days
    if label == SOT and (ts.hour * 60 + ts.minute) < NOON_CUTOFF_MINUTES:
        day -= 1  # a small-hours bedtime belongs to the previous evening
    return day


def match_markers(
    events: list[ChangePointEvent] | tuple[ChangePointEvent, ...],
    markers: list[datetime],
    window_minutes: float = DEFAULT_WINDOW_MINUTES,
    subject_id: str = "",
) -> list[ValidationPair]:
    """Pair each event with at most one marker within the matching window.

    A sleep onset prefers the latest candidate, a wake onset the earliest.
    Each marker is consumed by at most one event; when two events want the
    same marker, the one closer in time wins and the loser falls back to its
    remaining candidates.  Events with no candidate yield no pair.
    """
    if not events:
        return []
    markers = sorted(markers)
    window = window_minutes * 60.0

    candidates: list[list[int]] = []
    for event in events:
        close = [
            j
            for j, m in enumerate(markers)
            if abs((m - event.wall_time).total_seconds()) <= window
        ]
        candidates.append(close)

    assigned: dict[int, int] = {}  # event position -> marker position
    consumed: set[int] = set()
    unmatched = set(range(len(events)))
    while True:
        proposals: dict[int, list[int]] = {}
        for i in sorted(unmatched):
            remaining = [j for j in candidates[i] if j not in consumed]
            if not remaining:
                continue
            pick = max(remaining) if events[i].label == SOT else min(remaining)
            proposals.setdefault(pick, []).append(i)
        if not proposals:
            break
        for j, contenders in proposals.items():
            winner = min(
                contenders,
                key=lambda i: (abs((markers[j] - events[i].wall_time).total_seconds()), i),
            )
            assigned[winner] = j
            consumed.add(j)
            unmatched.discard(winner)

    base = events[0].wall_time
    pairs = []
    for i in sorted(assigned):
        event = events[i]
        marker = markers[assigned[i]]
        pairs.append(
            ValidationPair(
                subject_id=subject_id,
                day_index=_day_index(event.wall_time, event.label, base),
                label=event.label,
                estimated_min=to_minutes_since_midnight(event.wall_time, event.label),
                marker_min=to_minutes_since_midnight(marker, event.label),
            )
        )
    return pairs


def _stats(diffs: np.ndarray) -> AgreementStats:
    bias = float(np.mean(diffs))
    if diffs.size < 2:
        return AgreementStats(int(diffs.size), bias, None, None, None)
    sd = float(np.std(diffs, ddof=1))
    return AgreementStats(
        int(diffs.size),
        bias,
        sd,
        bias - LOA_MULTIPLIER * sd,
        bias + LOA_MULTIPLIER * sd,
    )


def bland_altman(pairs: list[ValidationPair]) -> AgreementReport:
    """Bias and 95% limits of agreement (bias +/- 1.96 sample SD) of the pair differences."""
    if len(pairs) < 2:
        raise ValueError("need at least two pairs for agreement statistics")
    diffs = np.array([p.diff for p in pairs], dtype=float)
    overall = _stats(diffs)
    by_label = {}
    for label in sorted({p.label for p in pairs}):
        by_label[label] = _stats(np.array([p.diff for p in pairs if p.label == label]))
    return AgreementReport(
        n=overall.n,
        bias=overall.bias,
        sd=overall.sd,
        loa_low=overall.loa_low,
        loa_high=overall.loa_high,
        by_label=by_label,
    )


def variance_summary(pairs: list[ValidationPair]) -> VarianceShares:
    """Descriptive decomposition of onset-time variance into percentage shares.

    Each pair contributes two observations of the same (subject, day) event,
    one per method (detected vs marker).  Sums of squares are computed for
    the method contrast, between-subject means, day-within-subject means, and
    an explicit residual; shares are percentages of their total, so they are
    non-negative and sum to 100 even on unbalanced data.  This is a plain
    sums-of-squares summary, not a fitted mixed model.
    """
    subjects = {p.subject_id for p in pairs}
    if len(subjects) < 2:
        raise ValueError("insufficient grouping structure: need at least two subjects")
    for sid in subjects:
        days = {p.day_index for p in pairs if p.subject_id == sid}
        if len(days) < 2:
            raise ValueError(f"insufficient grouping structure: subject {sid!r} has fewer than two days")

    values = []
    keys = []  # (subject, day, method)
    for p in pairs:
        values.append(p.estimated_min)
        keys.append((p.subject_id, p.day_index, "detected"))
        values.append(p.marker_min)
        keys.append((p.subject_id, p.day_index, "marker"))
    y = np.array(values, dtype=float)
    grand = y.mean()

    def group_means(selector) -> np.ndarray:
        groups: dict = {}
        for value, key in zip(y, keys):
            groups.setdefault(selector(key), []).append(value)
        means = {g: float(np.mean(v)) for g, v in groups.items()}
        return np.array([means[selector(key)] for key in keys])

    method_mean = group_means(lambda k: k[2])
    subject_mean = group_means(lambda k: k[0])
    cell_mean = group_means(lambda k: (k[0], k[1]))

    ss_method = float(np.sum((method_mean - grand) ** 2))
    ss_subject = float(np.sum((subject_mean - grand) ** 2))
    ss_day = float(np.sum((cell_mean - subject_mean) ** 2))
    residual = y - cell_mean - (method_mean - grand)
    ss_residual = float(np.sum(residual**2))

    total = ss_method + ss_subject + ss_day + ss_residual
    if total == 0.0:
        return VarianceShares(0.0, 0.0, 0.0, 0.0, zero_variance=True)
    return VarianceShares(
        method=100.0 * ss_method / total,
        subject=100.0 * ss_subject / total,
        day=100.0 * ss_day / total,
        residual=100.0 * ss_residual / total,
    )
