"""Report figures, rendered with matplotlib straight to files.

Figures are built on explicit ``Figure`` objects (no pyplot state) so batch
workers can render concurrently; a module lock serializes the actual canvas
work because matplotlib's caches are not fully thread-safe.  SVG output omits
the creation date so repeated runs produce identical files.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .detector import SOT, DetectionResult, states_from_events
from .ingest import EpochSeries
from .validate import AgreementReport, ValidationPair

__all__ = ["save_detection_overlay", "save_mic_curves", "save_bland_altman"]

_render_lock = threading.Lock()

_SOT_COLOR = "#b2182b"
_WOT_COLOR = "#2166ac"


def _save(fig: Figure, path: str | Path) -> None:
    path = Path(path)
    metadata = {"Date": None} if path.suffix.lower() == ".svg" else None
    fig.savefig(path, metadata=metadata)


def save_detection_overlay(path: str | Path, series: EpochSeries, result: DetectionResult) -> None:
    """Counts with the fitted rhythm, detected sleep spans, and labeled onsets."""
    with _render_lock:
        n = len(series)
        hours = np.arange(n) / 60.0
        states = states_from_events(n, result.events)

        fig = Figure(figsize=(12, 4), dpi=100)
        ax = fig.subplots()
        ax.plot(hours, series.counts, lw=0.3, color="0.55", label="activity counts")
        ax.plot(hours, result.fit.fitted, lw=1.2, color="#1b7837", label="fitted rhythm")
        ax.axhline(result.cycles.threshold, lw=0.8, ls="--", color="#1b7837", alpha=0.7)
        ax.fill_between(
            hours,
            0,
            1,
            where=states == 0,
            transform=ax.get_xaxis_transform(),
            color="#9ecae1",
            alpha=0.35,
            linewidth=0,
            label="detected sleep",
        )
        for event in result.events:
            color = _SOT_COLOR if event.label == SOT else _WOT_COLOR
            ax.axvline(event.index / 60.0, color=color, lw=1.0, alpha=0.9)
        ax.set_xlabel("hours since wear start")
        ax.set_ylabel("activity counts")
        ax.set_xlim(0, hours[-1])
        flag = " [error-flagged]" if result.error_flag else ""
        ax.set_title(
            f"sleep-wake detection{flag}  "
            f"(CH cosinor {result.ch_cosinor:.0f}, refined {result.ch_refined:.0f})"
        )
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        _save(fig, path)


def save_mic_curves(path: str | Path, result: DetectionResult) -> None:
    """MIC value against global split index for every searched segment (final pass)."""
    with _render_lock:
        fig = Figure(figsize=(12, 3.2), dpi=100)
        ax = fig.subplots()
        for start, curve in result.mic_segments:
            ks = start + 1 + np.arange(curve.size)
            ax.plot(ks / 60.0, curve, lw=0.8)
            ax.plot(ks[np.argmin(curve)] / 60.0, curve.min(), "v", ms=4, color="black")
        ax.set_xlabel("hours since wear start")
        ax.set_ylabel("MIC")
        ax.set_title("change-point objective per refinement segment")
        fig.tight_layout()
        _save(fig, path)


def save_bland_altman(path: str | Path, pairs: list[ValidationPair], report: AgreementReport) -> None:
    """Difference against mean per pair, with bias and limits of agreement."""
    with _render_lock:
        means = np.array([(p.estimated_min + p.marker_min) / 2.0 for p in pairs])
        diffs = np.array([p.diff for p in pairs])
        labels = [p.label for p in pairs]

        fig = Figure(figsize=(7, 5), dpi=100)
        ax = fig.subplots()
        for label, color in ((SOT, _SOT_COLOR), ("WOT", _WOT_COLOR)):
            mask = np.array([lab == label for lab in labels])
            if mask.any():
                ax.scatter(means[mask], diffs[mask], s=14, alpha=0.6, color=color, label=label)
        ax.axhline(report.bias, color="black", lw=1.2, label=f"bias {report.bias:.1f} min")
        for loa in (report.loa_low, report.loa_high):
            ax.axhline(loa, color="black", lw=1.0, ls="--")
        ax.text(
            0.99,
            0.02,
            f"LOA [{report.loa_low:.1f}, {report.loa_high:.1f}] min",
            transform=ax.transAxes,
            ha="right",
            va="bottom",
            fontsize=8,
        )
        ax.set_xlabel("mean of detected and marker (min since midnight)")
        ax.set_ylabel("detected - marker (min)")
        ax.set_title(f"agreement over {report.n} matched pairs")
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        _save(fig, path)
