"""Command-line interface: detect, batch, validate, synth.

Exit codes form a total mapping:

* 0 - success (for ``batch``: the run completed; per-subject failures are
  recorded in the manifest and warned on stderr)
* 1 - input failure: unreadable/malformed file, empty glob, bad config,
  or a processing error
* 2 - screened out: the recording has no 4-day continuous wear period
* 3 - detection error-flagged by the CH criterion (artifacts still written)
* 4 - validation matched zero pairs
"""

from __future__ import annotations

import argparse
import csv
import glob as globmod
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime
from pathlib import Path

from .detector import SOT, WOT, ChangePointEvent, DetectionConfig, DetectionResult, detect
from .ingest import ColumnFormat, EpochSeries, ParseError, aggregate, parse_series, screen
from .synth import SynthSpec, generate, write_series_csv, write_truth_csv
from .validate import (
    DEFAULT_WINDOW_MINUTES,
    AgreementReport,
    bland_altman,
    match_markers,
    variance_summary,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SCREENED_OUT = 2
EXIT_ERROR_FLAGGED = 3
EXIT_NO_PAIRS = 4

# config-file key -> (DetectionConfig field, parser)
_DETECTION_KEYS = {
    "dichotomize_q": ("dichotomize_q", float),
    "lambda": ("mic_lambda", float),
    "edge_guard_minutes": ("edge_guard_minutes", int),
    "refinement_passes": ("refinement_passes", int),
    "ch_delta_threshold": ("ch_delta_threshold", float),
    "positivity_offset": ("positivity_offset", float),
}
_FORMAT_KEYS = {
    "timestamp_col": ("timestamp", str),
    "count_col": ("count", str),
    "marker_col": ("marker", str),
    "delimiter": ("delimiter", str),
    "epoch_seconds": ("epoch_seconds", int),
}


def _parse_kv_lines(lines, source: str) -> dict[str, str]:
    values = {}
    for i, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{source} line {i}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | None, overrides: list[str]) -> tuple[DetectionConfig, ColumnFormat]:
    """Flat key=value config file; ``--set key=value`` flags override file values."""
    values: dict[str, str] = {}
    if path:
        values.update(_parse_kv_lines(Path(path).read_text().splitlines(), path))
    values.update(_parse_kv_lines(overrides, "--set"))

    cfg = DetectionConfig()
    fmt = ColumnFormat()
    for key, value in values.items():
        if key in _DETECTION_KEYS:
            field, cast = _DETECTION_KEYS[key]
            cfg = replace(cfg, **{field: cast(value)})
        elif key in _FORMAT_KEYS:
            field, cast = _FORMAT_KEYS[key]
            fmt = replace(fmt, **{field: cast(value)})
        else:
            known = sorted(_DETECTION_KEYS) + sorted(_FORMAT_KEYS)
            raise ValueError(f"unknown config key {key!r}; known keys: {', '.join(known)}")
    return cfg, fmt


def _config_dict(cfg: DetectionConfig) -> dict:
    return {
        "dichotomize_q": cfg.dichotomize_q,
        "lambda": cfg.mic_lambda,
        "edge_guard_minutes": cfg.edge_guard_minutes,
        "refinement_passes": cfg.refinement_passes,
        "ch_delta_threshold": cfg.ch_delta_threshold,
        "positivity_offset": cfg.positivity_offset,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_events_csv(path: Path, subject_id: str, result: DetectionResult) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["subject_id", "wall_time", "label", "index", "provenance"])
        for event in result.events:
            writer.writerow(
                [subject_id, event.wall_time.isoformat(), event.label, event.index, event.provenance]
            )


def run_detect_file(
    path: str | Path,
    cfg: DetectionConfig,
    fmt: ColumnFormat,
    out_dir: Path,
    subject_id: str,
    make_plots: bool,
) -> tuple[str, int]:
    """Process one file end to end; returns (status, exit code) and writes artifacts."""
    series = parse_series(Path(path).read_text(), fmt)
    if series.epoch_seconds == 30:
        series = aggregate(series)
    report = screen(series)

    diagnostics: dict = {
        "subject_id": subject_id,
        "input": str(path),
        "config": _config_dict(cfg),
        "screen": {
            "passed": report.passed,
            "total_minutes": report.total_minutes,
            "reason": report.reason,
            "wear_start_index": report.longest_wear.start_index if report.longest_wear else None,
            "wear_end_index": report.longest_wear.end_index if report.longest_wear else None,
            "wear_minutes": report.longest_wear.length_minutes if report.longest_wear else None,
        },
        "detection": None,
    }
    if not report.passed:
        _write_json(out_dir / f"{subject_id}_diagnostics.json", diagnostics)
        return "screened-out", EXIT_SCREENED_OUT

    wear = series.crop(report.longest_wear.start_index, report.longest_wear.end_index)
    result = detect(wear, cfg)
    diagnostics["detection"] = {
        "cosinor": {
            "mes": result.fit.params.mes,
            "amp": result.fit.params.amp,
            "phi": result.fit.params.phi,
            "rss": result.fit.rss,
            "converged": result.fit.converged,
            "iterations": result.fit.iterations,
        },
        "dichotomize_threshold": result.cycles.threshold,
        "rough_boundaries": int(result.cycles.boundaries.size),
        "ch_cosinor": result.ch_cosinor,
        "ch_refined": result.ch_refined,
        "error_flag": result.error_flag,
        "n_events": len(result.events),
        "notes": list(result.notes),
    }
    _write_events_csv(out_dir / f"{subject_id}_events.csv", subject_id, result)
    _write_json(out_dir / f"{subject_id}_diagnostics.json", diagnostics)
    if make_plots:
        from . import plots

        plots.save_detection_overlay(out_dir / f"{subject_id}_overlay.svg", wear, result)
        plots.save_mic_curves(out_dir / f"{subject_id}_mic.svg", result)
    if result.error_flag:
        return "error-flagged", EXIT_ERROR_FLAGGED
    return "ok", EXIT_OK


def cmd_detect(args) -> int:
    cfg, fmt = load_config(args.config, args.set)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    subject_id = args.subject_id or Path(args.input).stem
    status, code = run_detect_file(args.input, cfg, fmt, out_dir, subject_id, not args.no_plots)
    print(f"{subject_id}: {status}")
    return code


def cmd_batch(args) -> int:
    cfg, fmt = load_config(args.config, args.set)
    files = sorted(globmod.glob(args.glob))
    if not files:
        print(f"error: no files match {args.glob!r}", file=sys.stderr)
        return EXIT_INPUT
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    subject_ids = []
    seen: set[str] = set()
    for path in files:
        sid = Path(path).stem
        if sid in seen:
            suffix = 2
            while f"{sid}_{suffix}" in seen:
                suffix += 1
            sid = f"{sid}_{suffix}"
        seen.add(sid)
        subject_ids.append(sid)

    def worker(item):
        path, sid = item
        started = time.perf_counter()
        entry = {"input": str(path)}
        try:
            status, _code = run_detect_file(path, cfg, fmt, out_dir, sid, not args.no_plots)
            entry["status"] = status
        except Exception as exc:  # keep the batch going; record the failure
            entry["status"] = "failed"
            entry["error"] = f"{type(exc).__name__}: {exc}"
        entry["seconds"] = round(time.perf_counter() - started, 3)
        return sid, entry

    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, args.parallelism)) as pool:
        entries = dict(pool.map(worker, zip(files, subject_ids)))
    total = time.perf_counter() - started

    for sid in sorted(entries):
        if entries[sid]["status"] == "failed":
            print(f"warning: {sid} failed: {entries[sid]['error']}", file=sys.stderr)

    manifest = {
        "glob": args.glob,
        "parallelism": args.parallelism,
        "config": _config_dict(cfg),
        "n_files": len(files),
        "total_seconds": round(total, 3),
        "subjects": entries,
        "status_counts": {
            status: sum(1 for e in entries.values() if e["status"] == status)
            for status in sorted({e["status"] for e in entries.values()})
        },
    }
    _write_json(out_dir / "manifest.json", manifest)
    counts = ", ".join(f"{k}={v}" for k, v in manifest["status_counts"].items())
    print(f"processed {len(files)} files in {total:.1f} s ({counts})")
    return EXIT_OK


def _read_events_csv(path: str | Path) -> tuple[str, list[ChangePointEvent]]:
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    if not rows:
        raise ValueError(f"{path}: no events")
    subjects = {row["subject_id"] for row in rows}
    if len(subjects) != 1:
        raise ValueError(f"{path}: expected one subject per events file, got {sorted(subjects)}")
    events = [
        ChangePointEvent(
            index=int(row["index"]),
            wall_time=datetime.fromisoformat(row["wall_time"]),
            label=row["label"],
            provenance=row["provenance"],
        )
        for row in rows
    ]
    return subjects.pop(), events


def _read_reference(path: str | Path, fmt: ColumnFormat):
    """A marker source: either a series file (noisy markers) or a truth file."""
    text = Path(path).read_text()
    header = next(csv.reader(text.splitlines()[:1], delimiter=fmt.delimiter), [])
    header = [h.strip() for h in header]
    if fmt.count in header:
        series = parse_series(text, fmt)
        return [series.time_at(i) for i in series.markers], None
    if "label" in header and "wall_time" in header:
        labeled = []
        for row in csv.DictReader(text.splitlines()):
            labeled.append((datetime.fromisoformat(row["wall_time"]), row["label"]))
        return None, labeled
    raise ValueError(
        f"{path}: expected a series file (column {fmt.count!r}) or a truth file (wall_time,label)"
    )


def _agreement_payload(report: AgreementReport, shares, window: float) -> dict:
    def stats_dict(s):
        return {"n": s.n, "bias": s.bias, "sd": s.sd, "loa_low": s.loa_low, "loa_high": s.loa_high}

    return {
        "window_minutes": window,
        "n": report.n,
        "bias": report.bias,
        "sd": report.sd,
        "loa_low": report.loa_low,
        "loa_high": report.loa_high,
        "by_label": {label: stats_dict(s) for label, s in report.by_label.items()},
        "variance_shares": None
        if shares is None
        else {**shares.as_dict(), "zero_variance": shares.zero_variance},
    }


def cmd_validate(args) -> int:
    _cfg, fmt = load_config(args.config, args.set)
    subject_id, events = _read_events_csv(args.events)
    marker_times, labeled_truth = _read_reference(args.markers, fmt)

    if marker_times is not None:
        pairs = match_markers(events, marker_times, args.window, subject_id)
    else:
        # ground truth carries labels: match within each label separately
        pairs = []
        for label in (SOT, WOT):
            pairs.extend(
                match_markers(
                    [e for e in events if e.label == label],
                    [t for t, lab in labeled_truth if lab == label],
                    args.window,
                    subject_id,
                )
            )
        pairs.sort(key=lambda p: (p.day_index, p.estimated_min, p.label))

    if not pairs:
        print("error: no marker fell within the matching window of any event", file=sys.stderr)
        return EXIT_NO_PAIRS

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "pairs.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["subject_id", "day_index", "label", "estimated_min", "marker_min", "diff"])
        for p in pairs:
            writer.writerow(
                [p.subject_id, p.day_index, p.label, f"{p.estimated_min:.4f}", f"{p.marker_min:.4f}", f"{p.diff:.4f}"]
            )

    if len(pairs) < 2:
        print(f"matched {len(pairs)} pair; too few for agreement statistics", file=sys.stderr)
        _write_json(out_dir / "agreement.json", {"n": len(pairs), "window_minutes": args.window})
        return EXIT_OK

    report = bland_altman(pairs)
    try:
        shares = variance_summary(pairs)
    except ValueError:
        shares = None
    _write_json(out_dir / "agreement.json", _agreement_payload(report, shares, args.window))
    if not args.no_plots:
        from . import plots

        plots.save_bland_altman(out_dir / "bland_altman.svg", pairs, report)
    print(
        f"{report.n} pairs: bias {report.bias:.1f} min, "
        f"LOA [{report.loa_low:.1f}, {report.loa_high:.1f}] min"
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.subjects):
        spec = SynthSpec(
            days=args.days,
            jitter_sd=args.jitter_sd,
            marker_noise_sd=args.marker_noise_sd,
            marker_miss_prob=args.marker_miss_prob,
            seed=args.seed + i,
        )
        series, truth = generate(spec)
        sid = f"synth_{i:03d}"
        write_series_csv(series, out_dir / f"{sid}.csv")
        write_truth_csv(truth, series, out_dir / f"{sid}_truth.csv")
    print(f"wrote {args.subjects} subject(s) to {out_dir}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosinorcp",
        description="Sleep-wake cycle detection from actigraphy: cosinor rhythm fit "
        "with Gamma change-point refinement.",
        epilog="exit codes: 0 ok, 1 input failure, 2 screened out, "
        "3 error-flagged, 4 no matched pairs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    p = sub.add_parser("detect", help="detect sleep/wake onsets in one recording")
    p.add_argument("--input", required=True, help="delimited actigraphy file")
    p.add_argument("--subject-id", help="subject id for artifacts (default: file stem)")
    add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("batch", help="process many recordings concurrently")
    p.add_argument("--glob", required=True, help="input file pattern")
    p.add_argument("--parallelism", type=int, default=4, help="worker threads (default: 4)")
    add_common(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("validate", help="match detected onsets to markers or ground truth")
    p.add_argument("--events", required=True, help="events CSV from detect")
    p.add_argument("--markers", required=True,
                   help="series file with a marker column, or a truth file (wall_time,label)")
    p.add_argument("--window", type=float, default=DEFAULT_WINDOW_MINUTES,
                   help="matching window in minutes (default: 180)")
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate synthetic recordings with ground truth")
    p.add_argument("--subjects", type=int, default=1, help="number of subjects (default: 1)")
    p.add_argument("--days", type=int, default=7, help="days per subject (default: 7)")
    p.add_argument("--seed", type=int, default=0, help="base seed; subject i uses seed+i")
    p.add_argument("--jitter-sd", type=float, default=20.0, help="onset jitter SD in minutes")
    p.add_argument("--marker-noise-sd", type=float, default=0.0, help="marker noise SD in minutes")
    p.add_argument("--marker-miss-prob", type=float, default=0.0, help="marker miss probability")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
