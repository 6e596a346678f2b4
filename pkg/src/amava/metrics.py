"""Offline analysis of emission-event logs.

Reads the newline-delimited JSON the orchestrator writes and reports
processing latency (batch formed to audio sent), the playback reordering
rate, and mean gaps between played clips per category. Reordering is
defined over played events only: a played event reorders when some higher
batch index was already played before it. Records with equal send times
are ordered by batch index.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedRecordError
from .interpreter import AudioCategory
from .orchestrator import EVENT_FIELDS
from .policy import EmissionDecision

GAP_CATEGORIES = (AudioCategory.DESCRIPTION, AudioCategory.HAZARD, AudioCategory.SFX)

# Column order of the exported CSV; load_report relies on it too.
EXPORT_ROWS = (
    "mean_latency_ms",
    "median_latency_ms",
    "p95_latency_ms",
    "reordering_rate",
    "gap_description_s",
    "gap_hazard_s",
    "gap_sfx_s",
    "count_play_cached",
    "count_synthesize_and_play",
    "count_synthesize_and_cache_only",
    "count_skip_throttled",
    "count_skip_none",
)


@dataclass
class SessionReport:
    mean_latency_ms: float = 0.0
    median_latency_ms: float = 0.0
    p95_latency_ms: float = 0.0
    reordering_rate: float = 0.0
    gaps_s: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for decision in EmissionDecision:
            self.counts.setdefault(decision.value, 0)
        for category in GAP_CATEGORIES:
            self.gaps_s.setdefault(category.value, 0.0)


def _percentile_95(sorted_values: list[float]) -> float:
    index = max(0, math.ceil(0.95 * len(sorted_values)) - 1)
    return sorted_values[index]


def _validate(record: dict, line_no: int) -> dict:
    for name in EVENT_FIELDS:
        if name not in record:
            raise MalformedRecordError(line_no, f"missing field {name!r}")
    try:
        EmissionDecision(record["decision"])
        AudioCategory(record["category"])
    except ValueError as exc:
        raise MalformedRecordError(line_no, str(exc)) from exc
    return record


def read_event_log(path):
    """Parse an NDJSON event log into record dicts."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(line_no, f"invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise MalformedRecordError(line_no, "record is not an object")
            records.append(_validate(record, line_no))
    return records


def analyze(records) -> SessionReport:
    """Summarize one session's records (dicts or EmissionEvents)."""
    rows = []
    for line_no, record in enumerate(records, start=1):
        if hasattr(record, "to_record"):
            record = record.to_record()
        rows.append(_validate(record, line_no))

    report = SessionReport()
    for row in rows:
        report.counts[row["decision"]] = report.counts.get(row["decision"], 0) + 1

    played = [r for r in rows if r["t_sent"] is not None]
    played.sort(key=lambda r: (r["t_sent"], r["batch_index"]))
    if not played:
        return report

    latencies = sorted(float(r["t_sent"]) - float(r["t_batch"]) for r in played)
    n = len(latencies)
    report.mean_latency_ms = sum(latencies) / n
    mid = n // 2
    report.median_latency_ms = (
        latencies[mid] if n % 2 else (latencies[mid - 1] + latencies[mid]) / 2.0
    )
    report.p95_latency_ms = _percentile_95(latencies)

    highest_seen = -1
    reordered = 0
    for row in played:
        if row["batch_index"] < highest_seen:
            reordered += 1
        highest_seen = max(highest_seen, row["batch_index"])
    report.reordering_rate = reordered / len(played)

    for category in GAP_CATEGORIES:
        times = [float(r["t_sent"]) for r in played if r["category"] == category.value]
        if len(times) >= 2:
            diffs = [b - a for a, b in zip(times, times[1:])]
            report.gaps_s[category.value] = sum(diffs) / len(diffs) / 1000.0
    return report


def analyze_log(path) -> SessionReport:
    return analyze(read_event_log(path))


def export(report: SessionReport, path) -> None:
    """Write the report as two-column CSV; one row per metric."""
    values = _row_values(report)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("metric", "value"))
        for name in EXPORT_ROWS:
            writer.writerow((name, repr(values[name])))


def load_report(path) -> SessionReport:
    """Parse an exported CSV back into an equal SessionReport."""
    values = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["metric", "value"]:
            raise ValueError(f"{path}: not a metrics export")
        for name, value in reader:
            values[name] = value
    report = SessionReport(
        mean_latency_ms=float(values["mean_latency_ms"]),
        median_latency_ms=float(values["median_latency_ms"]),
        p95_latency_ms=float(values["p95_latency_ms"]),
        reordering_rate=float(values["reordering_rate"]),
    )
    for category in GAP_CATEGORIES:
        report.gaps_s[category.value] = float(values[f"gap_{category.value}_s"])
    for decision in EmissionDecision:
        report.counts[decision.value] = int(values[f"count_{decision.value}"])
    return report


def _row_values(report: SessionReport) -> dict:
    values = {
        "mean_latency_ms": report.mean_latency_ms,
        "median_latency_ms": report.median_latency_ms,
        "p95_latency_ms": report.p95_latency_ms,
        "reordering_rate": report.reordering_rate,
    }
    for category in GAP_CATEGORIES:
        values[f"gap_{category.value}_s"] = report.gaps_s.get(category.value, 0.0)
    for decision in EmissionDecision:
        values[f"count_{decision.value}"] = report.counts.get(decision.value, 0)
    return values
