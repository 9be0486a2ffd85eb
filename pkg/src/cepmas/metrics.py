"""Latency spans, per-query reports and experiment aggregation.

Agent conversation overhead is always derived by subtraction
(``total - sum of tool-kind spans``) so the accounting identity
``overhead + tool sums == total`` holds exactly; AgentTurn and
SpeakerSelect spans are recorded for diagnosis only.
"""
from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass
from enum import Enum

from .errors import EmptyGroup, SpanOutOfWindow


class SpanKind(str, Enum):
    FRAME_EXTRACTION = "FrameExtraction"
    VIDEO_CREATION = "VideoCreation"
    MODEL_CALL = "ModelCall"
    STREAM_CONSUME = "StreamConsume"
    SPEAKER_SELECT = "SpeakerSelect"
    AGENT_TURN = "AgentTurn"


# Kinds that count as tool/model processing time; everything left over in the
# conversation window is agent conversation overhead.
TOOL_KINDS = (
    SpanKind.FRAME_EXTRACTION,
    SpanKind.VIDEO_CREATION,
    SpanKind.MODEL_CALL,
    SpanKind.STREAM_CONSUME,
)


@dataclass(frozen=True)
class LatencySpan:
    kind: SpanKind
    start_ms: float
    end_ms: float
    conversation_id: str

    def __post_init__(self):
        if self.end_ms < self.start_ms:
            raise ValueError("span end precedes start")

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


@dataclass
class LatencyReport:
    conversation_id: str
    total_duration_ms: float
    kind_sums_ms: dict[SpanKind, float]
    agent_overhead_ms: float
    topology: str = ""
    complexity: int | None = None
    resolution: str = ""

    def tool_sum_ms(self) -> float:
        return sum(self.kind_sums_ms.get(kind, 0.0) for kind in TOOL_KINDS)

    def as_row(self) -> dict[str, object]:
        return {
            "conversation_id": self.conversation_id,
            "topology": self.topology,
            "complexity": "" if self.complexity is None else self.complexity,
            "resolution": self.resolution,
            "total_ms": self.total_duration_ms,
            "model_ms": self.kind_sums_ms.get(SpanKind.MODEL_CALL, 0.0),
            "extract_ms": self.kind_sums_ms.get(SpanKind.FRAME_EXTRACTION, 0.0),
            "create_ms": self.kind_sums_ms.get(SpanKind.VIDEO_CREATION, 0.0),
            "consume_ms": self.kind_sums_ms.get(SpanKind.STREAM_CONSUME, 0.0),
            "overhead_ms": self.agent_overhead_ms,
        }


REPORT_CSV_HEADER = [
    "conversation_id",
    "topology",
    "complexity",
    "resolution",
    "total_ms",
    "model_ms",
    "extract_ms",
    "create_ms",
    "consume_ms",
    "overhead_ms",
]


class SpanCollector:
    """Append-only sink, safe for concurrent writers."""

    def __init__(self, on_record=None):
        self._spans: list[LatencySpan] = []
        self._lock = threading.Lock()
        self.on_record = on_record

    def record(self, span: LatencySpan) -> None:
        with self._lock:
            self._spans.append(span)
        if self.on_record is not None:
            self.on_record(span)

    def spans(self, conversation_id: str | None = None) -> list[LatencySpan]:
        with self._lock:
            if conversation_id is None:
                return list(self._spans)
            return [s for s in self._spans if s.conversation_id == conversation_id]


def finalize_report(
    spans: list[LatencySpan],
    window: tuple[float, float],
    conversation_id: str = "",
    topology: str = "",
    complexity: int | None = None,
    resolution: str = "",
) -> LatencyReport:
    """Sum spans per kind inside a window and derive the overhead."""
    start, end = window
    sums: dict[SpanKind, float] = {kind: 0.0 for kind in SpanKind}
    for span in spans:
        if span.start_ms < start or span.end_ms > end:
            raise SpanOutOfWindow(
                f"span [{span.start_ms}, {span.end_ms}] outside window [{start}, {end}]"
            )
        if conversation_id and span.conversation_id != conversation_id:
            raise SpanOutOfWindow(
                f"span belongs to {span.conversation_id}, not {conversation_id}"
            )
        sums[span.kind] += span.duration_ms
    total = end - start
    overhead = total - sum(sums[kind] for kind in TOOL_KINDS)
    return LatencyReport(
        conversation_id=conversation_id or (spans[0].conversation_id if spans else ""),
        total_duration_ms=total,
        kind_sums_ms=sums,
        agent_overhead_ms=overhead,
        topology=topology,
        complexity=complexity,
        resolution=resolution,
    )


_GROUP_KEYS = {
    "topology": lambda r: r.topology,
    "complexity": lambda r: r.complexity,
    "resolution": lambda r: r.resolution,
}

_METRICS = {
    "total_ms": lambda r: r.total_duration_ms,
    "model_ms": lambda r: r.kind_sums_ms.get(SpanKind.MODEL_CALL, 0.0),
    "extract_ms": lambda r: r.kind_sums_ms.get(SpanKind.FRAME_EXTRACTION, 0.0),
    "create_ms": lambda r: r.kind_sums_ms.get(SpanKind.VIDEO_CREATION, 0.0),
    "consume_ms": lambda r: r.kind_sums_ms.get(SpanKind.STREAM_CONSUME, 0.0),
    "overhead_ms": lambda r: r.agent_overhead_ms,
}


@dataclass
class AggregateRow:
    group: object
    runs: int
    stats: dict[str, dict[str, float]]  # metric -> {min, mean, max}


def aggregate_experiment(reports: list[LatencyReport], group_by: str) -> list[AggregateRow]:
    """Group reports and emit min/mean/max per metric, one row per group."""
    if group_by not in _GROUP_KEYS:
        raise ValueError(f"group_by must be one of {sorted(_GROUP_KEYS)}")
    if not reports:
        raise EmptyGroup("no reports to aggregate")
    key = _GROUP_KEYS[group_by]
    groups: dict[object, list[LatencyReport]] = {}
    for report in reports:
        groups.setdefault(key(report), []).append(report)
    rows = []
    for group_value in groups:
        members = groups[group_value]
        stats = {}
        for metric, getter in _METRICS.items():
            values = [getter(r) for r in members]
            stats[metric] = {
                "min": min(values),
                "mean": sum(values) / len(values),
                "max": max(values),
            }
        rows.append(AggregateRow(group=group_value, runs=len(members), stats=stats))
    rows.sort(key=lambda r: str(r.group))
    return rows


def reports_to_csv(reports: list[LatencyReport], scale: float | None = None) -> str:
    """One row per report; the replay scale factor is part of the header."""
    header = list(REPORT_CSV_HEADER)
    if scale is not None:
        header.append("scale_factor")
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(header)
    for report in reports:
        row = report.as_row()
        values = [row[col] for col in REPORT_CSV_HEADER]
        if scale is not None:
            values.append(scale)
        writer.writerow(values)
    return out.getvalue()


def aggregate_to_csv(rows: list[AggregateRow], group_by: str,
                     scale: float | None = None) -> str:
    header = [group_by, "runs"]
    for metric in _METRICS:
        header += [f"{metric}_min", f"{metric}_mean", f"{metric}_max"]
    if scale is not None:
        header.append("scale_factor")
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(header)
    for row in rows:
        record = [row.group, row.runs]
        for metric in _METRICS:
            stat = row.stats[metric]
            record += [stat["min"], stat["mean"], stat["max"]]
        if scale is not None:
            record.append(scale)
        writer.writerow(record)
    return out.getvalue()
