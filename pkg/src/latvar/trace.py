"""Per-frame latency trace records and the CSV trace format.

A trace file is plain comma-separated text with a fixed header::

    frame_id,timestamp_ms,t_read_ms,t_pre_ms,t_infer_ms,t_post_ms,n_proposals,n_lane_pixels,n_detections,model_tag,scenario_tag

Real-valued fields are written with six decimals. Records quantize their
real fields to six decimals on construction, so ``ingest_trace`` after
``emit_trace`` returns an equal ``TraceSet``.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import EmptyTraceError, TraceFormatError

HEADER = (
    "frame_id",
    "timestamp_ms",
    "t_read_ms",
    "t_pre_ms",
    "t_infer_ms",
    "t_post_ms",
    "n_proposals",
    "n_lane_pixels",
    "n_detections",
    "model_tag",
    "scenario_tag",
)
HEADER_LINE = ",".join(HEADER)

REAL_FIELDS = ("timestamp_ms", "t_read_ms", "t_pre_ms", "t_infer_ms", "t_post_ms")
INT_FIELDS = ("frame_id", "n_proposals", "n_lane_pixels", "n_detections")
TAG_FIELDS = ("model_tag", "scenario_tag")

DECIMALS = 6
_TAG_RE = re.compile(r"^[a-z0-9_-]+$")

# Column names accepted by TraceSet.column, including derived series.
COLUMN_ALIASES = {
    "end_to_end": "end_to_end",
    "end_to_end_ms": "end_to_end",
    "remaining": "remaining",
    "remaining_ms": "remaining",
    "t_read": "t_read_ms",
    "t_pre": "t_pre_ms",
    "t_infer": "t_infer_ms",
    "t_post": "t_post_ms",
    "timestamp": "timestamp_ms",
}


def _quantize(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    # round() can produce -0.0 for tiny negatives that survived the check above
    return round(value, DECIMALS) + 0.0


@dataclass(frozen=True)
class TraceRecord:
    frame_id: int
    timestamp_ms: float
    t_read_ms: float
    t_pre_ms: float
    t_infer_ms: float
    t_post_ms: float
    n_proposals: int = 0
    n_lane_pixels: int = 0
    n_detections: int = 0
    model_tag: str = "unknown"
    scenario_tag: str = "default"

    def __post_init__(self) -> None:
        for name in REAL_FIELDS:
            object.__setattr__(self, name, _quantize(name, getattr(self, name)))
        for name in INT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in TAG_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, str) or not _TAG_RE.match(value):
                raise ValueError(f"{name} must match [a-z0-9_-]+, got {value!r}")

    def end_to_end_ms(self) -> float:
        return self.t_read_ms + self.t_pre_ms + self.t_infer_ms + self.t_post_ms

    def remaining_ms(self) -> float:
        """Everything except post-processing: read + pre-process + inference."""
        return self.t_read_ms + self.t_pre_ms + self.t_infer_ms


@dataclass(frozen=True)
class TraceSet:
    records: tuple[TraceRecord, ...]
    source: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        prev = -1
        for rec in records:
            if rec.frame_id <= prev:
                raise ValueError(
                    f"frame_id must be strictly increasing ({rec.frame_id} after {prev})"
                )
            prev = rec.frame_id

    @property
    def m(self) -> int:
        return len(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def column(self, name: str) -> np.ndarray:
        """Return one field (or a derived series) as a float array.

        ``end_to_end`` and ``remaining`` are derived per record; stage names
        may omit the ``_ms`` suffix.
        """
        key = COLUMN_ALIASES.get(name, name)
        if key == "end_to_end":
            return np.array([r.end_to_end_ms() for r in self.records], dtype=float)
        if key == "remaining":
            return np.array([r.remaining_ms() for r in self.records], dtype=float)
        if key in REAL_FIELDS or key in INT_FIELDS:
            return np.array([getattr(r, key) for r in self.records], dtype=float)
        raise KeyError(f"unknown column {name!r}")


def _parse_row(cells: list[str], lineno: int) -> TraceRecord:
    values: dict[str, object] = {}
    for name, cell in zip(HEADER, cells):
        if name in REAL_FIELDS:
            try:
                v = float(cell)
            except ValueError:
                raise TraceFormatError(f"{name}: not a number: {cell!r}", lineno, name) from None
            if not math.isfinite(v):
                raise TraceFormatError(f"{name}: not finite: {cell!r}", lineno, name)
            if v < 0:
                raise TraceFormatError(f"{name}: negative value {cell}", lineno, name)
            values[name] = v
        elif name in INT_FIELDS:
            try:
                v = int(cell)
            except ValueError:
                raise TraceFormatError(f"{name}: not an integer: {cell!r}", lineno, name) from None
            if v < 0:
                raise TraceFormatError(f"{name}: negative value {cell}", lineno, name)
            values[name] = v
        else:
            if not _TAG_RE.match(cell):
                raise TraceFormatError(f"{name}: invalid tag {cell!r}", lineno, name)
            values[name] = cell
    return TraceRecord(**values)


def parse_trace(lines: Iterable[str], source: str | None = None) -> TraceSet:
    it = iter(lines)
    try:
        header = next(it).rstrip("\n")
    except StopIteration:
        raise EmptyTraceError(f"{source or 'trace'}: file is empty") from None
    got = header.split(",")
    missing = [c for c in HEADER if c not in got]
    if missing:
        raise TraceFormatError(f"header: missing column {missing[0]!r}", 1, missing[0])
    extra = [c for c in got if c not in HEADER]
    if extra:
        raise TraceFormatError(f"header: unexpected column {extra[0]!r}", 1, extra[0])
    if tuple(got) != HEADER:
        raise TraceFormatError("header: columns out of order", 1)

    records: list[TraceRecord] = []
    prev_id = -1
    for lineno, raw in enumerate(it, start=2):
        line = raw.rstrip("\n")
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(HEADER):
            raise TraceFormatError(
                f"expected {len(HEADER)} fields, got {len(cells)}", lineno
            )
        rec = _parse_row(cells, lineno)
        if rec.frame_id <= prev_id:
            raise TraceFormatError(
                f"frame_id {rec.frame_id} not greater than previous {prev_id}", lineno, "frame_id"
            )
        prev_id = rec.frame_id
        records.append(rec)
    if not records:
        raise EmptyTraceError(f"{source or 'trace'}: no data rows")
    return TraceSet(tuple(records), source=source)


def ingest_trace(path: str | os.PathLike) -> TraceSet:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace(fh, source=os.fspath(path))


def format_record(rec: TraceRecord) -> str:
    cells = []
    for name in HEADER:
        value = getattr(rec, name)
        if name in REAL_FIELDS:
            cells.append(f"{value:.{DECIMALS}f}")
        else:
            cells.append(str(value))
    return ",".join(cells)


def format_trace(trace: TraceSet) -> str:
    if trace.m == 0:
        raise EmptyTraceError("cannot emit an empty trace")
    return HEADER_LINE + "\n" + "".join(format_record(r) + "\n" for r in trace.records)


def emit_trace(trace: TraceSet, path: str | os.PathLike) -> None:
    text = format_trace(trace)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
