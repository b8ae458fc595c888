"""Observation records and the line-delimited trace file format.

A trace file is UTF-8 JSON lines. Line 1 is a header object
``{"format": "tokenleak-trace/1", "mode": "streaming" | "non-streaming"}``;
every following line is one observation with exactly the keys
``id, label, input_bytes, output_bytes, output_tokens, t_send, t_first,
t_done`` (nullable fields carry ``null``). Timestamps are written with
microsecond resolution; in-memory records keep full float precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterator, Optional

FORMAT_TAG = "tokenleak-trace/1"
MODES = ("streaming", "non-streaming")

RECORD_KEYS = (
    "id",
    "label",
    "input_bytes",
    "output_bytes",
    "output_tokens",
    "t_send",
    "t_first",
    "t_done",
)


class TraceFormatError(ValueError):
    """Raised when a trace file is malformed; collects per-line messages."""

    def __init__(self, path: str, line_errors: list[tuple[int, str]]):
        self.path = path
        self.line_errors = line_errors
        lines = "; ".join(f"line {n}: {msg}" for n, msg in line_errors[:10])
        extra = "" if len(line_errors) <= 10 else f" (+{len(line_errors) - 10} more)"
        super().__init__(f"{path}: {lines}{extra}")


@dataclass(frozen=True)
class ObservationRecord:
    """One request/response observation.

    ``label`` is the ground-truth sensitive attribute (language or class
    name); it is present in profiling traces and absent in attack traces.
    At least one of ``output_tokens`` or ``t_done`` must be present,
    otherwise the record carries no usable channel.
    """

    id: str
    label: Optional[str]
    input_bytes: int
    output_bytes: int
    output_tokens: Optional[int] = None
    t_send: float = 0.0
    t_first: Optional[float] = None
    t_done: Optional[float] = None

    def __post_init__(self) -> None:
        if self.input_bytes < 1:
            raise ValueError(f"record {self.id!r}: input_bytes must be >= 1")
        if self.output_bytes < 0:
            raise ValueError(f"record {self.id!r}: output_bytes must be >= 0")
        if self.output_tokens is not None and self.output_tokens < 1:
            raise ValueError(f"record {self.id!r}: output_tokens must be >= 1")
        if self.t_send < 0:
            raise ValueError(f"record {self.id!r}: t_send must be >= 0")
        if self.output_tokens is None and self.t_done is None:
            raise ValueError(
                f"record {self.id!r}: needs output_tokens or (t_send, t_done); "
                "record is unusable"
            )
        lo = self.t_send
        if self.t_first is not None:
            if self.t_first < lo:
                raise ValueError(f"record {self.id!r}: t_send <= t_first violated")
            lo = self.t_first
        if self.t_done is not None and self.t_done < lo:
            raise ValueError(
                f"record {self.id!r}: timestamp ordering t_send <= t_first <= t_done violated"
            )

    @property
    def duration(self) -> float:
        if self.t_done is None:
            raise ValueError(f"record {self.id!r}: t_done absent, no duration")
        return self.t_done - self.t_send

    def with_tokens(self, n: int) -> "ObservationRecord":
        return replace(self, output_tokens=n)


@dataclass(frozen=True)
class DerivedFeatures:
    """Per-record attack features: bytes/token and output/input byte ratio."""

    token_density: float
    io_ratio: float


def derive_features(rec: ObservationRecord) -> DerivedFeatures:
    """Exact feature quotients; requires a token count on the record."""
    if rec.output_tokens is None:
        raise ValueError(
            f"record {rec.id!r}: output_tokens absent; run timing-recovery "
            "estimation first"
        )
    return DerivedFeatures(
        token_density=rec.output_bytes / rec.output_tokens,
        io_ratio=rec.output_bytes / rec.input_bytes,
    )


@dataclass(frozen=True)
class Trace:
    """An ordered collection of records plus the declared observation mode."""

    mode: str
    records: tuple[ObservationRecord, ...]

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ObservationRecord]:
        return iter(self.records)

    def __getitem__(self, i: int) -> ObservationRecord:
        return self.records[i]

    def labels(self) -> list[str]:
        """Distinct non-null labels in first-appearance order."""
        seen: dict[str, None] = {}
        for r in self.records:
            if r.label is not None and r.label not in seen:
                seen[r.label] = None
        return list(seen)

    def by_label(self, label: str) -> list[ObservationRecord]:
        return [r for r in self.records if r.label == label]


def _quantize(t: Optional[float]) -> Optional[float]:
    return None if t is None else round(t, 6)


def _check_record_obj(obj: dict, mode: str) -> ObservationRecord:
    if not isinstance(obj, dict):
        raise ValueError("record line must be a JSON object")
    keys = set(obj)
    unknown = keys - set(RECORD_KEYS)
    if unknown:
        raise ValueError(f"unknown keys: {sorted(unknown)}")
    missing = set(RECORD_KEYS) - keys
    if missing:
        raise ValueError(f"missing keys: {sorted(missing)}")
    if not isinstance(obj["id"], str):
        raise ValueError("id must be a string")
    if obj["label"] is not None and not isinstance(obj["label"], str):
        raise ValueError("label must be a string or null")
    for k in ("input_bytes", "output_bytes"):
        if not isinstance(obj[k], int) or isinstance(obj[k], bool):
            raise ValueError(f"{k} must be an integer")
    if obj["output_tokens"] is not None and (
        not isinstance(obj["output_tokens"], int) or isinstance(obj["output_tokens"], bool)
    ):
        raise ValueError("output_tokens must be an integer or null")
    for k in ("t_send", "t_first", "t_done"):
        if obj[k] is not None and not isinstance(obj[k], (int, float)):
            raise ValueError(f"{k} must be a number or null")
    if mode == "non-streaming" and obj["t_first"] is not None:
        raise ValueError("t_first present in a non-streaming trace")
    return ObservationRecord(
        id=obj["id"],
        label=obj["label"],
        input_bytes=obj["input_bytes"],
        output_bytes=obj["output_bytes"],
        output_tokens=obj["output_tokens"],
        t_send=float(obj["t_send"]),
        t_first=None if obj["t_first"] is None else float(obj["t_first"]),
        t_done=None if obj["t_done"] is None else float(obj["t_done"]),
    )


def load_trace(path: str) -> Trace:
    """Parse a trace file; aborts with a per-line error report on any defect."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TraceFormatError(path, [(1, "missing header line")])
    errors: list[tuple[int, str]] = []
    mode = "streaming"
    try:
        header = json.loads(lines[0])
        if not isinstance(header, dict) or set(header) != {"format", "mode"}:
            raise ValueError('header must be {"format": ..., "mode": ...}')
        if header["format"] != FORMAT_TAG:
            raise ValueError(f"unsupported format {header['format']!r}")
        if header["mode"] not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        mode = header["mode"]
    except (json.JSONDecodeError, ValueError) as e:
        errors.append((1, str(e)))
    records: list[ObservationRecord] = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(_check_record_obj(obj, mode))
        except (json.JSONDecodeError, ValueError) as e:
            errors.append((i, str(e)))
    if errors:
        raise TraceFormatError(path, errors)
    return Trace(mode=mode, records=tuple(records))


def record_to_obj(rec: ObservationRecord) -> dict:
    return {
        "id": rec.id,
        "label": rec.label,
        "input_bytes": rec.input_bytes,
        "output_bytes": rec.output_bytes,
        "output_tokens": rec.output_tokens,
        "t_send": _quantize(rec.t_send),
        "t_first": _quantize(rec.t_first),
        "t_done": _quantize(rec.t_done),
    }


def dump_trace(trace: Trace) -> str:
    """Canonical serialization; loading and re-dumping is byte-stable."""
    out = [json.dumps({"format": FORMAT_TAG, "mode": trace.mode})]
    for rec in trace.records:
        if trace.mode == "non-streaming" and rec.t_first is not None:
            rec = replace(rec, t_first=None)
        out.append(json.dumps(record_to_obj(rec)))
    return "\n".join(out) + "\n"


def save_trace(trace: Trace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_trace(trace))
