"""Core domain types for WAPI usage logs.

Everything here is immutable (frozen dataclasses) so entries can be shared between
stages without copying; transformations go through ``dataclasses.replace``.

Main pieces:
- Timestamp, RequestLine, LogEntry, FieldDescriptor, LogFormatSpec
- compare_entries(a, b) / sort_key(e) -> the total order used by fusion and sessioning
- validate_entry(e) -> list of Violation
- entry_to_record / entry_from_record -> canonical JSONL form
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple

from .core.types import EntryRecord


class Granularity(Enum):
    SECOND = "second"
    MILLISECOND = "millisecond"


class Ordering(Enum):
    BEFORE = "before"
    AFTER = "after"


@dataclass(frozen=True)
class Timestamp:
    epoch_millis: int
    declared_granularity: Granularity = Granularity.MILLISECOND

    @property
    def is_coarse(self) -> bool:
        return self.declared_granularity is Granularity.SECOND


@dataclass(frozen=True)
class RequestLine:
    method: str
    path: str
    query: Tuple[Tuple[str, str], ...] = ()
    protocol: str = "HTTP/1.1"

    def query_keys(self) -> Tuple[str, ...]:
        return tuple(key for key, _ in self.query)

    def query_value(self, key: str) -> Optional[str]:
        """First value for ``key`` (keys may repeat, order is kept)."""
        for k, v in self.query:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class LogEntry:
    timestamp: Timestamp
    request: RequestLine
    status: int
    source_id: str = "-"
    file_order: int = 0
    client_ip: Optional[str] = None
    object_size: Optional[int] = None
    referer: Optional[str] = None
    user_agent: Optional[str] = None
    duration: Optional[int] = None
    # set by preprocess
    generalized_path: Optional[str] = None
    repaired: bool = False

    @property
    def key(self) -> Tuple[str, int]:
        """Identity of the entry within a fused corpus."""
        return self.source_id, self.file_order

    @property
    def epoch_millis(self) -> int:
        return self.timestamp.epoch_millis

    @property
    def line_number(self) -> int:
        return self.file_order + 1


def normalize_optional(value: Optional[str]) -> Optional[str]:
    """Map the logged null value ``-`` (and empty strings) to absent."""
    if value is None or value == "-" or value == "":
        return None
    return value


# === FORMAT SPEC ===

# canonical field names, in the order of the combined log format
FIELD_NAMES = (
    "client_ip", "ident", "authuser", "timestamp", "request",
    "status", "size", "duration", "referer", "user_agent",
)
PRESENCE_FIELDS = ("client_ip", "duration", "referer", "user_agent", "status", "size")


@dataclass(frozen=True)
class FieldDescriptor:
    name: str
    quoted: bool = False
    # bracketed timestamp or literal text
    literal: Optional[str] = None
    granularity: Optional[Granularity] = None


@dataclass(frozen=True)
class LogFormatSpec:
    field_layout: Tuple[FieldDescriptor, ...]
    has_client_ip: bool = False
    timestamp_granularity: Granularity = Granularity.SECOND
    has_duration: bool = False
    has_referer: bool = False
    has_user_agent: bool = False
    has_status: bool = False
    has_size: bool = False

    def field_names(self) -> Tuple[str, ...]:
        return tuple(d.name for d in self.field_layout)

    def descriptor(self, name: str) -> Optional[FieldDescriptor]:
        for d in self.field_layout:
            if d.name == name:
                return d
        return None

    def bare_free_text_fields(self) -> Tuple[str, ...]:
        """Request/referer/user agent fields that are logged without quotes."""
        return tuple(
            d.name for d in self.field_layout
            if d.name in ("request", "referer", "user_agent") and not d.quoted
        )

    @property
    def is_fully_quoted(self) -> bool:
        return not self.bare_free_text_fields()

    def consistency_errors(self) -> List[str]:
        errors = []
        names = self.field_names()
        if len(set(names)) != len(names):
            errors.append("field_layout names are not unique")
        for flag in PRESENCE_FIELDS:
            present = flag in names
            if getattr(self, f"has_{flag}") != present:
                errors.append(f"has_{flag}={getattr(self, f'has_{flag}')} but field_layout says {present}")
        return errors

    @classmethod
    def from_flags(cls, *, has_client_ip: bool = True, has_duration: bool = False,
                   has_referer: bool = True, has_user_agent: bool = True,
                   has_status: bool = True, has_size: bool = True,
                   timestamp_granularity: Granularity = Granularity.MILLISECOND,
                   quoted: bool = True) -> "LogFormatSpec":
        """Build a canonical combined-style layout from presence flags."""
        wanted = {
            "client_ip": has_client_ip, "ident": True, "authuser": True, "timestamp": True,
            "request": True, "status": has_status, "size": has_size, "duration": has_duration,
            "referer": has_referer, "user_agent": has_user_agent,
        }
        layout = []
        for name in FIELD_NAMES:
            if not wanted[name]:
                continue
            layout.append(FieldDescriptor(
                name=name,
                quoted=quoted and name in ("request", "referer", "user_agent"),
                granularity=timestamp_granularity if name == "timestamp" else None,
            ))
        return cls(
            field_layout=tuple(layout),
            has_client_ip=has_client_ip,
            timestamp_granularity=timestamp_granularity,
            has_duration=has_duration,
            has_referer=has_referer,
            has_user_agent=has_user_agent,
            has_status=has_status,
            has_size=has_size,
        )


# === ORDERING ===

def sort_key(e: LogEntry) -> Tuple[int, str, int]:
    return e.timestamp.epoch_millis, e.source_id, e.file_order


def compare_entries(a: LogEntry, b: LogEntry) -> Ordering:
    """Strict total order: timestamp, then (source_id, file_order).

    Two distinct entries of a fused corpus never compare equal because
    (source_id, file_order) is unique; comparing an entry with itself is
    reported as AFTER.
    """
    return Ordering.BEFORE if sort_key(a) < sort_key(b) else Ordering.AFTER


# === VALIDATION ===

@dataclass(frozen=True)
class Violation:
    field: str
    rule: str


_METHOD_RE = re.compile(r"^[A-Z]+$")


def validate_entry(e: LogEntry) -> List[Violation]:
    """Check every LogEntry invariant; violations are returned, never raised."""
    out: List[Violation] = []
    ts = e.timestamp
    if not isinstance(ts.epoch_millis, int) or ts.epoch_millis < 0:
        out.append(Violation("timestamp", "epoch_millis must be a non-negative integer"))
    elif ts.declared_granularity is Granularity.SECOND and not e.repaired and ts.epoch_millis % 1000:
        out.append(Violation("timestamp", "second granularity with non-zero milliseconds"))

    req = e.request
    if not req.method or not _METHOD_RE.match(req.method):
        out.append(Violation("request.method", "method must be non-empty and upper-case"))
    if not req.path.startswith("/"):
        out.append(Violation("request.path", "path must begin with '/'"))

    if isinstance(e.status, bool) or not isinstance(e.status, int) or not 100 <= e.status <= 599:
        out.append(Violation("status", "status out of range 100-599"))
    if e.object_size is not None and e.object_size < 0:
        out.append(Violation("object_size", "object_size must be non-negative"))
    if e.duration is not None and e.duration < 0:
        out.append(Violation("duration", "duration must be non-negative"))
    if e.referer is not None and e.referer in ("", "-"):
        out.append(Violation("referer", "referer must be absent or a non-empty string other than '-'"))
    if e.user_agent is not None and e.user_agent in ("", "-"):
        out.append(Violation("user_agent", "user_agent must be absent or a non-empty string other than '-'"))
    if e.client_ip is not None and e.client_ip in ("", "-"):
        out.append(Violation("client_ip", "client_ip must be absent or a non-empty string other than '-'"))
    if e.file_order < 0:
        out.append(Violation("file_order", "file_order must be non-negative"))
    return out


def duplicate_keys(entries: Iterable[LogEntry]) -> List[Tuple[str, int]]:
    """(source_id, file_order) pairs that occur more than once."""
    seen = set()
    dupes = []
    for e in entries:
        if e.key in seen:
            dupes.append(e.key)
        seen.add(e.key)
    return dupes


# === JSONL ===

def entry_to_record(e: LogEntry) -> EntryRecord:
    """Canonical serialized form; absent optionals are omitted."""
    record: Dict[str, Any] = {}
    if e.client_ip is not None:
        record["client_ip"] = e.client_ip
    record["timestamp"] = {
        "epoch_millis": e.timestamp.epoch_millis,
        "declared_granularity": e.timestamp.declared_granularity.value,
    }
    record["request"] = {
        "method": e.request.method,
        "path": e.request.path,
        "query": [[k, v] for k, v in e.request.query],
        "protocol": e.request.protocol,
    }
    record["status"] = e.status
    for name in ("object_size", "referer", "user_agent", "duration"):
        value = getattr(e, name)
        if value is not None:
            record[name] = value
    record["source_id"] = e.source_id
    record["file_order"] = e.file_order
    if e.generalized_path is not None:
        record["generalized_path"] = e.generalized_path
    if e.repaired:
        record["repaired"] = True
    return record  # type: ignore[return-value]


def entry_from_record(record: Dict[str, Any]) -> LogEntry:
    ts = record["timestamp"]
    req = record["request"]
    return LogEntry(
        timestamp=Timestamp(int(ts["epoch_millis"]), Granularity(ts.get("declared_granularity", "millisecond"))),
        request=RequestLine(
            method=req["method"],
            path=req["path"],
            query=tuple((str(k), str(v)) for k, v in req.get("query", [])),
            protocol=req.get("protocol", ""),
        ),
        status=int(record["status"]),
        source_id=record.get("source_id", "-"),
        file_order=int(record.get("file_order", 0)),
        client_ip=normalize_optional(record.get("client_ip")),
        object_size=record.get("object_size"),
        referer=normalize_optional(record.get("referer")),
        user_agent=normalize_optional(record.get("user_agent")),
        duration=record.get("duration"),
        generalized_path=record.get("generalized_path"),
        repaired=bool(record.get("repaired", False)),
    )


__all__ = [
    "Granularity", "Ordering", "Timestamp", "RequestLine", "LogEntry", "FieldDescriptor",
    "LogFormatSpec", "Violation", "compare_entries", "sort_key", "validate_entry",
    "normalize_optional", "duplicate_keys", "entry_to_record", "entry_from_record",
]
