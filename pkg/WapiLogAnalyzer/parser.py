"""Field extraction for WAPI usage logs.

Turns raw lines into LogEntry values under a LogFormatSpec. Quoted fields may
hold any character except an unescaped quote; bare (unquoted) request, referer
and user agent fields are recovered by anchoring on the bracketed timestamp and
the ``HTTP/x.y`` protocol token.

Functions:
- compile_format_string(text) -> FormatString
- parse_format_spec(directives) -> LogFormatSpec
- parse_line(line, spec) -> LogEntry | ParseDiagnostic
- split_request(field) -> RequestLine | ParseDiagnostic
- iter_parse_stream / parse_stream / parse_file
"""

from __future__ import annotations

import calendar
import logging
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union
from urllib.parse import quote, unquote

from .core.exceptions import FormatConfigError, LogStreamError
from .core.types import DiagnosticRecord
from .log_model import (
    FieldDescriptor,
    Granularity,
    LogEntry,
    LogFormatSpec,
    RequestLine,
    Timestamp,
    normalize_optional,
)

logger = logging.getLogger(__name__)


class DiagnosticKind(Enum):
    MALFORMED_LINE = "malformed_line"
    AMBIGUOUS_SPLIT = "ambiguous_split"
    BAD_TIMESTAMP = "bad_timestamp"
    BAD_STATUS = "bad_status"


class ErrorPolicy(Enum):
    HALT = "halt"
    SKIP_AND_RECORD = "skip_and_record"

    @classmethod
    def parse(cls, value: Union[str, "ErrorPolicy"]) -> "ErrorPolicy":
        if isinstance(value, cls):
            return value
        if value == "skip":
            return cls.SKIP_AND_RECORD
        try:
            return cls(value)
        except ValueError:
            raise FormatConfigError(f"Nieznana polityka błędów: {value!r} (dozwolone: halt, skip)")


@dataclass(frozen=True)
class ParseDiagnostic:
    source_id: str
    line_number: int
    kind: DiagnosticKind
    raw_line: str
    detail: str

    def to_record(self) -> DiagnosticRecord:
        return {
            "source_id": self.source_id,
            "line_number": self.line_number,
            "kind": self.kind.value,
            "raw_line": self.raw_line,
            "detail": self.detail,
        }

    @classmethod
    def from_record(cls, record: Dict) -> "ParseDiagnostic":
        return cls(
            source_id=record["source_id"],
            line_number=int(record["line_number"]),
            kind=DiagnosticKind(record["kind"]),
            raw_line=record.get("raw_line", ""),
            detail=record.get("detail", ""),
        )


# === FORMAT STRINGS ===

DIRECTIVE_KINDS = (
    "client_ip", "ident", "authuser", "timestamp", "request",
    "status", "size", "referer", "user_agent", "duration", "literal",
)
QUOTABLE = ("request", "referer", "user_agent")


@dataclass(frozen=True)
class Directive:
    kind: str
    quoted: bool = False
    text: Optional[str] = None
    granularity: Optional[Granularity] = None


FormatString = Tuple[Directive, ...]

_APACHE_TOKENS = {
    "%h": "client_ip",
    "%a": "client_ip",
    "%l": "ident",
    "%u": "authuser",
    "%t": "timestamp",
    "%{ms}t": "timestamp",
    "%r": "request",
    "%>s": "status",
    "%s": "status",
    "%b": "size",
    "%B": "size",
    "%{referer}i": "referer",
    "%{user-agent}i": "user_agent",
    "%D": "duration",
}

COMBINED_FORMAT = '%h %l %u %t "%r" %>s %b "%{Referer}i" "%{User-Agent}i"'
COMBINED_MS_FORMAT = '%h %l %u %{ms}t "%r" %>s %b "%{Referer}i" "%{User-Agent}i"'


def _lookup_token(token: str) -> Optional[str]:
    if token in _APACHE_TOKENS:
        return _APACHE_TOKENS[token]
    # header names are case-insensitive
    return _APACHE_TOKENS.get(token.lower()) if token.startswith("%{") and token.endswith("}i") else None


def compile_format_string(text: str) -> FormatString:
    """Compile an Apache-style format string into directives.

    ``"%r"`` (with quotes) is a quoted request, ``%r`` a bare one. Tokens
    without a leading ``%`` are literals.
    """
    directives: List[Directive] = []
    for token in text.split():
        quoted = len(token) >= 2 and token.startswith('"') and token.endswith('"')
        body = token[1:-1] if quoted else token
        if not body.startswith("%"):
            directives.append(Directive("literal", text=token))
            continue
        kind = _lookup_token(body)
        if kind is None:
            raise FormatConfigError(f"Nieznana dyrektywa formatu: {body}", details={"format": text})
        if quoted and kind not in QUOTABLE:
            raise FormatConfigError(f"Dyrektywa {body} nie może być w cudzysłowie", details={"format": text})
        granularity = None
        if kind == "timestamp":
            granularity = Granularity.MILLISECOND if body == "%{ms}t" else Granularity.SECOND
        directives.append(Directive(kind, quoted=quoted, granularity=granularity))
    return tuple(directives)


def parse_format_spec(directives: Sequence[Directive]) -> LogFormatSpec:
    """Build a LogFormatSpec whose presence flags mirror directive membership."""
    if not directives:
        raise FormatConfigError("Format logu nie zawiera żadnych dyrektyw")

    seen = set()
    layout: List[FieldDescriptor] = []
    for index, d in enumerate(directives):
        if d.kind not in DIRECTIVE_KINDS:
            raise FormatConfigError(f"Nieznany rodzaj dyrektywy: {d.kind}")
        if d.kind == "literal":
            layout.append(FieldDescriptor(name=f"literal:{index}", literal=d.text or ""))
            continue
        if d.kind in seen:
            raise FormatConfigError(f"Zduplikowana dyrektywa: {d.kind}")
        seen.add(d.kind)
        layout.append(FieldDescriptor(
            name=d.kind,
            quoted=d.quoted and d.kind in QUOTABLE,
            granularity=(d.granularity or Granularity.SECOND) if d.kind == "timestamp" else None,
        ))

    missing = [k for k in ("timestamp", "request") if k not in seen]
    if missing:
        raise FormatConfigError(f"Format logu musi zawierać pola: {', '.join(missing)}")

    ts = next(f for f in layout if f.name == "timestamp")
    return LogFormatSpec(
        field_layout=tuple(layout),
        has_client_ip="client_ip" in seen,
        timestamp_granularity=ts.granularity or Granularity.SECOND,
        has_duration="duration" in seen,
        has_referer="referer" in seen,
        has_user_agent="user_agent" in seen,
        has_status="status" in seen,
        has_size="size" in seen,
    )


def spec_from_format_string(text: str) -> LogFormatSpec:
    return parse_format_spec(compile_format_string(text))


def format_string_for_spec(spec: LogFormatSpec) -> str:
    """Inverse of spec_from_format_string for the canonical directives."""
    tokens = {
        "client_ip": "%h", "ident": "%l", "authuser": "%u", "request": "%r", "status": "%>s",
        "size": "%b", "referer": "%{Referer}i", "user_agent": "%{User-Agent}i", "duration": "%D",
    }
    out = []
    for d in spec.field_layout:
        if d.literal is not None:
            out.append(d.literal)
        elif d.name == "timestamp":
            out.append("%{ms}t" if d.granularity is Granularity.MILLISECOND else "%t")
        else:
            out.append(f'"{tokens[d.name]}"' if d.quoted else tokens[d.name])
    return " ".join(out)


# === TIMESTAMPS ===

_MONTH_NAMES = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
_MONTHS = {name: i for i, name in enumerate(_MONTH_NAMES, start=1)}
_TS_RE = re.compile(
    r"^(\d{2})/([A-Z][a-z]{2})/(\d{4}):(\d{2}):(\d{2}):(\d{2})(?:\.(\d{3}))? ([+-])(\d{2})(\d{2})$",
    re.ASCII,
)


@lru_cache(maxsize=4096)
def _epoch_seconds(day: str, month: str, year: str, hh: str, mm: str, ss: str,
                   sign: str, tz_h: str, tz_m: str) -> Optional[int]:
    month_no = _MONTHS.get(month)
    if month_no is None:
        return None
    try:
        moment = datetime(int(year), month_no, int(day), int(hh), int(mm), int(ss))
    except ValueError:
        return None
    offset = (int(tz_h) * 3600 + int(tz_m) * 60) * (1 if sign == "+" else -1)
    return calendar.timegm(moment.timetuple()) - offset


def parse_timestamp(text: str, granularity: Granularity = Granularity.SECOND) -> Optional[Timestamp]:
    """Parse ``dd/Mon/yyyy:HH:mm:ss[.SSS] ±zzzz`` to a UTC Timestamp (None when invalid)."""
    match = _TS_RE.match(text)
    if not match:
        return None
    day, month, year, hh, mm, ss, frac, sign, tz_h, tz_m = match.groups()
    seconds = _epoch_seconds(day, month, year, hh, mm, ss, sign, tz_h, tz_m)
    if seconds is None or seconds < 0:
        return None
    if frac is not None:
        return Timestamp(seconds * 1000 + int(frac), Granularity.MILLISECOND)
    return Timestamp(seconds * 1000, granularity)


def format_timestamp(ts: Timestamp, with_millis: bool) -> str:
    """Render a Timestamp in the bracket body layout, always in UTC."""
    moment = datetime.fromtimestamp(ts.epoch_millis // 1000, tz=timezone.utc)
    # month names are fixed English abbreviations, independent of locale
    text = f"{moment.day:02d}/{_MONTH_NAMES[moment.month - 1]}/{moment:%Y:%H:%M:%S}"
    if with_millis:
        text += f".{ts.epoch_millis % 1000:03d}"
    return text + " +0000"


# === REQUEST LINE ===

_METHOD_RE = re.compile(r"^[A-Z]+$")
_PROTOCOL_RE = re.compile(r"^HTTP/\d+(?:\.\d+)?$", re.ASCII)


def decode_component(token: str) -> str:
    """Percent-decode; a token that does not decode stays raw."""
    if "%" not in token:
        return token
    try:
        return unquote(token, errors="strict")
    except UnicodeDecodeError:
        return token


def encode_component(text: str) -> str:
    return quote(text, safe="")


def split_query(query: str) -> Tuple[Tuple[str, str], ...]:
    pairs = []
    for piece in query.split("&"):
        if not piece:
            continue
        key, _, value = piece.partition("=")
        pairs.append((decode_component(key), decode_component(value)))
    return tuple(pairs)


def join_query(query: Iterable[Tuple[str, str]]) -> str:
    return "&".join(f"{encode_component(k)}={encode_component(v)}" for k, v in query)


def split_request(request_field: str, source_id: str = "-",
                  line_number: int = 1) -> Union[RequestLine, ParseDiagnostic]:
    """Split ``METHOD URI PROTOCOL`` on the first and last space.

    ``GET /`` with no protocol is accepted with an empty protocol.
    """
    def bad(detail: str) -> ParseDiagnostic:
        return ParseDiagnostic(source_id, line_number, DiagnosticKind.MALFORMED_LINE, request_field, detail)

    text = request_field.strip()
    first = text.find(" ")
    if first < 0:
        return bad("request line without spaces")
    method = text[:first]
    last = text.rfind(" ")
    if last == first:
        uri, protocol = text[first + 1:], ""
    else:
        uri, protocol = text[first + 1:last], text[last + 1:]
        if not _PROTOCOL_RE.match(protocol):
            # no protocol token: everything after the method is the URI
            uri, protocol = text[first + 1:], ""

    if not _METHOD_RE.match(method):
        return bad(f"invalid method {method!r}")
    uri = uri.strip()
    if not uri.startswith("/"):
        return bad(f"request path must start with '/': {uri!r}")

    path, _, query = uri.partition("?")
    return RequestLine(method=method, path=path, query=split_query(query), protocol=protocol)


def render_request(request: RequestLine) -> str:
    uri = request.path
    if request.query:
        uri += "?" + join_query(request.query)
    return f"{request.method} {uri} {request.protocol}" if request.protocol else f"{request.method} {uri}"


# === LINE PARSING ===

_TOKEN_RE = re.compile(r"\S+")
_SPACES_RE = re.compile(r"\s*")
_BRACKET_RE = re.compile(r"\[([^\]]*)\]")
_QUOTED_RE = re.compile(r'"((?:[^"\\]|\\.)*)"')
_UNESCAPE_RE = re.compile(r"\\(.)")
_DIGITS_RE = re.compile(r"[0-9]+")


def unescape_quoted(text: str) -> str:
    return _UNESCAPE_RE.sub(r"\1", text) if "\\" in text else text


def escape_quoted(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


class _LineError(Exception):
    def __init__(self, kind: DiagnosticKind, detail: str):
        super().__init__(detail)
        self.kind = kind
        self.detail = detail


def _bare_request_end(line: str, pos: int) -> Tuple[int, int, int]:
    """Bound a bare request starting at ``pos``.

    Returns (end, token_count, protocol_count). The request runs to the last
    protocol token seen before the first integer token following a protocol.
    """
    tokens = list(_TOKEN_RE.finditer(line, pos))
    last_protocol = None
    protocols = 0
    for i, tok in enumerate(tokens):
        if _PROTOCOL_RE.match(tok.group()):
            last_protocol = i
            protocols += 1
        elif last_protocol is not None and _DIGITS_RE.fullmatch(tok.group()):
            break
    if last_protocol is None:
        # protocol-less request: method and URI only
        if len(tokens) < 2:
            raise _LineError(DiagnosticKind.MALFORMED_LINE, "request field missing")
        return tokens[1].end(), 2, 0
    return tokens[last_protocol].end(), last_protocol + 1, protocols


def _trailing_token_need(layout: Sequence[FieldDescriptor], start: int) -> int:
    return sum(len(d.literal.split()) if d.literal is not None else 1 for d in layout[start:])


def _extract_fields(line: str, spec: LogFormatSpec) -> Dict[str, str]:
    raw: Dict[str, str] = {}
    pos = 0
    layout = spec.field_layout
    for index, d in enumerate(layout):
        pos = _SPACES_RE.match(line, pos).end()
        if pos >= len(line):
            raise _LineError(DiagnosticKind.MALFORMED_LINE, f"line ends before field {d.name}")

        if d.literal is not None:
            if not line.startswith(d.literal, pos):
                raise _LineError(DiagnosticKind.MALFORMED_LINE, f"expected literal {d.literal!r}")
            pos += len(d.literal)
        elif d.name == "timestamp":
            m = _BRACKET_RE.match(line, pos)
            if not m:
                raise _LineError(DiagnosticKind.BAD_TIMESTAMP, "bracketed timestamp not found")
            raw[d.name] = m.group(1)
            pos = m.end()
        elif d.quoted:
            m = _QUOTED_RE.match(line, pos)
            if not m:
                raise _LineError(DiagnosticKind.MALFORMED_LINE, f"quoted field {d.name} not closed")
            raw[d.name] = unescape_quoted(m.group(1))
            pos = m.end()
        elif d.name == "request":
            end, count, protocols = _bare_request_end(line, pos)
            if protocols > 1:
                raise _LineError(DiagnosticKind.AMBIGUOUS_SPLIT, "request region holds several protocol tokens")
            if count > 3:
                raise _LineError(DiagnosticKind.AMBIGUOUS_SPLIT, "request URI split by spaces")
            raw[d.name] = line[pos:end]
            pos = end
        elif d.name == "user_agent":
            tokens = list(_TOKEN_RE.finditer(line, pos))
            keep = len(tokens) - _trailing_token_need(layout, index + 1)
            if keep < 1:
                raise _LineError(DiagnosticKind.MALFORMED_LINE, "not enough tokens for user agent")
            raw[d.name] = line[pos:tokens[keep - 1].end()]
            pos = tokens[keep - 1].end()
        else:
            m = _TOKEN_RE.match(line, pos)
            raw[d.name] = m.group()
            pos = m.end()

    if line[pos:].strip():
        raise _LineError(DiagnosticKind.MALFORMED_LINE, "unexpected trailing data")
    return raw


def _optional_int(value: Optional[str], name: str) -> Optional[int]:
    if value is None or value == "-":
        return None
    if not _DIGITS_RE.fullmatch(value):
        raise _LineError(DiagnosticKind.MALFORMED_LINE, f"{name} is not a non-negative integer: {value!r}")
    return int(value)


def parse_line(line: str, spec: LogFormatSpec, source_id: str = "-",
               file_order: int = 0) -> Union[LogEntry, ParseDiagnostic]:
    """Parse one log line; problems come back as a ParseDiagnostic, never raised."""
    line = line.rstrip("\r\n")

    def diagnostic(kind: DiagnosticKind, detail: str) -> ParseDiagnostic:
        return ParseDiagnostic(source_id, file_order + 1, kind, line, detail)

    if not line.strip():
        return diagnostic(DiagnosticKind.MALFORMED_LINE, "blank line")

    try:
        raw = _extract_fields(line, spec)

        timestamp = parse_timestamp(raw["timestamp"], spec.timestamp_granularity)
        if timestamp is None:
            raise _LineError(DiagnosticKind.BAD_TIMESTAMP, f"invalid timestamp {raw['timestamp']!r}")

        status = 200
        if spec.has_status:
            text = raw["status"]
            if not _DIGITS_RE.fullmatch(text) or not 100 <= int(text) <= 599:
                raise _LineError(DiagnosticKind.BAD_STATUS, f"invalid status {text!r}")
            status = int(text)

        object_size = _optional_int(raw.get("size"), "size")
        duration = _optional_int(raw.get("duration"), "duration")
    except _LineError as exc:
        return diagnostic(exc.kind, exc.detail)

    request = split_request(raw["request"], source_id, file_order + 1)
    if isinstance(request, ParseDiagnostic):
        return ParseDiagnostic(source_id, file_order + 1, request.kind, line, request.detail)

    return LogEntry(
        timestamp=timestamp,
        request=request,
        status=status,
        source_id=source_id,
        file_order=file_order,
        client_ip=normalize_optional(raw.get("client_ip")),
        object_size=object_size,
        referer=normalize_optional(raw.get("referer")),
        user_agent=normalize_optional(raw.get("user_agent")),
        duration=duration,
    )


# === STREAMS ===

def iter_parse_stream(lines: Iterable[str], spec: LogFormatSpec,
                      policy: Union[str, ErrorPolicy] = ErrorPolicy.SKIP_AND_RECORD,
                      source_id: str = "-") -> Iterator[Union[LogEntry, ParseDiagnostic]]:
    """Yield entries and diagnostics in line order; halts after the first diagnostic under HALT."""
    policy = ErrorPolicy.parse(policy)
    iterator = iter(lines)
    file_order = 0
    while True:
        try:
            line = next(iterator)
        except StopIteration:
            return
        except (OSError, UnicodeDecodeError) as exc:
            raise LogStreamError(f"Błąd odczytu strumienia w linii {file_order + 1}: {exc}", source_id=source_id)

        result = parse_line(line, spec, source_id, file_order)
        file_order += 1
        yield result
        if isinstance(result, ParseDiagnostic) and policy is ErrorPolicy.HALT:
            return


def parse_stream(lines: Iterable[str], spec: LogFormatSpec,
                 policy: Union[str, ErrorPolicy] = ErrorPolicy.SKIP_AND_RECORD,
                 source_id: str = "-") -> Tuple[List[LogEntry], List[ParseDiagnostic]]:
    entries: List[LogEntry] = []
    diagnostics: List[ParseDiagnostic] = []
    for item in iter_parse_stream(lines, spec, policy, source_id):
        if isinstance(item, ParseDiagnostic):
            diagnostics.append(item)
        else:
            entries.append(item)

    if diagnostics:
        logger.warning(f"{source_id}: odrzucono {len(diagnostics)} linii (pierwsza: "
                       f"{diagnostics[0].line_number}, {diagnostics[0].kind.value})")
    logger.debug(f"{source_id}: sparsowano {len(entries)} wpisów")
    return entries, diagnostics


def parse_file(path: Union[str, Path], spec: LogFormatSpec,
               policy: Union[str, ErrorPolicy] = ErrorPolicy.SKIP_AND_RECORD,
               source_id: Optional[str] = None) -> Tuple[List[LogEntry], List[ParseDiagnostic]]:
    """Parse a log file; the source id defaults to the file name."""
    path = Path(path)
    source_id = source_id or path.name
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            return parse_stream(handle, spec, policy, source_id)
    except OSError as exc:
        raise LogStreamError(f"Nie można odczytać pliku {path}: {exc}", source_id=source_id)


__all__ = [
    "DiagnosticKind", "ErrorPolicy", "ParseDiagnostic", "Directive", "FormatString",
    "COMBINED_FORMAT", "COMBINED_MS_FORMAT", "compile_format_string", "parse_format_spec",
    "spec_from_format_string", "format_string_for_spec", "parse_timestamp", "format_timestamp",
    "decode_component", "encode_component", "split_query", "join_query", "split_request",
    "render_request", "escape_quoted", "unescape_quoted", "parse_line", "iter_parse_stream",
    "parse_stream", "parse_file",
]
