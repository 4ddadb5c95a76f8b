"""Session reconstruction for stateless WAPI logs.

Three heuristics are available:
- time_total: an application opening starts a session; other requests join the
  most recently opened session whose gap is within delta
- page_stay: per user key, a gap longer than theta closes the session
- navigation_time: the referer names the application whose most recent open
  session (within delta) receives the request

Entries that cannot be attributed are discarded with a reason, so every input
entry ends up in exactly one session or in the discarded list.
"""

from __future__ import annotations

import logging
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Pattern, Set, Tuple, Union
from urllib.parse import urlsplit

from .core.exceptions import SessionizerConfigError, UnorderedInputError, format_duration, parse_duration
from .core.types import DiscardedRecord, SessionRecord
from .log_model import LogEntry, Timestamp, entry_from_record, entry_to_record, sort_key

logger = logging.getLogger(__name__)

DEFAULT_DELTA_MS = 30 * 60_000
DEFAULT_THETA_MS = 10 * 60_000
DEFAULT_APP_OPEN_PATTERN = "/{app}/index.action"
DELTA_PRESETS = {"5m": 5 * 60_000, "15m": 15 * 60_000, "30m": 30 * 60_000}
USER_KEY_FIELDS = ("client_ip", "user_agent")


class Heuristic(Enum):
    TIME_TOTAL = "time_total"
    PAGE_STAY = "page_stay"
    NAVIGATION_TIME = "navigation_time"

    @property
    def short_label(self) -> str:
        return _SHORT_LABELS[self]

    @classmethod
    def parse(cls, value: Union[str, "Heuristic"]) -> "Heuristic":
        if isinstance(value, cls):
            return value
        for heuristic, label in _SHORT_LABELS.items():
            if value in (label, heuristic.value):
                return heuristic
        raise SessionizerConfigError(f"Nieznana heurystyka: {value!r} (dozwolone: time, page-stay, nav)")


_SHORT_LABELS = {
    Heuristic.TIME_TOTAL: "time",
    Heuristic.PAGE_STAY: "page-stay",
    Heuristic.NAVIGATION_TIME: "nav",
}


class TimeReference(Enum):
    LAST_ACTIVITY = "last_activity"
    OPENING = "opening"


class AmbiguityPolicy(Enum):
    ASSIGN = "assign"
    DISCARD = "discard"


class AbsentRefererPolicy(Enum):
    DISCARD = "discard"
    TIME_FALLBACK = "time_fallback"


class DiscardReason(Enum):
    NO_OPEN_APP = "no_open_app"
    OVER_THRESHOLD = "over_threshold"
    AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class SessionizerConfig:
    heuristic: Heuristic = Heuristic.TIME_TOTAL
    delta_ms: int = DEFAULT_DELTA_MS
    theta_ms: int = DEFAULT_THETA_MS
    app_open_pattern: str = DEFAULT_APP_OPEN_PATTERN
    user_key_fields: Tuple[str, ...] = ()
    time_reference: TimeReference = TimeReference.LAST_ACTIVITY
    ambiguity_policy: AmbiguityPolicy = AmbiguityPolicy.ASSIGN
    absent_referer: AbsentRefererPolicy = AbsentRefererPolicy.DISCARD
    label: Optional[str] = None

    @property
    def display_label(self) -> str:
        if self.label:
            return self.label
        if self.heuristic is Heuristic.PAGE_STAY:
            return f"page-stay {format_duration(self.theta_ms)}"
        return f"{self.heuristic.short_label} {format_duration(self.delta_ms)}"

    def validation_errors(self) -> List[str]:
        errors = []
        if self.delta_ms <= 0:
            errors.append("delta musi być dodatnie")
        if self.heuristic is Heuristic.PAGE_STAY and self.theta_ms <= 0:
            errors.append("theta musi być dodatnie dla heurystyki page-stay")
        if self.app_open_pattern.count("{app}") != 1:
            errors.append(f"app_open_pattern musi zawierać dokładnie jedno {{app}}: {self.app_open_pattern!r}")
        unknown = set(self.user_key_fields) - set(USER_KEY_FIELDS)
        if unknown:
            errors.append(f"Nieznane pola klucza użytkownika: {sorted(unknown)}")
        return errors

    @classmethod
    def from_dict(cls, data: Dict) -> "SessionizerConfig":
        """Build from a TOML table; durations accept ``5m``/``30s`` strings."""
        allowed = {"heuristic", "delta", "theta", "app_open_pattern", "user_key_fields",
                   "time_reference", "ambiguity_policy", "absent_referer", "label"}
        unknown = set(data) - allowed
        if unknown:
            raise SessionizerConfigError(f"Nieznane klucze konfiguracji sesji: {sorted(unknown)}")
        try:
            return cls(
                heuristic=Heuristic.parse(data.get("heuristic", "time")),
                delta_ms=parse_duration(data.get("delta", DEFAULT_DELTA_MS // 60_000), "delta"),
                theta_ms=parse_duration(data.get("theta", DEFAULT_THETA_MS // 60_000), "theta"),
                app_open_pattern=data.get("app_open_pattern", DEFAULT_APP_OPEN_PATTERN),
                user_key_fields=tuple(data.get("user_key_fields", ())),
                time_reference=TimeReference(data.get("time_reference", "last_activity")),
                ambiguity_policy=AmbiguityPolicy(data.get("ambiguity_policy", "assign")),
                absent_referer=AbsentRefererPolicy(data.get("absent_referer", "discard")),
                label=data.get("label"),
            )
        except ValueError as exc:
            raise SessionizerConfigError(f"Nieprawidłowa konfiguracja sesji: {exc}")


@dataclass(frozen=True)
class Session:
    session_id: str
    entries: Tuple[LogEntry, ...]
    app: Optional[str] = None
    user_key: Optional[str] = None
    ambiguous: frozenset = frozenset()

    @property
    def opened_at(self) -> Timestamp:
        return self.entries[0].timestamp

    @property
    def closed_at(self) -> Timestamp:
        return self.entries[-1].timestamp

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def duration_ms(self) -> int:
        return self.closed_at.epoch_millis - self.opened_at.epoch_millis


@dataclass(frozen=True)
class Discarded:
    entry: LogEntry
    reason: DiscardReason


SessionEvent = Union[Session, Discarded]


@dataclass
class SessionizationResult:
    sessions: List[Session] = field(default_factory=list)
    discarded: List[Discarded] = field(default_factory=list)

    @property
    def entry_count(self) -> int:
        return sum(s.size for s in self.sessions) + len(self.discarded)

    def ambiguous_count(self) -> int:
        return sum(len(s.ambiguous) for s in self.sessions)


# === HELPERS ===

def compile_app_pattern(pattern: str) -> Pattern[str]:
    """``/{app}/index.action`` -> regex capturing one path segment as ``app``."""
    if pattern.count("{app}") != 1:
        raise SessionizerConfigError(f"app_open_pattern musi zawierać dokładnie jedno {{app}}: {pattern!r}")
    before, after = pattern.split("{app}")
    return re.compile(re.escape(before) + r"(?P<app>[^/]+)" + re.escape(after))


def detect_app_open(e: LogEntry, pattern: Union[str, Pattern[str]] = DEFAULT_APP_OPEN_PATTERN) -> Optional[str]:
    """Application name when ``e`` is ``GET`` on the opening pattern."""
    if e.request.method != "GET":
        return None
    regex = compile_app_pattern(pattern) if isinstance(pattern, str) else pattern
    match = regex.fullmatch(e.request.path)
    return match.group("app") if match else None


def user_key(e: LogEntry, fields: Iterable[str]) -> Optional[str]:
    values = [getattr(e, name) for name in fields]
    present = [v for v in values if v is not None]
    return "|".join(present) if present else None


def referer_app(referer: Optional[str]) -> Optional[str]:
    """First path segment of a referer URL (``https://h/dhis-web-dashboard/...``)."""
    if not referer:
        return None
    path = urlsplit(referer).path if "://" in referer else referer
    segment = path.lstrip("/").split("/", 1)[0]
    return segment or None


@dataclass
class _OpenSession:
    index: int
    app: Optional[str]
    user_key: Optional[str]
    opened_ms: int
    last_ms: int
    entries: List[LogEntry] = field(default_factory=list)
    ambiguous: Set[Tuple[str, int]] = field(default_factory=set)

    def add(self, e: LogEntry, ambiguous: bool = False):
        self.entries.append(e)
        self.last_ms = e.timestamp.epoch_millis
        if ambiguous:
            self.ambiguous.add(e.key)

    def freeze(self) -> Session:
        return Session(
            session_id=f"S{self.index + 1:06d}",
            entries=tuple(self.entries),
            app=self.app,
            user_key=self.user_key,
            ambiguous=frozenset(self.ambiguous),
        )


class _Builder:
    """Open-session table shared by the heuristics.

    Closed sessions and discarded entries collect in ``pending`` until the
    heuristic drains them, so only sessions that can still grow stay in memory.
    """

    def __init__(self, config: SessionizerConfig):
        self.config = config
        self.pattern = compile_app_pattern(config.app_open_pattern)
        self.opened = 0
        # user key -> open sessions in opening order
        self.open: Dict[Optional[str], List[_OpenSession]] = {}
        self.pending: List[SessionEvent] = []
        # (user key, app) pairs that ever opened; app None means any app
        self.ever_opened: Set[Tuple[Optional[str], Optional[str]]] = set()
        self.closed = self.discarded = self.ambiguous = 0
        self._horizon = math.inf
        self._previous = None

    def check_order(self, e: LogEntry):
        key = sort_key(e)
        if self._previous is not None and key < self._previous:
            raise UnorderedInputError(
                f"Wpisy nie są uporządkowane: {e.source_id}:{e.line_number} po {self._previous}",
                details={"entry": e.key},
            )
        self._previous = key

    def key_of(self, e: LogEntry) -> Optional[str]:
        return user_key(e, self.config.user_key_fields)

    def start(self, e: LogEntry, app: Optional[str], ukey: Optional[str]) -> _OpenSession:
        now = e.timestamp.epoch_millis
        session = _OpenSession(self.opened, app, ukey, now, now)
        session.add(e)
        self.opened += 1
        self.open.setdefault(ukey, []).append(session)
        self.ever_opened.add((ukey, app))
        self.ever_opened.add((ukey, None))
        self._horizon = min(self._horizon, now + self.config.delta_ms)
        return session

    def reference_ms(self, session: _OpenSession) -> int:
        if self.config.time_reference is TimeReference.OPENING:
            return session.opened_ms
        return session.last_ms

    def prune(self, now_ms: int):
        """Close sessions that can no longer receive entries."""
        # references only grow, so nothing expires before the horizon
        if now_ms <= self._horizon:
            return
        delta = self.config.delta_ms
        horizon = math.inf
        for ukey in list(self.open):
            alive = []
            for s in self.open[ukey]:
                expiry = self.reference_ms(s) + delta
                if now_ms > expiry:
                    self.close(s)
                else:
                    alive.append(s)
                    horizon = min(horizon, expiry)
            if alive:
                self.open[ukey] = alive
            else:
                del self.open[ukey]
        self._horizon = horizon

    def close(self, session: _OpenSession):
        self.closed += 1
        self.ambiguous += len(session.ambiguous)
        self.pending.append(session.freeze())

    def close_all(self):
        remaining = [s for sessions in self.open.values() for s in sessions]
        for s in sorted(remaining, key=lambda s: s.index):
            self.close(s)
        self.open = {}

    def discard(self, e: LogEntry, reason: DiscardReason):
        self.discarded += 1
        self.pending.append(Discarded(e, reason))

    def drain(self) -> List[SessionEvent]:
        events, self.pending = self.pending, []
        return events

    def eligible(self, e: LogEntry, ukey: Optional[str], app: Optional[str] = None) -> List[_OpenSession]:
        # ukey is None for every entry when no user key fields are configured
        now = e.timestamp.epoch_millis
        return [
            s for s in self.open.get(ukey, ())
            if (app is None or s.app == app)
            and now - self.reference_ms(s) <= self.config.delta_ms
        ]

    def assign(self, e: LogEntry, candidates: List[_OpenSession], ukey: Optional[str], app: Optional[str] = None):
        if not candidates:
            opened = (ukey, app) in self.ever_opened
            self.discard(e, DiscardReason.OVER_THRESHOLD if opened else DiscardReason.NO_OPEN_APP)
            return
        # candidates keep opening order; the most recent opening wins
        chosen = candidates[-1]
        ambiguous = len(candidates) > 1
        if ambiguous and self.config.ambiguity_policy is AmbiguityPolicy.DISCARD:
            self.discard(e, DiscardReason.AMBIGUOUS)
            return
        chosen.add(e, ambiguous)

    def log_summary(self):
        logger.debug(
            f"{self.config.display_label}: {self.closed} sesji, "
            f"{self.discarded} odrzuconych, {self.ambiguous} niejednoznacznych"
        )


def _require(config: SessionizerConfig, heuristic: Heuristic):
    if config.heuristic is not heuristic:
        raise SessionizerConfigError(
            f"Konfiguracja dla {config.heuristic.value}, oczekiwano {heuristic.value}")
    errors = config.validation_errors()
    if errors:
        raise SessionizerConfigError("Nieprawidłowa konfiguracja sesji", details={"validation_errors": errors})


# === HEURISTICS ===
#
# Each iter_* function validates eagerly and returns a generator of events:
# a Session once it can no longer grow, or a Discarded entry as soon as it is
# rejected. Sessions therefore arrive in closing order; the list-returning
# variants restore opening order.

def iter_sessionize_time(entries: Iterable[LogEntry], config: SessionizerConfig) -> Iterator[SessionEvent]:
    _require(config, Heuristic.TIME_TOTAL)
    return _time_events(entries, _Builder(config))


def _time_events(entries: Iterable[LogEntry], builder: _Builder) -> Iterator[SessionEvent]:
    for e in entries:
        builder.check_order(e)
        builder.prune(e.timestamp.epoch_millis)
        ukey = builder.key_of(e)
        app = detect_app_open(e, builder.pattern)
        if app is not None:
            builder.start(e, app, ukey)
        else:
            builder.assign(e, builder.eligible(e, ukey), ukey)
        yield from builder.drain()
    builder.close_all()
    yield from builder.drain()
    builder.log_summary()


def iter_sessionize_page_stay(entries: Iterable[LogEntry], config: SessionizerConfig) -> Iterator[SessionEvent]:
    _require(config, Heuristic.PAGE_STAY)
    return _page_stay_events(entries, _Builder(config))


def _page_stay_events(entries: Iterable[LogEntry], builder: _Builder) -> Iterator[SessionEvent]:
    theta = builder.config.theta_ms
    # one current session per user key, least recently active first
    current: OrderedDict[Optional[str], _OpenSession] = OrderedDict()
    for e in entries:
        builder.check_order(e)
        now = e.timestamp.epoch_millis
        while current:
            oldest = next(iter(current.values()))
            if now - oldest.last_ms <= theta:
                break
            builder.close(current.popitem(last=False)[1])
        ukey = builder.key_of(e)
        app = detect_app_open(e, builder.pattern)
        session = current.get(ukey)
        if session is None:
            session = current[ukey] = _OpenSession(builder.opened, app, ukey, now, now)
            builder.opened += 1
            session.add(e)
        else:
            session.add(e)
            current.move_to_end(ukey)
            if app is not None:
                session.app = app
        yield from builder.drain()
    for session in sorted(current.values(), key=lambda s: s.index):
        builder.close(session)
    yield from builder.drain()
    builder.log_summary()


def iter_sessionize_navigation(entries: Iterable[LogEntry], config: SessionizerConfig,
                               has_referer: Optional[bool] = None) -> Iterator[SessionEvent]:
    """Referer-driven attribution; ``has_referer=False`` (from the log format) is a config error."""
    _require(config, Heuristic.NAVIGATION_TIME)
    if has_referer is False:
        raise SessionizerConfigError("Heurystyka nawigacyjna wymaga pola referer w formacie logu")
    return _navigation_events(entries, _Builder(config))


def _navigation_events(entries: Iterable[LogEntry], builder: _Builder) -> Iterator[SessionEvent]:
    fallback = builder.config.absent_referer is AbsentRefererPolicy.TIME_FALLBACK
    for e in entries:
        builder.check_order(e)
        builder.prune(e.timestamp.epoch_millis)
        ukey = builder.key_of(e)
        app = detect_app_open(e, builder.pattern)
        if app is not None:
            # the opening request's own referer is ignored
            builder.start(e, app, ukey)
        elif e.referer is None:
            if fallback:
                builder.assign(e, builder.eligible(e, ukey), ukey)
            else:
                builder.discard(e, DiscardReason.NO_OPEN_APP)
        else:
            target = referer_app(e.referer)
            builder.assign(e, builder.eligible(e, ukey, target), ukey, target)
        yield from builder.drain()
    builder.close_all()
    yield from builder.drain()
    builder.log_summary()


def iter_sessionize(entries: Iterable[LogEntry], config: SessionizerConfig,
                    has_referer: Optional[bool] = None) -> Iterator[SessionEvent]:
    if config.heuristic is Heuristic.TIME_TOTAL:
        return iter_sessionize_time(entries, config)
    if config.heuristic is Heuristic.PAGE_STAY:
        return iter_sessionize_page_stay(entries, config)
    return iter_sessionize_navigation(entries, config, has_referer)


def collect_events(events: Iterable[SessionEvent]) -> SessionizationResult:
    """Sessions in opening order, discarded entries in arrival order."""
    result = SessionizationResult()
    for event in events:
        if isinstance(event, Discarded):
            result.discarded.append(event)
        else:
            result.sessions.append(event)
    # ids sort numerically past S999999
    result.sessions.sort(key=lambda s: (len(s.session_id), s.session_id))
    return result


def sessionize_time(entries: Iterable[LogEntry], config: SessionizerConfig) -> SessionizationResult:
    return collect_events(iter_sessionize_time(entries, config))


def sessionize_page_stay(entries: Iterable[LogEntry], config: SessionizerConfig) -> SessionizationResult:
    return collect_events(iter_sessionize_page_stay(entries, config))


def sessionize_navigation(entries: Iterable[LogEntry], config: SessionizerConfig,
                          has_referer: Optional[bool] = None) -> SessionizationResult:
    return collect_events(iter_sessionize_navigation(entries, config, has_referer))


def sessionize(entries: Iterable[LogEntry], config: SessionizerConfig,
               has_referer: Optional[bool] = None) -> SessionizationResult:
    return collect_events(iter_sessionize(entries, config, has_referer))


# === JSONL ===

def _ts_record(ts: Timestamp) -> Dict:
    return {"epoch_millis": ts.epoch_millis, "declared_granularity": ts.declared_granularity.value}


def session_to_record(session: Session) -> SessionRecord:
    return {
        "session_id": session.session_id,
        "app": session.app,
        "user_key": session.user_key,
        "opened_at": _ts_record(session.opened_at),
        "closed_at": _ts_record(session.closed_at),
        "entries": [entry_to_record(e) for e in session.entries],
        "ambiguous": sorted([list(k) for k in session.ambiguous]),
    }


def discarded_to_record(item: Discarded) -> Dict:
    record: DiscardedRecord = {"entry": entry_to_record(item.entry), "reason": item.reason.value}
    return {"discarded": record}


def event_to_record(event: SessionEvent) -> Dict:
    if isinstance(event, Discarded):
        return discarded_to_record(event)
    return session_to_record(event)


def result_to_records(result: SessionizationResult) -> List[Dict]:
    """One record per session, then one ``{"discarded": ...}`` record per discarded entry."""
    records: List[Dict] = [session_to_record(s) for s in result.sessions]
    records.extend(discarded_to_record(d) for d in result.discarded)
    return records


def _discarded_from_record(item: Dict) -> Discarded:
    return Discarded(entry_from_record(item["entry"]), DiscardReason(item["reason"]))


def iter_events_from_records(records: Iterable[Dict]) -> Iterator[SessionEvent]:
    """Inverse of event_to_record; also reads the older single trailing ``discarded`` list.

    Raises KeyError, TypeError or ValueError on a malformed record.
    """
    for record in records:
        if "discarded" in record:
            items = record["discarded"]
            if isinstance(items, list):
                for item in items:
                    yield _discarded_from_record(item)
            else:
                yield _discarded_from_record(items)
            continue
        yield Session(
            session_id=record["session_id"],
            entries=tuple(entry_from_record(r) for r in record["entries"]),
            app=record.get("app"),
            user_key=record.get("user_key"),
            ambiguous=frozenset(tuple(k) for k in record.get("ambiguous", [])),
        )


def result_from_records(records: Iterable[Dict]) -> SessionizationResult:
    """Rebuild a result keeping the record order."""
    result = SessionizationResult()
    for event in iter_events_from_records(records):
        if isinstance(event, Discarded):
            result.discarded.append(event)
        else:
            result.sessions.append(event)
    return result


__all__ = [
    "Heuristic", "TimeReference", "AmbiguityPolicy", "AbsentRefererPolicy", "DiscardReason",
    "SessionizerConfig", "Session", "Discarded", "SessionEvent", "SessionizationResult", "DELTA_PRESETS",
    "compile_app_pattern", "detect_app_open", "user_key", "referer_app",
    "iter_sessionize_time", "iter_sessionize_page_stay", "iter_sessionize_navigation", "iter_sessionize",
    "sessionize_time", "sessionize_page_stay", "sessionize_navigation", "sessionize", "collect_events",
    "session_to_record", "discarded_to_record", "event_to_record", "result_to_records",
    "iter_events_from_records", "result_from_records",
]
