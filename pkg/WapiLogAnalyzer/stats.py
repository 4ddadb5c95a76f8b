"""Session statistics and heuristic comparison.

- StatsAccumulator -> the same figures from a stream of session events
- session_stats(result, min_size) -> SessionStats (only sessions with more than min_size entries)
- distinct_requests_per_app(result, generalized) -> AppRequestProfile per application
- compare_heuristics(entries, configs) -> one SessionStats row per config
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from .core.exceptions import WapiLogError
from .log_model import LogEntry
from .sessionizer import Discarded, SessionEvent, SessionizationResult, SessionizerConfig, sessionize

logger = logging.getLogger(__name__)

DEFAULT_MIN_SIZE = 3
MAX_PROFILE_EXAMPLES = 10
CSV_COLUMNS = ("heuristic", "no_of_sessions", "avg_duration_sec", "avg_size", "discarded")

RequestShape = Tuple[str, str, Tuple[str, ...]]


@dataclass(frozen=True)
class SessionStats:
    heuristic_label: str
    session_count: int
    avg_duration: Optional[float]
    avg_size: Optional[float]
    min_size: int = DEFAULT_MIN_SIZE
    discarded: Optional[int] = None
    error: Optional[str] = None

    def display(self) -> str:
        if self.error:
            return f"{self.heuristic_label}: BŁĄD ({self.error})"
        if self.session_count == 0:
            return f"{self.heuristic_label}: 0 sesji"
        return (f"{self.heuristic_label}: {self.session_count} sesji, "
                f"średni czas {round(self.avg_duration)} sec, średni rozmiar {round(self.avg_size)}")

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "heuristic": self.heuristic_label,
            "session_count": self.session_count,
            "avg_duration_sec": self.avg_duration,
            "avg_size": self.avg_size,
            "min_size": self.min_size,
        }
        if self.discarded is not None:
            data["discarded"] = self.discarded
        if self.error is not None:
            data["error"] = self.error
        return data

    def to_csv_row(self) -> Dict[str, Any]:
        def cell(value):
            return "" if value is None else value
        return {
            "heuristic": self.heuristic_label,
            "no_of_sessions": "ERROR" if self.error else self.session_count,
            "avg_duration_sec": "" if self.avg_duration is None else round(self.avg_duration),
            "avg_size": "" if self.avg_size is None else round(self.avg_size, 2),
            "discarded": cell(self.discarded),
        }


@dataclass(frozen=True)
class AppRequestProfile:
    app: str
    distinct_requests: int
    examples: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict[str, Any]:
        return {"app": self.app, "distinct_requests": self.distinct_requests, "examples": list(self.examples)}


def request_shape(e: LogEntry, generalized: bool) -> RequestShape:
    path = e.generalized_path if generalized and e.generalized_path is not None else e.request.path
    return e.request.method, path, tuple(sorted(e.request.query_keys()))


def format_shape(shape: RequestShape) -> str:
    method, path, keys = shape
    return f"{method} {path}?{'&'.join(keys)}" if keys else f"{method} {path}"


class StatsAccumulator:
    """Running statistics over session events, one event at a time.

    Keeps integer totals for counted sessions, a discard count and, with
    ``per_app``, the set of request shapes seen per application.
    """

    def __init__(self, min_size: int = DEFAULT_MIN_SIZE, label: str = "sessions",
                 per_app: bool = False, generalized: bool = True):
        self.min_size = min_size
        self.label = label
        self.per_app = per_app
        self.generalized = generalized
        self.session_count = 0
        self.total_duration_ms = 0
        self.total_size = 0
        self.discarded = 0
        self.shapes: Dict[str, Set[RequestShape]] = {}

    def add(self, event: SessionEvent) -> None:
        if isinstance(event, Discarded):
            self.discarded += 1
            return
        if self.per_app and event.app is not None:
            bucket = self.shapes.setdefault(event.app, set())
            bucket.update(request_shape(e, self.generalized) for e in event.entries)
        if event.size > self.min_size:
            self.session_count += 1
            self.total_duration_ms += event.duration_ms
            self.total_size += event.size

    def update(self, events: Iterable[SessionEvent]) -> "StatsAccumulator":
        for event in events:
            self.add(event)
        return self

    def stats(self) -> SessionStats:
        if not self.session_count:
            return SessionStats(self.label, 0, None, None, self.min_size, self.discarded)
        return SessionStats(
            heuristic_label=self.label,
            session_count=self.session_count,
            avg_duration=self.total_duration_ms / 1000.0 / self.session_count,
            avg_size=self.total_size / self.session_count,
            min_size=self.min_size,
            discarded=self.discarded,
        )

    def profiles(self) -> List[AppRequestProfile]:
        profiles = []
        for app in sorted(self.shapes):
            ordered = sorted(self.shapes[app])
            profiles.append(AppRequestProfile(
                app=app,
                distinct_requests=len(ordered),
                examples=tuple(format_shape(s) for s in ordered[:MAX_PROFILE_EXAMPLES]),
            ))
        return profiles


def _events(result: SessionizationResult) -> Iterator[SessionEvent]:
    yield from result.sessions
    yield from result.discarded


def session_stats(result: SessionizationResult, min_size: int = DEFAULT_MIN_SIZE,
                  label: str = "sessions") -> SessionStats:
    """Averages over sessions with strictly more than ``min_size`` entries."""
    return StatsAccumulator(min_size, label).update(_events(result)).stats()


def distinct_requests_per_app(result: SessionizationResult, generalized: bool = True) -> List[AppRequestProfile]:
    """Distinct request shapes per application, across all of its sessions."""
    return StatsAccumulator(per_app=True, generalized=generalized).update(result.sessions).profiles()


def compare_heuristics(entries: Iterable[LogEntry], configs: Sequence[SessionizerConfig],
                       min_size: int = DEFAULT_MIN_SIZE, has_referer: Optional[bool] = None) -> List[SessionStats]:
    """One row per config in input order; a failing config yields an error row."""
    entries = list(entries)
    rows = []
    for config in configs:
        label = config.display_label
        try:
            result = sessionize(entries, config, has_referer)
        except WapiLogError as exc:
            logger.warning(f"Porównanie: konfiguracja {label} nie powiodła się: {exc.message}")
            rows.append(SessionStats(label, 0, None, None, min_size, None, error=exc.message))
            continue
        rows.append(session_stats(result, min_size, label))
    return rows


def stats_to_dict(stats: SessionStats, profiles: Optional[Sequence[AppRequestProfile]] = None) -> Dict[str, Any]:
    data: Dict[str, Any] = {"stats": stats.to_dict()}
    if profiles is not None:
        data["per_app"] = [p.to_dict() for p in profiles]
    return data


__all__ = [
    "SessionStats", "AppRequestProfile", "StatsAccumulator", "CSV_COLUMNS", "DEFAULT_MIN_SIZE",
    "session_stats", "request_shape", "format_shape", "distinct_requests_per_app",
    "compare_heuristics", "stats_to_dict",
]
