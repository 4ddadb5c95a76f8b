"""Synthetic WAPI usage logs with ground-truth sessions.

A WorkloadSpec describes users, applications, think times and which fields the
log format records. generate() simulates visits (an application opening
followed by endpoint requests), renders them in the chosen format and keeps the
true (session, application, user) label of every line, so reconstructed
sessions can be scored with score().

Randomness: one numpy SeedSequence per corpus, spawned into independent
sub-streams (proxy assignment, one per user, orphans, injections).

Inter-request gaps are exponential with a cap and session lengths follow a
truncated power law. Both are modelling assumptions, not measurements.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core.exceptions import RenderError, ScoringError, SynthConfigError, WapiLogError, validate_fraction
from .core.types import TruthRecord
from .log_model import Granularity, LogEntry, LogFormatSpec, RequestLine, Timestamp
from .parser import (
    FormatString,
    escape_quoted,
    format_string_for_spec,
    format_timestamp,
    parse_format_spec,
    render_request,
)
from .sessionizer import SessionizationResult

logger = logging.getLogger(__name__)

# 2020-12-18 00:00:00 UTC
BASE_EPOCH_MS = 1_608_249_600_000
HOST = "https://dhis2.example.org"
PROXY_IP = "10.0.0.1"
DEFAULT_SOURCE_ID = "synth.log"


@dataclass(frozen=True)
class Endpoint:
    method: str
    template: str
    query_keys: Tuple[str, ...] = ()


@dataclass(frozen=True)
class AppProfile:
    name: str
    endpoints: Tuple[Endpoint, ...]


def _endpoints(*items) -> Tuple[Endpoint, ...]:
    return tuple(Endpoint(m, t, tuple(q)) for m, t, q in items)


DHIS2_CATALOG: Tuple[AppProfile, ...] = (
    AppProfile("dhis-web-dashboard", _endpoints(
        ("GET", "/api/{ver}/dashboards/{uuid}", ["fields"]),
        ("GET", "/api/{ver}/me", ["fields"]),
        ("GET", "/api/{ver}/system/info", []),
        ("GET", "/api/{ver}/charts/{id}/data", ["dimension", "filter"]),
        ("GET", "/api/{ver}/maps/{uuid}", ["fields"]),
        ("GET", "/api/{ver}/dashboards/q/{id}", []),
        ("GET", "/api/{ver}/interpretations", ["fields", "paging"]),
        ("POST", "/api/{ver}/dataStatistics", ["eventType"]),
    )),
    AppProfile("dhis-web-tracker-capture", _endpoints(
        ("GET", "/api/{ver}/trackedEntityInstances/{uuid}", ["program", "fields"]),
        ("GET", "/api/{ver}/programs", ["fields", "paging"]),
        ("GET", "/api/{ver}/enrollments", ["ou", "program"]),
        ("POST", "/api/{ver}/events", []),
        ("PUT", "/api/{ver}/events/{uuid}", []),
        ("GET", "/api/{ver}/trackedEntityInstances/query", ["ou", "program", "pageSize"]),
        ("GET", "/api/{ver}/relationships/{id}", []),
        ("GET", "/api/{ver}/optionSets/{uuid}", ["fields"]),
    )),
    AppProfile("dhis-web-data-entry", _endpoints(
        ("GET", "/api/{ver}/dataSets/{uuid}/form", ["ou", "pe"]),
        ("POST", "/api/{ver}/dataValueSets", []),
        ("GET", "/api/{ver}/dataValues", ["de", "pe", "ou"]),
        ("GET", "/api/{ver}/organisationUnits/{id}", ["fields"]),
        ("GET", "/api/{ver}/completeDataSetRegistrations", ["ds", "pe", "ou"]),
        ("DELETE", "/api/{ver}/dataValues/{id}", []),
        ("GET", "/dhis-web-data-entry/getMetaData.action", []),
        ("GET", "/api/{ver}/lockExceptions", ["ds"]),
    )),
    AppProfile("dhis-web-maintenance", _endpoints(
        ("GET", "/api/{ver}/schemas", []),
        ("GET", "/api/{ver}/dataElements", ["fields", "filter", "page"]),
        ("PUT", "/api/{ver}/dataElements/{uuid}", []),
        ("GET", "/api/{ver}/categoryCombos/{uuid}", ["fields"]),
        ("POST", "/api/{ver}/metadata", ["importStrategy"]),
        ("GET", "/api/{ver}/indicators", ["fields", "page"]),
        ("GET", "/api/{ver}/userSettings", []),
        ("GET", "/api/{ver}/organisationUnitLevels", []),
    )),
)

USER_AGENTS = (
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/80.0.3987.122 Safari/537.36",
    "Mozilla/5.0 (Windows NT 6.1; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/75.0.3770.100 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_3) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/13.0.5 Safari/605.1.15",
    "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:72.0) Gecko/20100101 Firefox/72.0",
    "Mozilla/5.0 (Linux; Android 9; SM-T580) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/79.0.3945.136 Safari/537.36",
    "DHIS2 Android Capture/2.1.1 (Linux; Android 8.1.0; Nexus 5X Build/OPM7.181205.001)",
    "Mozilla/5.0 (iPad; CPU OS 13_3 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/13.0.4 Mobile/15E148 Safari/604.1",
    'okhttp/3.12.1 (client "sync", v2)',
)

QUERY_VALUES = ("id,name,displayName", "*", "true", "false", "2020Q4", "202012", "eq:ANC 1st visit", "50", "ou:LEVEL-2")
API_VERSIONS = ("29", "30", "31")


@dataclass(frozen=True)
class WorkloadSpec:
    app_catalog: Tuple[AppProfile, ...] = DHIS2_CATALOG
    user_count: int = 100
    visits_per_user: int = 3
    proxy_fraction: float = 0.0
    concurrent_open_rate: float = 0.3
    # (min, max, shape) over requests following the opening
    session_length_distribution: Tuple[int, int, float] = (1, 40, 1.3)
    # (mean, max) milliseconds between requests of a visit
    think_time_distribution: Tuple[int, int] = (20_000, 270_000)
    response_time_distribution: Tuple[int, int] = (150, 5_000)
    mean_concurrency: float = 1.0
    referer_logged: bool = True
    client_ip_logged: bool = True
    duration_logged: bool = False
    timestamp_granularity: Granularity = Granularity.MILLISECOND
    quoted_fields: bool = True
    app_id_coverage: float = 1.0
    corruption_rate: float = 0.0
    ambiguous_rate: float = 0.0
    orphan_rate: float = 0.0
    development: bool = False
    source_id: str = DEFAULT_SOURCE_ID
    seed: int = 42

    def validation_errors(self) -> List[str]:
        errors = []
        for name in ("proxy_fraction", "concurrent_open_rate", "app_id_coverage",
                     "corruption_rate", "ambiguous_rate", "orphan_rate"):
            try:
                validate_fraction(getattr(self, name), name)
            except WapiLogError as exc:
                errors.append(exc.message)
        if self.user_count < 1:
            errors.append("user_count musi być >= 1")
        if self.visits_per_user < 1:
            errors.append("visits_per_user musi być >= 1")
        if not self.app_catalog or any(not app.endpoints for app in self.app_catalog):
            errors.append("app_catalog musi zawierać aplikacje z co najmniej jednym endpointem")
        low, high, shape = self.session_length_distribution
        if low < 0 or high < low or shape < 0:
            errors.append(f"session_length_distribution nieprawidłowy: {self.session_length_distribution}")
        for name in ("think_time_distribution", "response_time_distribution"):
            mean, cap = getattr(self, name)
            if mean <= 0 or cap < mean:
                errors.append(f"{name} nieprawidłowy: {getattr(self, name)}")
        if self.mean_concurrency <= 0:
            errors.append("mean_concurrency musi być dodatnie")
        if self.ambiguous_rate > 0 and self.quoted_fields:
            errors.append("ambiguous_rate wymaga formatu bez cudzysłowów (quoted_fields=false)")
        if self.concurrent_open_rate > 0 and len(self.app_catalog) < 2:
            errors.append("concurrent_open_rate wymaga co najmniej dwóch aplikacji")
        return errors

    def log_format_spec(self) -> LogFormatSpec:
        return LogFormatSpec.from_flags(
            has_client_ip=self.client_ip_logged,
            has_duration=self.duration_logged,
            has_referer=self.referer_logged,
            has_user_agent=True,
            has_status=True,
            has_size=True,
            timestamp_granularity=self.timestamp_granularity,
            quoted=self.quoted_fields,
        )

    def format_string(self) -> str:
        return format_string_for_spec(self.log_format_spec())


PRESETS: Dict[str, WorkloadSpec] = {
    # quoted, millisecond, identifiers, referer, one address per user
    "golden": WorkloadSpec(duration_logged=True),
    # no client address, second granularity, referer, no identifiers
    "msf": WorkloadSpec(
        client_ip_logged=False, proxy_fraction=1.0, duration_logged=True,
        timestamp_granularity=Granularity.SECOND, app_id_coverage=0.0,
    ),
    # client address, millisecond, no referer, no identifiers
    "widp": WorkloadSpec(
        referer_logged=False, duration_logged=True, app_id_coverage=0.0,
    ),
    # exploratory traffic while consumers build their applications
    "development": WorkloadSpec(
        development=True, referer_logged=False, app_id_coverage=0.5,
        session_length_distribution=(2, 20, 1.0), think_time_distribution=(4_000, 60_000),
    ),
}


def preset(name: str, **overrides: Any) -> WorkloadSpec:
    if name not in PRESETS:
        raise SynthConfigError(f"Nieznany preset generatora: {name!r} (dozwolone: {', '.join(PRESETS)})")
    return replace(PRESETS[name], **overrides)


# === RENDERING ===

def render(e: LogEntry, format: Union[FormatString, LogFormatSpec]) -> str:
    """Serialize an entry so that parse_line gives it back under quoted formats."""
    spec = format if isinstance(format, LogFormatSpec) else parse_format_spec(format)
    parts = []
    for d in spec.field_layout:
        if d.literal is not None:
            parts.append(d.literal)
            continue
        name = d.name
        if name == "timestamp":
            parts.append(f"[{format_timestamp(e.timestamp, d.granularity is Granularity.MILLISECOND)}]")
            continue
        if name == "request":
            value = render_request(e.request)
            if not d.quoted and (" " in e.request.path or " " in e.request.protocol):
                raise RenderError(f"Ścieżka z odstępem nie może być zapisana bez cudzysłowów: {e.request.path!r}")
        elif name in ("ident", "authuser"):
            value = "-"
        elif name == "status":
            value = str(e.status)
        elif name == "size":
            value = "-" if e.object_size is None else str(e.object_size)
        elif name == "duration":
            value = "-" if e.duration is None else str(e.duration)
        else:
            raw = getattr(e, name)
            value = "-" if raw is None else raw
            if not d.quoted and name != "user_agent" and any(ch.isspace() for ch in value):
                raise RenderError(f"Pole {name} z odstępem wymaga cudzysłowów: {value!r}")
        parts.append(f'"{escape_quoted(value)}"' if d.quoted else value)
    return " ".join(parts)


# === GROUND TRUTH ===

@dataclass(frozen=True)
class TruthLabel:
    source_id: str
    file_order: int
    session_id: Optional[str]
    app: Optional[str]
    user: str
    true_epoch_millis: int
    has_app_id: bool

    @property
    def key(self) -> Tuple[str, int]:
        return self.source_id, self.file_order

    def to_record(self) -> TruthRecord:
        return {
            "source_id": self.source_id,
            "file_order": self.file_order,
            "session_id": self.session_id,
            "app": self.app,
            "user": self.user,
            "true_epoch_millis": self.true_epoch_millis,
            "has_app_id": self.has_app_id,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "TruthLabel":
        return cls(
            source_id=record["source_id"],
            file_order=int(record["file_order"]),
            session_id=record.get("session_id"),
            app=record.get("app"),
            user=record.get("user", ""),
            true_epoch_millis=int(record.get("true_epoch_millis", 0)),
            has_app_id=bool(record.get("has_app_id", False)),
        )


@dataclass(frozen=True)
class GroundTruthCorpus:
    lines: Tuple[str, ...]
    truth: Tuple[TruthLabel, ...]
    spec: LogFormatSpec
    format_string: str
    # entries parse_line yields for the lines that were not damaged
    entries: Tuple[LogEntry, ...] = ()
    corrupted_lines: Tuple[int, ...] = ()
    ambiguous_lines: Tuple[int, ...] = ()
    source_id: str = DEFAULT_SOURCE_ID

    def truth_records(self) -> List[TruthRecord]:
        return [t.to_record() for t in self.truth]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


@dataclass
class _Event:
    true_ms: int
    complete_ms: int
    user: int
    seq: int
    request: RequestLine
    status: int
    size: int
    duration: int
    referer: Optional[str]
    client_ip: str
    user_agent: str
    session_id: Optional[str]
    app: Optional[str]
    has_app_id: bool


class _Simulator:
    def __init__(self, spec: WorkloadSpec):
        self.spec = spec
        low, high, shape = spec.session_length_distribution
        self.lengths = np.arange(low, high + 1)
        weights = np.power(np.maximum(self.lengths, 1).astype(float), -shape)
        self.length_p = weights / weights.sum()
        self.mean_length = float((self.lengths * self.length_p).sum())
        total_visits = spec.user_count * spec.visits_per_user * (1 + spec.concurrent_open_rate)
        visit_ms = self.mean_length * spec.think_time_distribution[0]
        self.span_ms = max(60_000, int(total_visits * visit_ms / spec.mean_concurrency))

    def think(self, rng: np.random.Generator) -> int:
        mean, cap = self.spec.think_time_distribution
        return max(1, min(cap, int(rng.exponential(mean))))

    def response_time(self, rng: np.random.Generator) -> int:
        mean, cap = self.spec.response_time_distribution
        return min(cap, int(rng.exponential(mean)))

    def length(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.lengths, p=self.length_p))

    def fill(self, rng: np.random.Generator, endpoint: Endpoint) -> RequestLine:
        path = endpoint.template
        path = path.replace("{ver}", API_VERSIONS[int(rng.integers(len(API_VERSIONS)))])
        path = path.replace("{id}", str(int(rng.integers(1, 100_000))))
        if "{uuid}" in path:
            path = path.replace("{uuid}", _uuid(rng))
        query = tuple((key, QUERY_VALUES[int(rng.integers(len(QUERY_VALUES)))]) for key in endpoint.query_keys)
        return RequestLine(endpoint.method, path, query, "HTTP/1.1")

    def with_app_id(self, rng: np.random.Generator, request: RequestLine, app_index: int) -> Tuple[RequestLine, bool]:
        if rng.random() < self.spec.app_id_coverage:
            return replace(request, query=request.query + (("key", f"APP-{app_index:02d}-PROD"),)), True
        return request, False

    def event(self, rng, user: int, seq: int, at_ms: int, request: RequestLine, referer: Optional[str],
              ip: str, ua: str, session_id: Optional[str], app: Optional[str], app_index: int,
              status: Optional[int] = None) -> _Event:
        request, has_id = self.with_app_id(rng, request, app_index)
        duration = self.response_time(rng)
        if status is None:
            status = {"POST": 201, "DELETE": 204}.get(request.method, 200)
        size = 0 if status == 204 else int(rng.integers(200, 50_000))
        return _Event(at_ms, at_ms + duration, user, seq, request, status, size, duration,
                      referer, ip, ua, session_id, app, has_id)

    def visit(self, rng, user: int, visit_no: int, start_ms: int, app_index: int,
              ip: str, ua: str) -> List[_Event]:
        app = self.spec.app_catalog[app_index]
        session_id = f"u{user:04d}-v{visit_no:03d}"
        app_referer = f"{HOST}/{app.name}/index.html"
        events = []
        t = start_ms
        if self.spec.development:
            # no opening page; requests are retried and often rejected
            for _ in range(max(1, self.length(rng))):
                request = self.fill(rng, app.endpoints[int(rng.integers(len(app.endpoints)))])
                attempts = 1 + (int(rng.integers(1, 3)) if rng.random() < 0.3 else 0)
                for attempt in range(attempts):
                    status = int(rng.choice((400, 401, 404))) if attempt < attempts - 1 or rng.random() < 0.1 else None
                    events.append(self.event(rng, user, len(events), t, request, None, ip, ua,
                                             session_id, app.name, app_index, status))
                    t += max(1, int(rng.exponential(1_000))) if attempt < attempts - 1 else self.think(rng)
            return events

        open_request = RequestLine("GET", f"/{app.name}/index.action", (), "HTTP/1.1")
        events.append(self.event(rng, user, 0, t, open_request, f"{HOST}/", ip, ua, session_id, app.name, app_index))
        for _ in range(self.length(rng)):
            t += self.think(rng)
            request = self.fill(rng, app.endpoints[int(rng.integers(len(app.endpoints)))])
            events.append(self.event(rng, user, len(events), t, request, app_referer, ip, ua,
                                     session_id, app.name, app_index))
        return events

    def user_events(self, user: int, seed_seq: np.random.SeedSequence, ip: str) -> List[_Event]:
        rng = np.random.default_rng(seed_seq)
        spec = self.spec
        ua = USER_AGENTS[int(rng.integers(len(USER_AGENTS)))]
        apps = len(spec.app_catalog)
        events: List[_Event] = []
        visit_no = 0
        for _ in range(spec.visits_per_user):
            start = int(rng.uniform(0, self.span_ms))
            app_index = int(rng.integers(apps))
            visit = self.visit(rng, user, visit_no, BASE_EPOCH_MS + start, app_index, ip, ua)
            visit_no += 1
            events.extend(visit)
            if not spec.development and rng.random() < spec.concurrent_open_rate:
                # second application opened while the first visit is still running
                offset = int(rng.uniform(0, max(1, visit[-1].true_ms - visit[0].true_ms)))
                other = (app_index + 1 + int(rng.integers(apps - 1))) % apps
                events.extend(self.visit(rng, user, visit_no, visit[0].true_ms + offset, other, ip, ua))
                visit_no += 1
        for seq, e in enumerate(events):
            e.seq = seq
        return events

    def orphan_events(self, rng: np.random.Generator, count: int, ips: Sequence[str]) -> List[_Event]:
        events = []
        apps = self.spec.app_catalog
        for n in range(count):
            app_index = int(rng.integers(len(apps)))
            app = apps[app_index]
            request = self.fill(rng, app.endpoints[int(rng.integers(len(app.endpoints)))])
            referer = f"{HOST}/{apps[int(rng.integers(len(apps)))].name}/index.html" if rng.random() < 0.5 else None
            at = BASE_EPOCH_MS + int(rng.uniform(0, self.span_ms))
            user = int(rng.integers(len(ips)))
            ua = USER_AGENTS[int(rng.integers(len(USER_AGENTS)))]
            e = self.event(rng, user, 1_000_000 + n, at, request, referer, ips[user], ua, None, None, app_index)
            events.append(e)
        return events


def _uuid(rng: np.random.Generator) -> str:
    digits = "".join(f"{int(b):02x}" for b in rng.integers(0, 256, size=16))
    return f"{digits[:8]}-{digits[8:12]}-{digits[12:16]}-{digits[16:20]}-{digits[20:]}"


def _split_uri(line: str, request: RequestLine) -> str:
    """Insert a space inside the path so a bare request cannot be bounded."""
    path = request.path
    cut = path.rfind("/")
    spaced = path[:cut] + " " + path[cut:] if cut > 0 else path + " x"
    return line.replace(f"{request.method} {path}", f"{request.method} {spaced}", 1)


def generate(spec: WorkloadSpec) -> GroundTruthCorpus:
    """Simulate the workload; identical specs give byte-identical corpora."""
    errors = spec.validation_errors()
    if errors:
        raise SynthConfigError("Nieprawidłowa specyfikacja generatora", details={"validation_errors": errors})

    sim = _Simulator(spec)
    root = np.random.SeedSequence(spec.seed)
    assign_seq, users_seq, orphan_seq, inject_seq = root.spawn(4)

    assign_rng = np.random.default_rng(assign_seq)
    order = assign_rng.permutation(spec.user_count)
    proxied = set(int(u) for u in order[:round(spec.proxy_fraction * spec.user_count)])
    ips = [PROXY_IP if u in proxied else f"172.{16 + u // 65536}.{(u // 256) % 256}.{u % 256}"
           for u in range(spec.user_count)]

    events: List[_Event] = []
    for user, seq in enumerate(users_seq.spawn(spec.user_count)):
        events.extend(sim.user_events(user, seq, ips[user]))
    orphans = int(round(spec.orphan_rate * len(events)))
    if orphans:
        events.extend(sim.orphan_events(np.random.default_rng(orphan_seq), orphans, ips))

    # lines are written when responses complete, stamped with the request start
    events.sort(key=lambda ev: (ev.complete_ms, ev.true_ms, ev.user, ev.seq))

    log_spec = spec.log_format_spec()
    inject_rng = np.random.default_rng(inject_seq)
    lines, truth, entries, corrupted, ambiguous = [], [], [], [], []
    for file_order, ev in enumerate(events):
        if spec.timestamp_granularity is Granularity.SECOND:
            ts = Timestamp(ev.true_ms // 1000 * 1000, Granularity.SECOND)
        else:
            ts = Timestamp(ev.true_ms, Granularity.MILLISECOND)
        entry = LogEntry(
            timestamp=ts,
            request=ev.request,
            status=ev.status,
            source_id=spec.source_id,
            file_order=file_order,
            client_ip=ev.client_ip if spec.client_ip_logged else None,
            object_size=ev.size,
            referer=ev.referer if spec.referer_logged else None,
            user_agent=ev.user_agent,
            duration=ev.duration if spec.duration_logged else None,
        )
        line = render(entry, log_spec)

        if spec.corruption_rate and inject_rng.random() < spec.corruption_rate:
            bracket = line.index("[")
            lines.append(line[:bracket + 1 + int(inject_rng.integers(1, 20))])
            corrupted.append(file_order + 1)
            continue
        if spec.ambiguous_rate and inject_rng.random() < spec.ambiguous_rate:
            lines.append(_split_uri(line, ev.request))
            ambiguous.append(file_order + 1)
            continue

        lines.append(line)
        entries.append(entry)
        truth.append(TruthLabel(
            source_id=spec.source_id,
            file_order=file_order,
            session_id=ev.session_id,
            app=ev.app,
            user=f"user{ev.user:04d}",
            true_epoch_millis=ev.true_ms,
            has_app_id=ev.has_app_id,
        ))

    logger.debug(f"Wygenerowano {len(lines)} linii ({len(corrupted)} uszkodzonych, "
                 f"{len(ambiguous)} niejednoznacznych) dla {spec.user_count} użytkowników")
    return GroundTruthCorpus(
        lines=tuple(lines),
        truth=tuple(truth),
        spec=log_spec,
        format_string=spec.format_string(),
        entries=tuple(entries),
        corrupted_lines=tuple(corrupted),
        ambiguous_lines=tuple(ambiguous),
        source_id=spec.source_id,
    )


# === SCORING ===

@dataclass(frozen=True)
class AccuracyScore:
    pairwise_precision: float
    pairwise_recall: float
    pairwise_f1: float
    entry_assignment_accuracy: float
    discarded_true_positive_rate: float
    counts: Dict[str, int] = field(default_factory=dict, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "pairwise_precision": round(self.pairwise_precision, 6),
            "pairwise_recall": round(self.pairwise_recall, 6),
            "pairwise_f1": round(self.pairwise_f1, 6),
            "entry_assignment_accuracy": round(self.entry_assignment_accuracy, 6),
            "discarded_true_positive_rate": round(self.discarded_true_positive_rate, 6),
        }
        data.update(self.counts)
        return data


def _pairs(n: int) -> int:
    return n * (n - 1) // 2


def score(result: SessionizationResult, truth: Union[GroundTruthCorpus, Sequence[TruthLabel]]) -> AccuracyScore:
    """Pairwise precision/recall over same-session entry pairs; discarded entries are singletons."""
    labels = truth.truth if isinstance(truth, GroundTruthCorpus) else truth
    by_key = {t.key: t for t in labels}

    predicted: List[Tuple[Any, Any]] = []
    for session in result.sessions:
        for e in session.entries:
            predicted.append((e.key, session.session_id))
    for n, d in enumerate(result.discarded):
        predicted.append((d.entry.key, ("discarded", n)))

    if len(predicted) != len(by_key):
        raise ScoringError(
            f"Liczba wpisów ({len(predicted)}) różni się od danych referencyjnych ({len(by_key)})",
            details={"entries": len(predicted), "truth": len(by_key)},
        )

    pairs: List[Tuple[Any, Any]] = []
    for key, pred in predicted:
        label = by_key.get(key)
        if label is None:
            raise ScoringError(f"Wpis {key[0]}:{key[1] + 1} nie występuje w danych referencyjnych")
        true = label.session_id if label.session_id is not None else ("orphan", key)
        pairs.append((true, pred))

    true_sizes = Counter(t for t, _ in pairs)
    pred_sizes = Counter(p for _, p in pairs)
    joint = Counter(pairs)
    same_true = sum(_pairs(n) for n in true_sizes.values())
    same_pred = sum(_pairs(n) for n in pred_sizes.values())
    same_both = sum(_pairs(n) for n in joint.values())

    if same_true == 0 and same_pred == 0:
        precision = recall = 1.0
    else:
        precision = same_both / same_pred if same_pred else 0.0
        recall = same_both / same_true if same_true else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    # majority true session per reconstructed session
    majority: Dict[Any, int] = {}
    for (true, pred), n in joint.items():
        if isinstance(pred, tuple) or isinstance(true, tuple):
            continue
        majority[pred] = max(majority.get(pred, 0), n)
    accuracy = sum(majority.values()) / len(pairs) if pairs else 0.0

    discarded_with_truth = sum(1 for d in result.discarded if by_key[d.entry.key].session_id is not None)
    discarded_rate = discarded_with_truth / len(result.discarded) if result.discarded else 0.0

    return AccuracyScore(
        pairwise_precision=precision,
        pairwise_recall=recall,
        pairwise_f1=f1,
        entry_assignment_accuracy=accuracy,
        discarded_true_positive_rate=discarded_rate,
        counts={"entries": len(pairs), "sessions": len(result.sessions), "discarded": len(result.discarded)},
    )


def kendall_tau_distance(a: Sequence[Any], b: Sequence[Any]) -> int:
    """Number of item pairs ordered differently by the two sequences."""
    if len(a) != len(b) or set(a) != set(b):
        raise ValueError("Both orderings must hold the same distinct items")
    position = {item: i for i, item in enumerate(b)}
    return _count_inversions([position[item] for item in a])


def _count_inversions(values: List[int]) -> int:
    if len(values) < 2:
        return 0
    mid = len(values) // 2
    left, right = values[:mid], values[mid:]
    count = _count_inversions(left) + _count_inversions(right)
    left.sort()
    right.sort()
    # pairs (l, r) with l in left, r in right and l > r
    j = 0
    for value in left:
        while j < len(right) and right[j] < value:
            j += 1
        count += j
    return count


__all__ = [
    "Endpoint", "AppProfile", "DHIS2_CATALOG", "USER_AGENTS", "WorkloadSpec", "PRESETS", "preset",
    "render", "TruthLabel", "GroundTruthCorpus", "generate", "AccuracyScore", "score",
    "kendall_tau_distance",
]
