"""Log quality assessment for WAPI usage logs.

Five detectors, each an independent read-only pass:
- separator_in_field: field bodies contain the field separator
- insufficient_fields: the format lacks fields an analysis needs
- missing_app_identifier: requests do not carry an application identifier
- hidden_client_ip: the client address is missing or looks like a shared proxy
- coarse_timestamp: second-granularity timestamps cannot order requests

build_report runs them in that fixed order and attaches the mitigation lines.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Pattern, Sequence, Tuple

from .core.exceptions import ConfigValidationError, parse_duration
from .log_model import Granularity, LogEntry, LogFormatSpec
from .parser import DiagnosticKind, ParseDiagnostic
from .sessionizer import DEFAULT_APP_OPEN_PATTERN, compile_app_pattern, detect_app_open, referer_app

logger = logging.getLogger(__name__)


class IssueKind(Enum):
    SEPARATOR_IN_FIELD = "separator_in_field"
    INSUFFICIENT_FIELDS = "insufficient_fields"
    MISSING_APP_IDENTIFIER = "missing_app_identifier"
    HIDDEN_CLIENT_IP = "hidden_client_ip"
    COARSE_TIMESTAMP = "coarse_timestamp"


class Severity(Enum):
    INFO = "info"
    WARNING = "warning"
    CRITICAL = "critical"


ISSUE_ORDER = tuple(IssueKind)

MITIGATIONS: Dict[IssueKind, Tuple[str, ...]] = {
    IssueKind.SEPARATOR_IN_FIELD: (
        "Use a machine parse-able format for logs",
        "double-quote the fields that might have special characters",
    ),
    IssueKind.INSUFFICIENT_FIELDS: ("Log the referer, user agent",),
    IssueKind.MISSING_APP_IDENTIFIER: (
        "Provide application identifiers",
        "Provide different application identifiers for development phase",
    ),
    IssueKind.HIDDEN_CLIENT_IP: ("Log the referer, user agent",),
    IssueKind.COARSE_TIMESTAMP: ("Log the timestamp in high precision",),
}

DELIMITER_CHARS = (" ", ";", ",")
MAX_EXAMPLE_LINES = 10


@dataclass(frozen=True)
class AnalysisProfile:
    name: str
    required: Tuple[str, ...] = ()
    recommended: Tuple[str, ...] = ()


PROFILES: Dict[str, AnalysisProfile] = {
    "nav-sessionization": AnalysisProfile("nav-sessionization", ("referer",), ("user_agent",)),
    "time-sessionization": AnalysisProfile("time-sessionization", (), ("client_ip", "user_agent")),
    "user-distinction": AnalysisProfile("user-distinction", ("user_agent",), ("client_ip",)),
}


@dataclass(frozen=True)
class IdLocator:
    """``query:<key>`` or ``path:<regex>`` (first group, else the whole match)."""

    kind: str
    argument: str
    regex: Optional[Pattern[str]] = None

    @classmethod
    def parse(cls, text: str) -> "IdLocator":
        kind, sep, argument = text.partition(":")
        if not sep or not argument or kind not in ("query", "path"):
            raise ConfigValidationError(f"Nieprawidłowy lokalizator identyfikatora: {text!r} "
                                        f"(oczekiwano query:<klucz> lub path:<regex>)")
        if kind == "path":
            try:
                return cls(kind, argument, re.compile(argument))
            except re.error as exc:
                raise ConfigValidationError(f"Nieprawidłowe wyrażenie w lokalizatorze {text!r}: {exc}")
        return cls(kind, argument)

    def locate(self, e: LogEntry) -> Optional[str]:
        if self.kind == "query":
            value = e.request.query_value(self.argument)
            return value or None
        match = self.regex.search(e.request.path)
        if not match:
            return None
        return match.group(1) if match.groups() else match.group(0)


@dataclass(frozen=True)
class QualityConfig:
    profile: Optional[str] = "nav-sessionization"
    id_locators: Tuple[str, ...] = ("query:key",)
    app_id_floor: float = 0.95
    top_ip_threshold: float = 0.9
    zero_millis_threshold: float = 0.99
    concurrency_floor: int = 2
    witness_window_ms: int = 30 * 60_000
    app_open_pattern: str = DEFAULT_APP_OPEN_PATTERN
    disabled_detectors: FrozenSet[str] = frozenset()

    def validation_errors(self) -> List[str]:
        errors = []
        if self.profile is not None and self.profile not in PROFILES:
            errors.append(f"Nieznany profil analizy: {self.profile!r} (dozwolone: {', '.join(PROFILES)})")
        for locator in self.id_locators:
            try:
                IdLocator.parse(locator)
            except ConfigValidationError as exc:
                errors.append(exc.message)
        for name in ("app_id_floor", "top_ip_threshold", "zero_millis_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                errors.append(f"{name}: wartość {value} spoza przedziału [0, 1]")
        if self.concurrency_floor < 1:
            errors.append("concurrency_floor musi być >= 1")
        if self.witness_window_ms <= 0:
            errors.append("witness_window musi być dodatnie")
        known = {k.value for k in IssueKind}
        unknown = set(self.disabled_detectors) - known
        if unknown:
            errors.append(f"Nieznane detektory: {sorted(unknown)}")
        return errors

    def locators(self) -> List[IdLocator]:
        return [IdLocator.parse(text) for text in self.id_locators]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QualityConfig":
        """Build from a ``[quality]`` TOML table; unknown keys are rejected."""
        allowed = {"profile", "id_locators", "app_id_floor", "top_ip_threshold", "zero_millis_threshold",
                   "concurrency_floor", "witness_window", "app_open_pattern", "disabled_detectors"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigValidationError(f"Nieznane klucze w sekcji [quality]: {sorted(unknown)}")
        defaults = cls()
        try:
            return cls(
                profile=data.get("profile", defaults.profile) or None,
                id_locators=tuple(data.get("id_locators", defaults.id_locators)),
                app_id_floor=float(data.get("app_id_floor", defaults.app_id_floor)),
                top_ip_threshold=float(data.get("top_ip_threshold", defaults.top_ip_threshold)),
                zero_millis_threshold=float(data.get("zero_millis_threshold", defaults.zero_millis_threshold)),
                concurrency_floor=int(data.get("concurrency_floor", defaults.concurrency_floor)),
                witness_window_ms=parse_duration(data["witness_window"], "witness_window")
                if "witness_window" in data else defaults.witness_window_ms,
                app_open_pattern=str(data.get("app_open_pattern", defaults.app_open_pattern)),
                disabled_detectors=frozenset(data.get("disabled_detectors", ())),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigValidationError(f"Nieprawidłowa sekcja [quality]: {exc}")


@dataclass(frozen=True)
class Evidence:
    lines: Tuple[str, ...] = ()
    metrics: Dict[str, Any] = field(default_factory=dict)
    notes: Tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not (self.lines or self.metrics or self.notes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lines": list(self.lines),
            "metrics": {k: _round(v) for k, v in self.metrics.items()},
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class QualityIssue:
    kind: IssueKind
    severity: Severity
    evidence: Evidence
    mitigations: Tuple[str, ...] = ()

    @property
    def mitigation(self) -> str:
        return "; ".join(self.mitigations)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "severity": self.severity.value,
            "evidence": self.evidence.to_dict(),
            "mitigation": list(self.mitigations),
        }


@dataclass(frozen=True)
class QualityReport:
    corpus_id: str
    spec: Optional[LogFormatSpec]
    issues: Tuple[QualityIssue, ...]
    summary_metrics: Dict[str, Any]

    @property
    def kinds(self) -> List[IssueKind]:
        return [i.kind for i in self.issues]

    @property
    def critical_issues(self) -> List[QualityIssue]:
        return [i for i in self.issues if i.severity is Severity.CRITICAL]

    def to_dict(self) -> Dict[str, Any]:
        spec = None
        if self.spec is not None:
            spec = {
                "fields": [d.name for d in self.spec.field_layout if d.literal is None],
                "quoted": [d.name for d in self.spec.field_layout if d.quoted],
                "timestamp_granularity": self.spec.timestamp_granularity.value,
            }
        return {
            "corpus_id": self.corpus_id,
            "spec": spec,
            "issues": [i.to_dict() for i in self.issues],
            "summary_metrics": {k: _round(v) for k, v in self.summary_metrics.items()},
        }

    def to_json(self) -> str:
        """Byte-stable serialization."""
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def _round(value: Any) -> Any:
    return round(value, 6) if isinstance(value, float) else value


def _line_ref(source_id: str, line_number: int) -> str:
    return f"{source_id}:{line_number}"


def _issue(kind: IssueKind, severity: Severity, evidence: Evidence) -> QualityIssue:
    return QualityIssue(kind, severity, evidence, MITIGATIONS[kind])


# === METRICS ===

def parse_error_rate(entries: Sequence[LogEntry], diagnostics: Sequence[ParseDiagnostic]) -> float:
    total = len(entries) + len(diagnostics)
    return len(diagnostics) / total if total else 0.0


def duplicate_timestamp_fraction(entries: Sequence[LogEntry]) -> float:
    """Fraction of adjacent pairs sharing the same epoch_millis."""
    if len(entries) < 2:
        return 0.0
    equal = sum(1 for a, b in zip(entries, entries[1:]) if a.timestamp.epoch_millis == b.timestamp.epoch_millis)
    return equal / (len(entries) - 1)


def zero_millis_fraction(entries: Sequence[LogEntry]) -> float:
    if not entries:
        return 0.0
    return sum(1 for e in entries if e.timestamp.epoch_millis % 1000 == 0) / len(entries)


def top_ip_share(entries: Sequence[LogEntry]) -> Tuple[float, Optional[str], int]:
    """(share of the most frequent client_ip over all entries, that ip, distinct ip count)."""
    counts = Counter(e.client_ip for e in entries if e.client_ip is not None)
    if not entries or not counts:
        return 0.0, None, 0
    ip, top = counts.most_common(1)[0]
    return top / len(entries), ip, len(counts)


def app_id_coverage(entries: Sequence[LogEntry], locators: Sequence[IdLocator]) -> float:
    if not entries:
        return 0.0
    covered = sum(1 for e in entries if any(loc.locate(e) for loc in locators))
    return covered / len(entries)


def referer_presence_rate(entries: Sequence[LogEntry]) -> float:
    if not entries:
        return 0.0
    return sum(1 for e in entries if e.referer is not None) / len(entries)


# === DETECTORS ===

def detect_separator_in_field(diagnostics: Sequence[ParseDiagnostic], entries: Sequence[LogEntry],
                              spec: Optional[LogFormatSpec] = None) -> Optional[QualityIssue]:
    ambiguous = [d for d in diagnostics if d.kind is DiagnosticKind.AMBIGUOUS_SPLIT]
    rate = parse_error_rate(entries, diagnostics)

    recovered: List[str] = []
    recovered_count = 0
    if spec is not None:
        bare = [name for name in spec.bare_free_text_fields() if name != "request"]
        for e in entries:
            if any(_has_delimiter(getattr(e, name)) for name in bare):
                recovered_count += 1
                if len(recovered) < MAX_EXAMPLE_LINES:
                    recovered.append(_line_ref(e.source_id, e.line_number))

    if not ((rate > 0 and ambiguous) or recovered_count):
        return None

    evidence = Evidence(
        lines=tuple(_line_ref(d.source_id, d.line_number) for d in ambiguous) + tuple(recovered),
        metrics={
            "parse_error_rate": rate,
            "ambiguous_split_count": len(ambiguous),
            "recovered_with_delimiters": recovered_count,
        },
    )
    severity = Severity.CRITICAL if ambiguous else Severity.WARNING
    return _issue(IssueKind.SEPARATOR_IN_FIELD, severity, evidence)


def _has_delimiter(value: Optional[str]) -> bool:
    return value is not None and any(ch in value for ch in DELIMITER_CHARS)


def detect_insufficient_fields(spec: LogFormatSpec, analysis_profile: Optional[str]) -> Optional[QualityIssue]:
    if analysis_profile is None:
        return None
    profile = PROFILES.get(analysis_profile)
    if profile is None:
        raise ConfigValidationError(f"Nieznany profil analizy: {analysis_profile!r}")

    present = set(spec.field_names())
    missing_required = [f for f in profile.required if f not in present]
    missing_recommended = [f for f in profile.recommended if f not in present]
    if not missing_required and not missing_recommended:
        return None

    notes = [f"{name} missing (required by {profile.name})" for name in missing_required]
    notes += [f"{name} missing (recommended for {profile.name})" for name in missing_recommended]
    evidence = Evidence(
        metrics={"missing_required": missing_required, "missing_recommended": missing_recommended},
        notes=tuple(notes),
    )
    severity = Severity.CRITICAL if missing_required else Severity.WARNING
    return _issue(IssueKind.INSUFFICIENT_FIELDS, severity, evidence)


def detect_missing_app_identifier(entries: Sequence[LogEntry], id_locators: Sequence[IdLocator],
                                  floor: float = 0.95) -> Optional[QualityIssue]:
    if not entries:
        return None
    coverage = app_id_coverage(entries, id_locators)
    if coverage >= floor:
        return None

    examples = []
    for e in entries:
        if not any(loc.locate(e) for loc in id_locators):
            examples.append(_line_ref(e.source_id, e.line_number))
            if len(examples) >= MAX_EXAMPLE_LINES:
                break
    evidence = Evidence(
        lines=tuple(examples),
        metrics={"app_id_coverage": coverage, "floor": floor},
        notes=("no identifier locators configured",) if not id_locators else (),
    )
    severity = Severity.CRITICAL if coverage == 0.0 else Severity.WARNING
    return _issue(IssueKind.MISSING_APP_IDENTIFIER, severity, evidence)


def find_concurrency_witness(entries: Sequence[LogEntry], ip: str, window_ms: int, floor: int,
                             app_open_pattern: str = DEFAULT_APP_OPEN_PATTERN) -> Optional[Tuple[List[LogEntry], List[str]]]:
    """First window under ``ip`` in which more than ``floor`` distinct applications are active."""
    pattern = compile_app_pattern(app_open_pattern)
    ordered = sorted((e for e in entries if e.client_ip == ip), key=lambda e: e.timestamp.epoch_millis)
    window: deque = deque()
    apps: Counter = Counter()
    for e in ordered:
        app = detect_app_open(e, pattern) or referer_app(e.referer)
        if app is None:
            continue
        window.append((e, app))
        apps[app] += 1
        while e.timestamp.epoch_millis - window[0][0].timestamp.epoch_millis > window_ms:
            _, old = window.popleft()
            apps[old] -= 1
            if not apps[old]:
                del apps[old]
        if len(apps) > floor:
            return [w for w, _ in window], sorted(apps)
    return None


def detect_hidden_client_ip(entries: Sequence[LogEntry], spec: Optional[LogFormatSpec] = None,
                            threshold: float = 0.9, concurrency_floor: int = 2,
                            window_ms: int = 30 * 60_000,
                            app_open_pattern: str = DEFAULT_APP_OPEN_PATTERN) -> Optional[QualityIssue]:
    share, ip, distinct = top_ip_share(entries)
    not_logged = spec is not None and not spec.has_client_ip
    if not_logged or (entries and ip is None):
        evidence = Evidence(
            metrics={"top_ip_share": share, "distinct_ip_count": distinct},
            notes=("client_ip is not logged" if not_logged else "every entry lacks a client_ip",),
        )
        return _issue(IssueKind.HIDDEN_CLIENT_IP, Severity.CRITICAL, evidence)

    if not entries or share <= threshold:
        return None

    lines: Tuple[str, ...] = ()
    notes = [f"{ip} accounts for {share:.1%} of entries"]
    witness = find_concurrency_witness(entries, ip, window_ms, concurrency_floor, app_open_pattern)
    if witness is not None:
        window, apps = witness
        lines = tuple(_line_ref(e.source_id, e.line_number) for e in window[:MAX_EXAMPLE_LINES])
        notes.append(
            f"interpretation: {len(apps)} applications ({', '.join(apps)}) active under one address "
            f"within {window_ms // 1000}s, consistent with a shared proxy"
        )
    evidence = Evidence(
        lines=lines,
        metrics={"top_ip_share": share, "distinct_ip_count": distinct, "threshold": threshold},
        notes=tuple(notes),
    )
    return _issue(IssueKind.HIDDEN_CLIENT_IP, Severity.WARNING, evidence)


def detect_coarse_timestamp(entries: Sequence[LogEntry], spec: Optional[LogFormatSpec] = None,
                            zero_threshold: float = 0.99) -> Optional[QualityIssue]:
    declared_second = spec is not None and spec.timestamp_granularity is Granularity.SECOND
    zeros = zero_millis_fraction(entries)
    if not declared_second and not (entries and zeros > zero_threshold):
        return None

    duplicates = duplicate_timestamp_fraction(entries)
    notes = ["format declares second granularity"] if declared_second else []
    if zeros > zero_threshold:
        notes.append(f"{zeros:.1%} of timestamps have zero milliseconds")
    evidence = Evidence(
        metrics={"duplicate_timestamp_fraction": duplicates, "zero_millis_fraction": zeros},
        notes=tuple(notes),
    )
    return _issue(IssueKind.COARSE_TIMESTAMP, Severity.WARNING, evidence)


# === REPORT ===

def summary_metrics(entries: Sequence[LogEntry], diagnostics: Sequence[ParseDiagnostic],
                    config: QualityConfig) -> Dict[str, Any]:
    share, _, distinct = top_ip_share(entries)
    return {
        "duplicate_timestamp_fraction": duplicate_timestamp_fraction(entries),
        "parse_error_rate": parse_error_rate(entries, diagnostics),
        "top_ip_share": share,
        "app_id_coverage": app_id_coverage(entries, config.locators()),
        "referer_presence_rate": referer_presence_rate(entries),
        "entry_count": len(entries),
        "diagnostic_count": len(diagnostics),
        "distinct_ip_count": distinct,
    }


def build_report(entries: Sequence[LogEntry], diagnostics: Sequence[ParseDiagnostic],
                 spec: LogFormatSpec, config: Optional[QualityConfig] = None,
                 corpus_id: str = "corpus") -> QualityReport:
    """Run every enabled detector; issues follow the fixed detector order."""
    config = config or QualityConfig()
    errors = config.validation_errors()
    if errors:
        raise ConfigValidationError("Nieprawidłowa konfiguracja jakości", validation_errors=errors)

    detectors = {
        IssueKind.SEPARATOR_IN_FIELD: lambda: detect_separator_in_field(diagnostics, entries, spec),
        IssueKind.INSUFFICIENT_FIELDS: lambda: detect_insufficient_fields(spec, config.profile),
        IssueKind.MISSING_APP_IDENTIFIER: lambda: detect_missing_app_identifier(
            entries, config.locators(), config.app_id_floor),
        IssueKind.HIDDEN_CLIENT_IP: lambda: detect_hidden_client_ip(
            entries, spec, config.top_ip_threshold, config.concurrency_floor,
            config.witness_window_ms, config.app_open_pattern),
        IssueKind.COARSE_TIMESTAMP: lambda: detect_coarse_timestamp(entries, spec, config.zero_millis_threshold),
    }

    issues = []
    for kind in ISSUE_ORDER:
        if kind.value in config.disabled_detectors:
            continue
        issue = detectors[kind]()
        if issue is not None:
            issues.append(issue)

    report = QualityReport(corpus_id, spec, tuple(issues), summary_metrics(entries, diagnostics, config))
    logger.debug(f"Raport jakości {corpus_id}: {[i.kind.value for i in issues]}")
    return report


def render_text(report: QualityReport) -> str:
    """Two-column issue / mitigation table followed by severity and evidence."""
    lines = [f"Corpus: {report.corpus_id}", ""]
    if not report.issues:
        lines.append("No quality issues detected.")
    else:
        width = max(len("WAPI usage log issue"), *(len(i.kind.value) for i in report.issues))
        lines.append(f"{'WAPI usage log issue'.ljust(width)} | Mitigation")
        lines.append(f"{'-' * width}-+-{'-' * 40}")
        for issue in report.issues:
            for n, text in enumerate(issue.mitigations):
                label = issue.kind.value if n == 0 else ""
                lines.append(f"{label.ljust(width)} | {text}")
        lines.append("")
        for issue in report.issues:
            lines.append(f"[{issue.severity.value}] {issue.kind.value}")
            for key, value in sorted(issue.evidence.metrics.items()):
                lines.append(f"    {key}: {_round(value)}")
            for note in issue.evidence.notes:
                lines.append(f"    {note}")
            if issue.evidence.lines:
                lines.append(f"    lines: {', '.join(issue.evidence.lines[:MAX_EXAMPLE_LINES])}")

    lines.append("")
    lines.append("Summary metrics:")
    for key, value in sorted(report.summary_metrics.items()):
        lines.append(f"    {key}: {_round(value)}")
    return "\n".join(lines) + "\n"


__all__ = [
    "IssueKind", "Severity", "MITIGATIONS", "PROFILES", "AnalysisProfile", "IdLocator",
    "QualityConfig", "Evidence", "QualityIssue", "QualityReport",
    "parse_error_rate", "duplicate_timestamp_fraction", "top_ip_share", "app_id_coverage",
    "referer_presence_rate", "find_concurrency_witness",
    "detect_separator_in_field", "detect_insufficient_fields", "detect_missing_app_identifier",
    "detect_hidden_client_ip", "detect_coarse_timestamp", "build_report", "render_text",
]
