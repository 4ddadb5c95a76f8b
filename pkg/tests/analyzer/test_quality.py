import itertools
import random
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT))

from WapiLogAnalyzer.core.exceptions import ConfigValidationError
from WapiLogAnalyzer.log_model import Granularity, LogEntry, LogFormatSpec, RequestLine, Timestamp
from WapiLogAnalyzer.parser import DiagnosticKind, ParseDiagnostic, parse_stream
from WapiLogAnalyzer.quality import (
    MITIGATIONS,
    PROFILES,
    IdLocator,
    IssueKind,
    QualityConfig,
    Severity,
    app_id_coverage,
    build_report,
    detect_coarse_timestamp,
    detect_hidden_client_ip,
    detect_insufficient_fields,
    detect_missing_app_identifier,
    detect_separator_in_field,
    duplicate_timestamp_fraction,
    render_text,
)
from WapiLogAnalyzer.synth import generate, preset

HOST = "https://dhis2.example.org"
T0 = 1_608_249_600_000
FRACTION_METRICS = ("duplicate_timestamp_fraction", "parse_error_rate", "top_ip_share",
                    "app_id_coverage", "referer_presence_rate")


def entry(offset_ms, path="/api/29/me", ip="10.0.0.1", referer=None, query=(), file_order=0,
          granularity=Granularity.MILLISECOND, user_agent="Mozilla/5.0"):
    return LogEntry(Timestamp(T0 + offset_ms, granularity), RequestLine("GET", path, tuple(query), "HTTP/1.1"),
                    200, source_id="q.log", file_order=file_order, client_ip=ip, referer=referer,
                    user_agent=user_agent)


def small(name, **overrides):
    return generate(preset(name, user_count=12, visits_per_user=2, **overrides))


def report_for(corpus, config=None):
    entries, diagnostics = parse_stream(corpus.lines, corpus.spec, source_id=corpus.source_id)
    return build_report(entries, diagnostics, corpus.spec, config)


def assert_well_formed(report):
    for issue in report.issues:
        assert not issue.evidence.is_empty()
        assert issue.mitigations == MITIGATIONS[issue.kind]
    for name in FRACTION_METRICS:
        assert 0.0 <= report.summary_metrics[name] <= 1.0


# === PROFILES FROM THE GENERATOR ===

def test_golden_corpus_has_no_issues():
    report = report_for(small("golden"))
    assert report.issues == ()
    assert report.summary_metrics["app_id_coverage"] == 1.0
    assert report.summary_metrics["parse_error_rate"] == 0.0
    assert_well_formed(report)


def test_msf_profile():
    report = report_for(small("msf"))
    assert report.kinds == [IssueKind.MISSING_APP_IDENTIFIER, IssueKind.HIDDEN_CLIENT_IP, IssueKind.COARSE_TIMESTAMP]
    severities = {i.kind: i.severity for i in report.issues}
    assert severities[IssueKind.HIDDEN_CLIENT_IP] is Severity.CRITICAL
    assert severities[IssueKind.MISSING_APP_IDENTIFIER] is Severity.CRITICAL
    coarse = report.issues[2]
    assert coarse.evidence.metrics["duplicate_timestamp_fraction"] >= 0.0
    assert_well_formed(report)


def test_widp_profile():
    report = report_for(small("widp"))
    assert report.kinds == [IssueKind.INSUFFICIENT_FIELDS, IssueKind.MISSING_APP_IDENTIFIER]
    insufficient = report.issues[0]
    assert insufficient.severity is Severity.CRITICAL
    assert insufficient.evidence.metrics["missing_required"] == ["referer"]
    assert_well_formed(report)


# === SEPARATOR IN FIELD ===

def test_separator_absent_on_quoted_corpus():
    corpus = small("golden")
    assert detect_separator_in_field([], list(corpus.entries), corpus.spec) is None


def test_separator_on_bare_user_agents():
    corpus = small("widp", quoted_fields=False)
    issue = detect_separator_in_field([], list(corpus.entries), corpus.spec)
    assert issue is not None
    assert issue.severity is Severity.WARNING
    assert issue.evidence.metrics["recovered_with_delimiters"] == len(corpus.entries)
    assert "double-quote the fields that might have special characters" in issue.mitigations


def test_separator_evidence_matches_injected_lines():
    corpus = small("widp", quoted_fields=False, ambiguous_rate=0.05, seed=3)
    assert corpus.ambiguous_lines
    entries, diagnostics = parse_stream(corpus.lines, corpus.spec, source_id=corpus.source_id)
    issue = detect_separator_in_field(diagnostics, entries, corpus.spec)

    assert issue.severity is Severity.CRITICAL
    ambiguous = {d.line_number for d in diagnostics if d.kind is DiagnosticKind.AMBIGUOUS_SPLIT}
    assert ambiguous == set(corpus.ambiguous_lines)
    assert issue.evidence.metrics["ambiguous_split_count"] == len(corpus.ambiguous_lines)
    reported = {ref for ref in issue.evidence.lines[:len(ambiguous)]}
    assert reported == {f"{corpus.source_id}:{n}" for n in corpus.ambiguous_lines}


# === INSUFFICIENT FIELDS ===

def test_insufficient_fields_exhaustive():
    flags = ("has_client_ip", "has_duration", "has_referer", "has_user_agent", "has_size")
    for profile in PROFILES.values():
        for values in itertools.product((False, True), repeat=len(flags)):
            spec = LogFormatSpec.from_flags(**dict(zip(flags, values)))
            present = set(spec.field_names())
            missing_required = [f for f in profile.required if f not in present]
            missing_recommended = [f for f in profile.recommended if f not in present]

            issue = detect_insufficient_fields(spec, profile.name)
            if not missing_required and not missing_recommended:
                assert issue is None
                continue
            assert issue.evidence.metrics["missing_required"] == missing_required
            assert issue.evidence.metrics["missing_recommended"] == missing_recommended
            expected = Severity.CRITICAL if missing_required else Severity.WARNING
            assert issue.severity is expected


def test_insufficient_fields_without_profile():
    assert detect_insufficient_fields(LogFormatSpec.from_flags(has_referer=False), None) is None
    with pytest.raises(ConfigValidationError):
        detect_insufficient_fields(LogFormatSpec.from_flags(), "unknown-profile")


# === APPLICATION IDENTIFIERS ===

def test_identifier_present_in_query():
    entries = [entry(i, "/maps/api/distancematrix/json", query=[("origins", "MNAC"), ("key", "API_IDENTIFIER")],
                     file_order=i) for i in range(5)]
    locators = [IdLocator.parse("query:key")]
    assert app_id_coverage(entries, locators) == 1.0
    assert detect_missing_app_identifier(entries, locators) is None


def test_identifier_absent_is_critical():
    entries = [entry(i, file_order=i) for i in range(5)]
    issue = detect_missing_app_identifier(entries, [IdLocator.parse("query:key")])
    assert issue.severity is Severity.CRITICAL
    assert issue.evidence.metrics["app_id_coverage"] == 0.0
    assert "Provide different application identifiers for development phase" in issue.mitigations


def test_identifier_path_locator():
    locator = IdLocator.parse(r"path:^/apps/([A-Z0-9-]+)/")
    assert locator.locate(entry(0, "/apps/APP-01/api/me")) == "APP-01"
    assert locator.locate(entry(0, "/api/me")) is None


@pytest.mark.parametrize("text", ["key", "header:x-app", "query:", "path:(["])
def test_identifier_locator_rejects(text):
    with pytest.raises(ConfigValidationError):
        IdLocator.parse(text)


def test_identifier_coverage_matches_generator_bookkeeping():
    corpus = generate(preset("golden", user_count=40, app_id_coverage=0.37, seed=11))
    expected = sum(t.has_app_id for t in corpus.truth) / len(corpus.truth)
    measured = app_id_coverage(list(corpus.entries), [IdLocator.parse("query:key")])
    assert measured == expected
    assert 0.3 < measured < 0.45


# === HIDDEN CLIENT IP ===

def test_hidden_ip_concurrency_witness():
    # five entries, one address, three applications within 69 seconds
    entries = [
        entry(0, "/app1/index.action", file_order=0),
        entry(12_000, referer=f"{HOST}/app1/index.html", file_order=1),
        entry(31_000, "/app2/index.action", file_order=2),
        entry(50_000, referer=f"{HOST}/app2/index.html", file_order=3),
        entry(69_000, referer=f"{HOST}/app3/index.html", file_order=4),
    ]
    issue = detect_hidden_client_ip(entries)
    assert issue.severity is Severity.WARNING
    assert issue.evidence.metrics["top_ip_share"] == 1.0
    assert issue.evidence.lines
    assert any("interpretation" in note for note in issue.evidence.notes)


def test_hidden_ip_absent_for_distinct_addresses():
    entries = [entry(i * 1000, ip=f"172.16.0.{i}", file_order=i) for i in range(50)]
    assert detect_hidden_client_ip(entries) is None


def test_hidden_ip_not_logged_is_critical():
    spec = LogFormatSpec.from_flags(has_client_ip=False)
    issue = detect_hidden_client_ip([entry(0, ip=None)], spec)
    assert issue.severity is Severity.CRITICAL


# === COARSE TIMESTAMP ===

def test_coarse_timestamp_declared_second():
    corpus = small("msf")
    issue = detect_coarse_timestamp(list(corpus.entries), corpus.spec)
    assert issue is not None
    assert issue.evidence.metrics["zero_millis_fraction"] == 1.0


def test_coarse_timestamp_absent_on_distinct_millis():
    entries = [entry(i * 1237 + 1, file_order=i) for i in range(100)]
    assert detect_coarse_timestamp(entries, LogFormatSpec.from_flags()) is None


def test_coarse_timestamp_observed_without_declaration():
    entries = [entry(i * 1000, file_order=i) for i in range(200)]
    assert detect_coarse_timestamp(entries, LogFormatSpec.from_flags()) is not None


def test_duplicate_fraction_matches_truncation_oracle():
    corpus = generate(preset("msf", user_count=30, seed=5))
    seconds = [t.true_epoch_millis // 1000 for t in corpus.truth]
    collisions = sum(1 for a, b in zip(seconds, seconds[1:]) if a == b)
    assert duplicate_timestamp_fraction(list(corpus.entries)) == collisions / (len(seconds) - 1)


# === REPORT ===

DEFECTS = ("bare", "no_referer", "no_app_id", "hidden_ip", "second")
EXPECTED_KIND = {
    "bare": IssueKind.SEPARATOR_IN_FIELD,
    "no_referer": IssueKind.INSUFFICIENT_FIELDS,
    "no_app_id": IssueKind.MISSING_APP_IDENTIFIER,
    "hidden_ip": IssueKind.HIDDEN_CLIENT_IP,
    "second": IssueKind.COARSE_TIMESTAMP,
}


def test_randomized_defect_injection():
    rng = random.Random(2021)
    for trial in range(100):
        injected = {d for d in DEFECTS if rng.random() < 0.5}
        overrides = {"user_count": 8, "visits_per_user": 2, "seed": trial}
        if "bare" in injected:
            overrides["quoted_fields"] = False
        if "no_referer" in injected:
            overrides["referer_logged"] = False
        if "no_app_id" in injected:
            overrides["app_id_coverage"] = 0.0
        if "hidden_ip" in injected:
            if rng.random() < 0.5:
                overrides["client_ip_logged"] = False
            else:
                overrides["proxy_fraction"] = 1.0
        if "second" in injected:
            overrides["timestamp_granularity"] = Granularity.SECOND

        report = report_for(generate(preset("golden", **overrides)))
        assert set(report.kinds) == {EXPECTED_KIND[d] for d in injected}, (trial, injected)
        assert_well_formed(report)


def test_detector_independence():
    corpus = small("msf")
    full = report_for(corpus)
    for kind in IssueKind:
        partial = report_for(corpus, QualityConfig(disabled_detectors=frozenset({kind.value})))
        assert partial.issues == tuple(i for i in full.issues if i.kind is not kind)


def test_adding_defective_entries_keeps_issues():
    corpus = small("golden", app_id_coverage=0.5, seed=9)
    entries = list(corpus.entries)
    before = build_report(entries, [], corpus.spec)
    assert IssueKind.MISSING_APP_IDENTIFIER in before.kinds

    extra = [entry(10 ** 9 + i, file_order=len(entries) + i) for i in range(20)]
    after = build_report(entries + extra, [ParseDiagnostic("q.log", 1, DiagnosticKind.MALFORMED_LINE, "x", "y")],
                         corpus.spec)
    assert set(before.kinds) <= set(after.kinds)


def test_report_is_byte_stable():
    corpus = small("msf")
    assert report_for(corpus).to_json() == report_for(corpus).to_json()


def test_report_text_rendering():
    text = render_text(report_for(small("msf")))
    assert "Log the timestamp in high precision" in text
    assert "hidden_client_ip" in text
    assert "Summary metrics:" in text
    assert "No quality issues detected." in render_text(report_for(small("golden")))


def test_invalid_config_rejected():
    with pytest.raises(ConfigValidationError):
        build_report([], [], LogFormatSpec.from_flags(), QualityConfig(app_id_floor=1.5))
    with pytest.raises(ConfigValidationError):
        QualityConfig.from_dict({"thresholds": {}})
    config = QualityConfig.from_dict({"profile": "user-distinction", "witness_window": "10m"})
    assert config.witness_window_ms == 600_000
    assert config.validation_errors() == []
