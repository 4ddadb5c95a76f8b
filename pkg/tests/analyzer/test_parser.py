import random
import string
import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT))

from WapiLogAnalyzer.core.exceptions import FormatConfigError, LogStreamError
from WapiLogAnalyzer.log_model import Granularity, LogEntry, LogFormatSpec, RequestLine, Timestamp
from WapiLogAnalyzer.parser import (
    COMBINED_FORMAT,
    DiagnosticKind,
    ErrorPolicy,
    ParseDiagnostic,
    compile_format_string,
    decode_component,
    encode_component,
    format_string_for_spec,
    format_timestamp,
    iter_parse_stream,
    parse_file,
    parse_line,
    parse_stream,
    parse_timestamp,
    spec_from_format_string,
    split_request,
)

BARE_FORMAT = "%h %l %u %t %r %>s %b %{Referer}i %{User-Agent}i"
EXAMPLE_LINE = (
    "127.0.0.1 - - [24/Jun/2019:20:22:26 +0000] GET /api/29/system/info HTTP/1.0 200 891 "
    "https://.../dhis-web-dashboard/index.html Mozilla/5.0 (Windows NT 6.1; Win64; x64) "
    "AppleWebKit/537.36 (KHTML, like Gecko) Chrome/75.0.3770.100 Safari/537.36"
)
EXAMPLE_MILLIS = int(datetime(2019, 6, 24, 20, 22, 26, tzinfo=timezone.utc).timestamp()) * 1000


def combined_line(path="/api/29/system/info", ts="24/Jun/2019:20:22:26 +0000", status="200", size="12"):
    return f'10.1.1.1 - - [{ts}] "GET {path} HTTP/1.1" {status} {size} "-" "Mozilla/5.0"'


# === FORMAT SPECS ===

def test_combined_format_spec():
    spec = spec_from_format_string(COMBINED_FORMAT)
    assert spec.has_client_ip and spec.has_referer and spec.has_user_agent
    assert spec.has_status and spec.has_size
    assert not spec.has_duration
    assert spec.timestamp_granularity is Granularity.SECOND
    assert spec.is_fully_quoted
    assert spec.consistency_errors() == []


def test_format_without_referer():
    spec = spec_from_format_string('%h %l %u %{ms}t "%r" %>s %b %D "%{User-Agent}i"')
    assert spec.has_referer is False
    assert spec.has_duration is True
    assert spec.timestamp_granularity is Granularity.MILLISECOND


def test_format_without_client_ip_second_granularity():
    spec = spec_from_format_string('%l %u %t "%r" %>s %b %D "%{Referer}i" "%{User-Agent}i"')
    assert spec.has_client_ip is False
    assert spec.timestamp_granularity is Granularity.SECOND


def test_header_names_are_case_insensitive():
    spec = spec_from_format_string('%t "%r" "%{REFERER}i"')
    assert spec.has_referer


@pytest.mark.parametrize("text", [
    '%h %h %t "%r"',
    '%h %t "%r" %Z',
    '%h %t',
    '%t "%r" "%>s"',
    '',
])
def test_bad_format_strings_raise(text):
    with pytest.raises(FormatConfigError):
        spec_from_format_string(text)


def test_literal_directive_is_kept():
    directives = compile_format_string('%h %t "%r" via-proxy %>s')
    assert [d.kind for d in directives] == ["client_ip", "timestamp", "request", "literal", "status"]
    spec = spec_from_format_string('%h %t "%r" via-proxy %>s')
    e = parse_line('1.2.3.4 [24/Jun/2019:20:22:26 +0000] "GET / HTTP/1.1" via-proxy 204', spec)
    assert isinstance(e, LogEntry)
    assert e.status == 204


def test_format_string_for_spec_inverse():
    for quoted in (True, False):
        for granularity in Granularity:
            spec = LogFormatSpec.from_flags(has_duration=True, quoted=quoted, timestamp_granularity=granularity)
            assert spec_from_format_string(format_string_for_spec(spec)) == spec


# === TIMESTAMPS ===

def test_parse_timestamp_variants():
    ts = parse_timestamp("24/Jun/2019:20:22:26 +0000")
    assert ts.epoch_millis == EXAMPLE_MILLIS
    assert ts.declared_granularity is Granularity.SECOND

    ts = parse_timestamp("24/Jun/2019:20:22:26.123 +0000")
    assert ts.epoch_millis == EXAMPLE_MILLIS + 123
    assert ts.declared_granularity is Granularity.MILLISECOND

    assert parse_timestamp("24/Jun/2019:22:22:26 +0200").epoch_millis == EXAMPLE_MILLIS
    assert parse_timestamp("24/Jun/2019:15:22:26 -0500").epoch_millis == EXAMPLE_MILLIS


@pytest.mark.parametrize("text", [
    "24/Foo/2019:20:22:26 +0000",
    "31/Feb/2019:20:22:26 +0000",
    "24/Jun/2019 20:22:26 +0000",
    "24/Jun/2019:20:22:26",
    "2019-06-24T20:22:26Z",
])
def test_parse_timestamp_rejects(text):
    assert parse_timestamp(text) is None


def test_format_timestamp_round_trip():
    rng = random.Random(3)
    for _ in range(200):
        millis = rng.randint(0, 4_000_000_000_000)
        ts = parse_timestamp(format_timestamp(Timestamp(millis), True))
        assert ts.epoch_millis == millis


# === REQUEST LINE ===

def test_split_request_with_query():
    req = split_request(
        "GET /maps/api/distancematrix/json?origins=MNAC&destinations=MACBA&mode=driving&key=API_IDENTIFIER HTTP/1.1"
    )
    assert req == RequestLine(
        "GET", "/maps/api/distancematrix/json",
        (("origins", "MNAC"), ("destinations", "MACBA"), ("mode", "driving"), ("key", "API_IDENTIFIER")),
        "HTTP/1.1",
    )


def test_split_request_root():
    assert split_request("GET / HTTP/1.0") == RequestLine("GET", "/", (), "HTTP/1.0")


def test_split_request_without_protocol():
    req = split_request("GET /api/me")
    assert req.path == "/api/me"
    assert req.protocol == ""


def test_split_request_percent_decoding():
    req = split_request("GET /api/x?name=a%20b&k%3D=%26 HTTP/1.1")
    assert req.query == (("name", "a b"), ("k=", "&"))


@pytest.mark.parametrize("field", ["GET", "get / HTTP/1.1", "GET api/me HTTP/1.1", ""])
def test_split_request_malformed(field):
    result = split_request(field)
    assert isinstance(result, ParseDiagnostic)
    assert result.kind is DiagnosticKind.MALFORMED_LINE


def test_encode_decode_round_trip():
    rng = random.Random(5)
    alphabet = string.printable + "ąęółżźćńś€"
    for _ in range(1000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 20)))
        assert decode_component(encode_component(text)) == text


def test_decode_keeps_undecodable_token():
    assert decode_component("%ff%fe") == "%ff%fe"


# === LINES ===

def test_example_line_bare_format():
    spec = spec_from_format_string(BARE_FORMAT)
    e = parse_line(EXAMPLE_LINE, spec)

    assert isinstance(e, LogEntry)
    assert e.client_ip == "127.0.0.1"
    assert e.timestamp.epoch_millis == EXAMPLE_MILLIS
    assert e.request == RequestLine("GET", "/api/29/system/info", (), "HTTP/1.0")
    assert e.status == 200
    assert e.object_size == 891
    assert e.referer == "https://.../dhis-web-dashboard/index.html"
    assert e.user_agent.startswith("Mozilla/5.0 (Windows NT 6.1; Win64; x64)")
    assert e.user_agent.endswith("Safari/537.36")
    assert e.line_number == 1


def test_all_dash_optionals():
    spec = spec_from_format_string(COMBINED_FORMAT)
    e = parse_line('- - - [24/Jun/2019:20:22:26 +0000] "GET / HTTP/1.1" 200 0 "-" "-"', spec)
    assert isinstance(e, LogEntry)
    assert e.client_ip is None
    assert e.referer is None
    assert e.user_agent is None
    assert e.object_size == 0


def test_quoted_fields_keep_problem_characters():
    spec = spec_from_format_string(COMBINED_FORMAT)
    ua = 'okhttp/3.12.1 (client \\"sync\\", v2; x=1)'
    line = f'1.2.3.4 - - [24/Jun/2019:20:22:26 +0000] "GET /api/me HTTP/1.1" 200 5 "https://h/a b" "{ua}"'
    e = parse_line(line, spec)
    assert e.user_agent == 'okhttp/3.12.1 (client "sync", v2; x=1)'
    assert e.referer == "https://h/a b"


def test_bare_user_agent_is_trimmed():
    spec = spec_from_format_string(BARE_FORMAT)
    e = parse_line(EXAMPLE_LINE + "   \r\n", spec)
    assert e.user_agent == e.user_agent.strip()


def test_bare_request_with_space_is_ambiguous():
    spec = spec_from_format_string(BARE_FORMAT)
    line = EXAMPLE_LINE.replace("/api/29/system/info", "/api/29/system info")
    d = parse_line(line, spec)
    assert isinstance(d, ParseDiagnostic)
    assert d.kind is DiagnosticKind.AMBIGUOUS_SPLIT


def test_bad_timestamp_and_status():
    spec = spec_from_format_string(COMBINED_FORMAT)
    d = parse_line(combined_line(ts="24/Jun/2019:25:22:26 +0000"), spec)
    assert d.kind is DiagnosticKind.BAD_TIMESTAMP
    d = parse_line(combined_line(status="OK"), spec)
    assert d.kind is DiagnosticKind.BAD_STATUS
    d = parse_line(combined_line(status="999"), spec)
    assert d.kind is DiagnosticKind.BAD_STATUS


def test_malformed_lines():
    spec = spec_from_format_string(COMBINED_FORMAT)
    for line in ("", "   ", '1.2.3.4 - - [24/Jun/2019:20:22:26 +0000] "GET / HTTP/1.1', combined_line() + " extra"):
        d = parse_line(line, spec, source_id="x.log", file_order=4)
        assert isinstance(d, ParseDiagnostic)
        assert d.kind is DiagnosticKind.MALFORMED_LINE
        assert d.line_number == 5
        assert d.source_id == "x.log"


NON_ASCII_NUMBERS = ["2²00", "²", "¹²", "٣٠٠", "２００", "１"]


@pytest.mark.parametrize("text", NON_ASCII_NUMBERS)
def test_non_ascii_status_is_a_diagnostic(text):
    d = parse_line(combined_line(status=text), spec_from_format_string(COMBINED_FORMAT))
    assert isinstance(d, ParseDiagnostic)
    assert d.kind is DiagnosticKind.BAD_STATUS


@pytest.mark.parametrize("text", NON_ASCII_NUMBERS)
def test_non_ascii_size_and_duration_are_diagnostics(text):
    d = parse_line(combined_line(size=text), spec_from_format_string(COMBINED_FORMAT))
    assert isinstance(d, ParseDiagnostic)
    assert d.kind is DiagnosticKind.MALFORMED_LINE

    spec = spec_from_format_string('%h %t "%r" %>s %b %D')
    d = parse_line(f'1.2.3.4 [24/Jun/2019:20:22:26 +0000] "GET / HTTP/1.1" 200 12 {text}', spec)
    assert isinstance(d, ParseDiagnostic)
    assert d.kind is DiagnosticKind.MALFORMED_LINE


def test_non_ascii_timestamp_digits_are_rejected():
    spec = spec_from_format_string(COMBINED_FORMAT)
    d = parse_line(combined_line(ts="٢٤/Jun/2019:20:22:26 +0000"), spec)
    assert d.kind is DiagnosticKind.BAD_TIMESTAMP


def test_non_ascii_numbers_keep_stream_counts():
    spec = spec_from_format_string(COMBINED_FORMAT)
    lines = [combined_line()]
    for text in NON_ASCII_NUMBERS:
        lines += [combined_line(status=text), combined_line(size=text), combined_line()]
    entries, diagnostics = parse_stream(lines, spec)
    assert len(entries) + len(diagnostics) == len(lines)
    assert len(diagnostics) == 2 * len(NON_ASCII_NUMBERS)


def test_missing_status_defaults_to_200():
    spec = spec_from_format_string('%h %t "%r"')
    e = parse_line('1.2.3.4 [24/Jun/2019:20:22:26 +0000] "POST /api/events HTTP/1.1"', spec)
    assert e.status == 200
    assert e.object_size is None


# === STREAMS ===

def test_parse_stream_good_lines():
    spec = spec_from_format_string(COMBINED_FORMAT)
    entries, diagnostics = parse_stream([combined_line()] * 3, spec)
    assert len(entries) == 3
    assert diagnostics == []
    assert [e.file_order for e in entries] == [0, 1, 2]


def test_parse_stream_skip_and_record():
    spec = spec_from_format_string(COMBINED_FORMAT)
    lines = [combined_line(), combined_line(), "garbage", combined_line()]
    entries, diagnostics = parse_stream(lines, spec, "skip", source_id="a.log")
    assert len(entries) == 3
    assert len(diagnostics) == 1
    assert diagnostics[0].line_number == 3
    assert diagnostics[0].raw_line == "garbage"
    assert [e.file_order for e in entries] == [0, 1, 3]


def test_parse_stream_counts_add_up():
    rng = random.Random(9)
    spec = spec_from_format_string(COMBINED_FORMAT)
    lines = [rng.choice([combined_line(), "", "nonsense line", combined_line(status="x")]) for _ in range(500)]
    entries, diagnostics = parse_stream(lines, spec)
    assert len(entries) + len(diagnostics) == len(lines)
    assert len({d.line_number for d in diagnostics}) == len(diagnostics)


def test_parse_stream_halt():
    spec = spec_from_format_string(COMBINED_FORMAT)
    lines = [combined_line(), "garbage", combined_line()]
    entries, diagnostics = parse_stream(lines, spec, ErrorPolicy.HALT)
    assert len(entries) == 1
    assert len(diagnostics) == 1


def test_error_policy_parse():
    assert ErrorPolicy.parse("skip") is ErrorPolicy.SKIP_AND_RECORD
    assert ErrorPolicy.parse("halt") is ErrorPolicy.HALT
    with pytest.raises(FormatConfigError):
        ErrorPolicy.parse("ignore")


def test_stream_read_failure_is_not_a_diagnostic():
    spec = spec_from_format_string(COMBINED_FORMAT)

    def broken():
        yield combined_line()
        raise OSError("disk gone")

    with pytest.raises(LogStreamError):
        list(iter_parse_stream(broken(), spec))


def test_parse_file(tmp_path):
    spec = spec_from_format_string(COMBINED_FORMAT)
    path = tmp_path / "access.log"
    path.write_text("\n".join([combined_line(), "bad", combined_line()]) + "\n", encoding="utf-8")

    entries, diagnostics = parse_file(path, spec)
    assert [e.source_id for e in entries] == ["access.log", "access.log"]
    assert diagnostics[0].line_number == 2

    with pytest.raises(LogStreamError):
        parse_file(tmp_path / "missing.log", spec)


def test_diagnostic_record_round_trip():
    d = ParseDiagnostic("a.log", 3, DiagnosticKind.BAD_STATUS, "raw", "invalid status")
    assert ParseDiagnostic.from_record(d.to_record()) == d
