import random
import sys
from pathlib import Path
from statistics import fmean

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT))

from WapiLogAnalyzer.log_model import LogEntry, RequestLine, Timestamp
from WapiLogAnalyzer.sessionizer import (
    Heuristic,
    Session,
    SessionizationResult,
    SessionizerConfig,
    sessionize,
)
from WapiLogAnalyzer.stats import (
    CSV_COLUMNS,
    StatsAccumulator,
    compare_heuristics,
    distinct_requests_per_app,
    request_shape,
    session_stats,
    stats_to_dict,
)

T0 = 1_608_249_600_000


def entry(offset_ms, path="/api/29/me", method="GET", query=(), generalized=None, file_order=0, referer=None):
    return LogEntry(Timestamp(T0 + offset_ms), RequestLine(method, path, tuple(query)), 200,
                    source_id="s.log", file_order=file_order, generalized_path=generalized, referer=referer)


def session(sid, offsets, app="App1", **kwargs):
    return Session(sid, tuple(entry(o, file_order=n, **kwargs) for n, o in enumerate(offsets)), app=app)


def test_single_session_arithmetic():
    result = SessionizationResult([session("S1", [0, 30_000, 70_000, 110_000])])
    stats = session_stats(result)
    assert stats.session_count == 1
    assert stats.avg_duration == 110.0
    assert stats.avg_size == 4
    assert stats.display() == "sessions: 1 sesji, średni czas 110 sec, średni rozmiar 4"


def test_min_size_is_strict():
    result = SessionizationResult([session("S1", [0, 1]), session("S2", [0, 1, 2])])
    stats = session_stats(result, min_size=3)
    assert stats.session_count == 0
    assert stats.avg_duration is None
    assert stats.avg_size is None
    assert stats.to_csv_row()["avg_size"] == ""


def test_stats_match_recompute_oracle():
    rng = random.Random(17)
    sessions = []
    for i in range(1000):
        size = rng.randint(1, 12)
        start = rng.randint(0, 10 ** 7)
        offsets = sorted(rng.sample(range(start, start + 3_600_000), size))
        sessions.append(session(f"S{i}", offsets))
    stats = session_stats(SessionizationResult(sessions), min_size=3)

    counted = [s for s in sessions if len(s.entries) > 3]
    assert stats.session_count == len(counted)
    assert stats.avg_size == fmean(len(s.entries) for s in counted)
    expected_duration = fmean((s.entries[-1].epoch_millis - s.entries[0].epoch_millis) / 1000 for s in counted)
    assert abs(stats.avg_duration - expected_duration) < 1e-9

    rng.shuffle(sessions)
    shuffled = session_stats(SessionizationResult(sessions), min_size=3)
    assert shuffled.session_count == stats.session_count
    assert abs(shuffled.avg_duration - stats.avg_duration) < 1e-9


def test_identical_shapes_count_once():
    result = SessionizationResult([session("S1", [0, 1, 2], query=[("fields", "x")])])
    profiles = distinct_requests_per_app(result)
    assert [(p.app, p.distinct_requests) for p in profiles] == [("App1", 1)]
    assert profiles[0].examples == ("GET /api/29/me?fields",)


def test_shape_ignores_query_values_and_order():
    a = entry(0, query=[("pe", "2020"), ("de", "1")])
    b = entry(1, query=[("de", "7"), ("pe", "2019")])
    assert request_shape(a, True) == request_shape(b, True)


def test_generalized_shapes_never_exceed_raw():
    rng = random.Random(23)
    for _ in range(20):
        sessions = []
        for i in range(10):
            entries = []
            for n in range(rng.randint(1, 10)):
                version = rng.choice(["29", "30"])
                item = rng.randint(1, 5)
                entries.append(entry(n, f"/api/{version}/events/{item}", file_order=n,
                                     generalized="/api/{version}/events/{id}"))
            sessions.append(Session(f"S{i}", tuple(entries), app=rng.choice(["App1", "App2", None])))
        result = SessionizationResult(sessions)
        generalized = {p.app: p.distinct_requests for p in distinct_requests_per_app(result, True)}
        raw = {p.app: p for p in distinct_requests_per_app(result, False)}
        assert generalized.keys() == raw.keys()
        for app, count in generalized.items():
            assert count <= raw[app].distinct_requests
            assert raw[app].distinct_requests >= len(raw[app].examples)
            # brute-force set union
            expected = {(e.request.method, e.request.path, ())
                        for s in sessions if s.app == app for e in s.entries}
            assert raw[app].distinct_requests == len(expected)


def test_accumulator_is_order_independent():
    result = sessionize(corpus_with_concurrency(), SessionizerConfig.from_dict({"heuristic": "nav", "delta": "5m"}))
    events = list(result.sessions) + list(result.discarded)
    random.Random(3).shuffle(events)
    accumulator = StatsAccumulator(min_size=1, per_app=True).update(events)
    assert accumulator.stats() == session_stats(result, min_size=1)
    assert accumulator.profiles() == distinct_requests_per_app(result)
    assert accumulator.discarded == len(result.discarded)


def corpus_with_concurrency():
    """A long App1 visit interrupted by a short App2 visit; referers name the application."""
    entries = []

    def add(offset, path, referer=None):
        entries.append(entry(offset, path, referer=referer, file_order=len(entries)))

    host = "https://dhis2.example.org"
    add(0, "/App1/index.action")
    for n in range(5):
        add(10_000 + n * 10_000, f"/api/29/a/{n}", f"{host}/App1/index.html")
    add(55_000, "/App2/index.action")
    add(58_000, "/api/29/b/1", f"{host}/App2/index.html")
    for n in range(5, 10):
        add(10_000 + n * 10_000, f"/api/29/a/{n}", f"{host}/App1/index.html")
    return entries


def test_compare_heuristics_nav_dominates_time():
    configs = [SessionizerConfig.from_dict({"heuristic": h, "delta": d})
               for h in ("time", "nav") for d in ("5m", "15m")]
    rows = compare_heuristics(corpus_with_concurrency(), configs, min_size=3)
    assert [r.heuristic_label for r in rows] == ["time 5m", "time 15m", "nav 5m", "nav 15m"]
    time_rows, nav_rows = rows[:2], rows[2:]
    for t, n in zip(time_rows, nav_rows):
        assert (t.session_count, t.avg_size) == (2, 6.5)
        assert (n.session_count, n.avg_size) == (1, 11)


def test_compare_single_config_equals_session_stats():
    entries = corpus_with_concurrency()
    config = SessionizerConfig.from_dict({"heuristic": "nav", "delta": "5m"})
    [row] = compare_heuristics(entries, [config])
    assert row == session_stats(sessionize(entries, config), label="nav 5m")


def test_compare_keeps_failed_rows():
    configs = [
        SessionizerConfig.from_dict({"heuristic": "nav"}),
        SessionizerConfig.from_dict({"heuristic": "time"}),
    ]
    rows = compare_heuristics(corpus_with_concurrency(), configs, has_referer=False)
    assert len(rows) == 2
    assert rows[0].error is not None
    assert rows[0].to_csv_row()["no_of_sessions"] == "ERROR"
    assert rows[1].error is None
    assert set(rows[1].to_csv_row()) == set(CSV_COLUMNS)


def test_stats_to_dict():
    result = SessionizationResult([session("S1", [0, 1, 2, 3, 4])])
    data = stats_to_dict(session_stats(result, label="nav 30m"), distinct_requests_per_app(result))
    assert data["stats"]["heuristic"] == "nav 30m"
    assert data["stats"]["session_count"] == 1
    assert data["per_app"][0]["app"] == "App1"
    assert "per_app" not in stats_to_dict(session_stats(result))
    assert SessionizerConfig().heuristic is Heuristic.TIME_TOTAL
