"""Directional checks on synthetic corpora; run with -m slow or skip with -m "not slow"."""

import sys
import time
import tracemalloc
from collections import Counter
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT))

from WapiLogAnalyzer.log_model import Granularity, LogEntry, Timestamp
from WapiLogAnalyzer.parser import format_timestamp, iter_parse_stream, parse_line
from WapiLogAnalyzer.preprocess import (
    fuse, generalize, iter_clean, iter_fuse, iter_generalize, iter_repair_timestamps, load_rules, repair_timestamps,
)
from WapiLogAnalyzer.sessionizer import Session, SessionizerConfig, iter_sessionize, sessionize
from WapiLogAnalyzer.stats import compare_heuristics, distinct_requests_per_app
from WapiLogAnalyzer.synth import DHIS2_CATALOG, generate, kendall_tau_distance, preset, score

pytestmark = pytest.mark.slow


def config(heuristic, delta):
    return SessionizerConfig.from_dict({"heuristic": heuristic, "delta": delta})


def ordered(corpus):
    return fuse([corpus.entries])


@pytest.fixture(scope="module")
def concurrent_corpus():
    corpus = generate(preset("golden", user_count=600, concurrent_open_rate=0.3, seed=42))
    assert len(corpus.entries) >= 10_000
    return corpus


def test_navigation_gives_fewer_larger_sessions(concurrent_corpus):
    configs = [config(h, d) for h in ("time", "nav") for d in ("5m", "15m")]
    rows = compare_heuristics(ordered(concurrent_corpus), configs, min_size=3, has_referer=True)
    time_rows, nav_rows = rows[:2], rows[2:]
    for t, n in zip(time_rows, nav_rows):
        assert t.error is None and n.error is None
        assert n.session_count < t.session_count, (t.display(), n.display())
        assert n.avg_size > t.avg_size, (t.display(), n.display())


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_navigation_is_more_accurate(seed):
    corpus = generate(preset("golden", user_count=300, seed=seed))
    entries = ordered(corpus)
    nav = score(sessionize(entries, config("nav", "15m"), has_referer=True), corpus)
    time = score(sessionize(entries, config("time", "15m")), corpus)
    assert nav.pairwise_f1 - time.pairwise_f1 >= 0.05, (nav.to_dict(), time.to_dict())


def test_time_attribution_inflates_distinct_requests(concurrent_corpus):
    entries = generalize(ordered(concurrent_corpus), [], id_fallback=True)
    by_time = {p.app: p.distinct_requests
               for p in distinct_requests_per_app(sessionize(entries, config("time", "15m")))}
    by_nav = {p.app: p.distinct_requests
              for p in distinct_requests_per_app(sessionize(entries, config("nav", "15m"), has_referer=True))}
    for app in (a.name for a in DHIS2_CATALOG):
        assert by_time[app] > by_nav[app], app


def test_quoted_round_trip_on_large_corpus(concurrent_corpus):
    corpus = concurrent_corpus
    assert all(d.quoted for d in corpus.spec.field_layout if d.name in ("request", "referer", "user_agent"))
    agents = {e.user_agent for e in corpus.entries}
    assert any(";" in a and "," in a and "(" in a for a in agents)
    mismatches = [
        expected.line_number for line, expected in zip(corpus.lines, corpus.entries)
        if parse_line(line, corpus.spec, corpus.source_id, expected.file_order) != expected
    ]
    assert mismatches == []


@pytest.mark.parametrize("seed", range(20))
def test_repair_never_worsens_order(seed):
    corpus = generate(preset("golden", user_count=25, timestamp_granularity=Granularity.SECOND, seed=seed))
    true_order = [t.key for t in sorted(corpus.truth, key=lambda t: (t.true_epoch_millis, t.file_order))]
    file_order = [e.key for e in corpus.entries]

    repaired = repair_timestamps(ordered(corpus))
    stamps = [e.epoch_millis for e in repaired]
    assert all(a < b for a, b in zip(stamps, stamps[1:]))
    assert [e.key for e in repaired] == [e.key for e in ordered(corpus)]
    assert kendall_tau_distance(true_order, [e.key for e in repaired]) <= kendall_tau_distance(true_order, file_order)


# === STREAMING ===

@pytest.fixture(scope="module")
def line_pool():
    corpus = generate(preset("golden", seed=7))
    assert not corpus.corrupted_lines and len(corpus.lines) == len(corpus.entries)
    return corpus


@pytest.fixture(scope="module")
def rules():
    return load_rules(REPO_ROOT / "WapiLogAnalyzer" / "presets" / "pipeline.toml")


def repeated_lines(corpus, total):
    """Cycle the corpus lines, each pass starting an hour after the previous one ends."""
    pieces = []
    for line, entry in zip(corpus.lines, corpus.entries):
        start = line.index("[")
        end = line.index("]", start)
        pieces.append((line[:start + 1], entry.epoch_millis, line[end:]))
    low = min(millis for _, millis, _ in pieces)
    span = max(millis for _, millis, _ in pieces) - low + 3_600_000
    produced = cycle = 0
    while True:
        for prefix, millis, suffix in pieces:
            if produced == total:
                return
            yield f"{prefix}{format_timestamp(Timestamp(millis + cycle * span), True)}{suffix}"
            produced += 1
        cycle += 1


def pipeline_events(lines, corpus, rules, drops):
    parsed = (item for item in iter_parse_stream(lines, corpus.spec, source_id="bench.log")
              if isinstance(item, LogEntry))
    kept = iter_clean(iter_fuse([parsed]), rules.cleaning, lambda e, reason: drops.update([reason]))
    entries = iter_generalize(iter_repair_timestamps(kept), rules.generalization, rules.id_fallback)
    nav = SessionizerConfig.from_dict({"heuristic": "nav", "delta": "15m", "user_key_fields": ["client_ip"]})
    return iter_sessionize(entries, nav, has_referer=True)


def test_million_lines_within_a_minute(line_pool, rules):
    drops, placed = Counter(), Counter()
    started = time.perf_counter()
    for event in pipeline_events(repeated_lines(line_pool, 1_000_000), line_pool, rules, drops):
        if isinstance(event, Session):
            placed["sessions"] += len(event.entries)
        else:
            placed["discarded"] += 1
    elapsed = time.perf_counter() - started
    assert elapsed < 60, f"{elapsed:.1f} s"
    assert placed["sessions"] > 0
    assert placed["sessions"] + placed["discarded"] + sum(drops.values()) == 1_000_000


def peak_bytes(corpus, rules, total):
    tracemalloc.start()
    try:
        for _ in pipeline_events(repeated_lines(corpus, total), corpus, rules, Counter()):
            pass
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def test_memory_does_not_grow_with_corpus(line_pool, rules):
    peak_bytes(line_pool, rules, 5_000)
    small = peak_bytes(line_pool, rules, 40_000)
    large = peak_bytes(line_pool, rules, 160_000)
    assert large < 2 * small, (small, large)
