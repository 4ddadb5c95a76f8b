"""Pre-processing steps applied between parsing and sessionization.

Steps, each a generator over entries with a list-returning wrapper:
- iter_fuse(corpora) -> one stream ordered by compare_entries (bounded reorder + k-way merge)
- iter_clean(entries, rules) -> kept entries; clean() also returns the dropped ones
- iter_repair_timestamps(entries) -> strictly increasing epoch_millis (+1 ms per collision)
- iter_generalize(entries, rules) -> entries with generalized_path set

Rules are loaded from a TOML document with ``[clean]``, ``[[generalize]]`` and
``[generalize_options]`` sections (see load_rules).
"""

from __future__ import annotations

import fnmatch
import heapq
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import (Any, Callable, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Pattern, Sequence, Tuple,
                    Union)

from .core.exceptions import LogStreamError, RuleConfigError, UnorderedInputError
from .log_model import LogEntry, Timestamp, sort_key

logger = logging.getLogger(__name__)

DEFAULT_REORDER_WINDOW_MS = 60_000


# === CLEANING ===

def compile_path_pattern(pattern: str) -> Pattern[str]:
    """Glob (``*.css``) or, with a ``re:`` prefix, a regular expression."""
    try:
        if pattern.startswith("re:"):
            return re.compile(pattern[3:])
        return re.compile(fnmatch.translate(pattern))
    except re.error as exc:
        raise RuleConfigError(f"Nieprawidłowy wzorzec ścieżki {pattern!r}: {exc}")


def path_pattern_matches(compiled: Pattern[str], pattern: str, path: str) -> bool:
    if pattern.startswith("re:"):
        return compiled.search(path) is not None
    return compiled.match(path) is not None


@dataclass(frozen=True)
class CleaningRules:
    drop_status: FrozenSet[int] = frozenset()
    drop_path_patterns: Tuple[str, ...] = ()
    drop_methods: FrozenSet[str] = frozenset()
    keep_only_path_prefixes: Optional[Tuple[str, ...]] = None
    _compiled: Tuple[Pattern[str], ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_compiled", tuple(compile_path_pattern(p) for p in self.drop_path_patterns))

    @property
    def is_empty(self) -> bool:
        return not (self.drop_status or self.drop_path_patterns or self.drop_methods
                    or self.keep_only_path_prefixes is not None)

    def drop_reason(self, e: LogEntry) -> Optional[str]:
        """Name of the first rule that drops ``e``, or None when it is kept."""
        if e.status in self.drop_status:
            return f"status:{e.status}"
        if e.request.method in self.drop_methods:
            return f"method:{e.request.method}"
        for compiled, pattern in zip(self._compiled, self.drop_path_patterns):
            if path_pattern_matches(compiled, pattern, e.request.path):
                return f"path:{pattern}"
        if self.keep_only_path_prefixes is not None and not any(
                e.request.path.startswith(prefix) for prefix in self.keep_only_path_prefixes):
            return "outside_prefixes"
        return None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CleaningRules":
        allowed = {"drop_status", "drop_path_patterns", "drop_methods", "keep_only_path_prefixes"}
        unknown = set(data) - allowed
        if unknown:
            raise RuleConfigError(f"Nieznane klucze w sekcji [clean]: {sorted(unknown)}")
        try:
            statuses = frozenset(int(s) for s in data.get("drop_status", []))
        except (TypeError, ValueError):
            raise RuleConfigError("drop_status musi być listą kodów statusu")
        prefixes = data.get("keep_only_path_prefixes")
        return cls(
            drop_status=statuses,
            drop_path_patterns=tuple(str(p) for p in data.get("drop_path_patterns", [])),
            drop_methods=frozenset(str(m).upper() for m in data.get("drop_methods", [])),
            keep_only_path_prefixes=tuple(str(p) for p in prefixes) if prefixes is not None else None,
        )


def iter_clean(entries: Iterable[LogEntry], rules: CleaningRules,
               on_drop: Optional[Callable[[LogEntry, str], None]] = None) -> Iterator[LogEntry]:
    """Yield kept entries; ``on_drop`` receives each dropped entry and the rule that dropped it."""
    kept = dropped = 0
    for e in entries:
        reason = rules.drop_reason(e)
        if reason is None:
            kept += 1
            yield e
            continue
        dropped += 1
        if on_drop is not None:
            on_drop(e, reason)
    logger.debug(f"Czyszczenie: zachowano {kept}, odrzucono {dropped}")


def clean(entries: Iterable[LogEntry], rules: CleaningRules) -> Tuple[List[LogEntry], List[LogEntry]]:
    """Partition entries into kept and dropped; entries are never modified."""
    dropped: List[LogEntry] = []
    kept = list(iter_clean(entries, rules, lambda e, _: dropped.append(e)))
    return kept, dropped


# === FUSION ===

def reorder(entries: Iterable[LogEntry], window_ms: int = DEFAULT_REORDER_WINDOW_MS) -> Iterator[LogEntry]:
    """Order one source by the comparator key using a bounded buffer.

    An entry is released once the newest timestamp seen is more than
    ``window_ms`` past it. Logs written at response completion are displaced by
    at most the response time; anything later than the window raises
    UnorderedInputError.
    """
    heap: List[Tuple[Tuple[int, str, int], int, LogEntry]] = []
    released: Optional[Tuple[int, str, int]] = None
    newest: Optional[int] = None
    for arrival, e in enumerate(entries):
        key = sort_key(e)
        if released is not None and key < released:
            raise UnorderedInputError(
                f"Wpis {e.source_id}:{e.line_number} jest opóźniony o więcej niż okno "
                f"{window_ms} ms; zwiększ preprocess.reorder_window",
                details={"entry": e.key, "released": released},
            )
        heapq.heappush(heap, (key, arrival, e))
        millis = e.timestamp.epoch_millis
        if newest is None or millis > newest:
            newest = millis
        while heap[0][0][0] < newest - window_ms:
            released, _, ready = heapq.heappop(heap)
            yield ready
    while heap:
        yield heapq.heappop(heap)[2]


def iter_fuse(corpora: Sequence[Iterable[LogEntry]],
              reorder_window_ms: int = DEFAULT_REORDER_WINDOW_MS) -> Iterator[LogEntry]:
    """Lazy k-way merge of per-source streams, ordered by compare_entries.

    Each stream is put in comparator order through reorder(), which keeps the
    per-source file order among entries sharing a timestamp.
    """
    logger.debug(f"Fuzja: {len(corpora)} źródeł, okno {reorder_window_ms} ms")
    return heapq.merge(*(reorder(c, reorder_window_ms) for c in corpora), key=sort_key)


def fuse(corpora: Sequence[Iterable[LogEntry]],
         reorder_window_ms: int = DEFAULT_REORDER_WINDOW_MS) -> List[LogEntry]:
    return list(iter_fuse(corpora, reorder_window_ms))


# === TIMESTAMP REPAIR ===

def iter_repair_timestamps(entries: Iterable[LogEntry]) -> Iterator[LogEntry]:
    """Make epoch_millis strictly increasing, keeping the input order.

    A colliding entry is moved to one millisecond after its predecessor and
    flagged ``repaired``; the shift may spill into the next second.
    """
    previous: Optional[int] = None
    repaired = 0
    for e in entries:
        millis = e.timestamp.epoch_millis
        if previous is not None and millis <= previous:
            millis = previous + 1
            e = replace(e, timestamp=Timestamp(millis, e.timestamp.declared_granularity), repaired=True)
            repaired += 1
        yield e
        previous = millis
    if repaired:
        logger.debug(f"Naprawa znaczników czasu: przesunięto {repaired} wpisów")


def repair_timestamps(entries: Iterable[LogEntry]) -> List[LogEntry]:
    return list(iter_repair_timestamps(entries))


# === GENERALIZATION ===

_UUID = r"[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}"
_CAPTURES = {
    "<int>": r"[0-9]+",
    "<uuid>": _UUID,
    "<str>": r"[^/]+",
    # a name segment; ids are never kept
    "<keep>": rf"(?!{_UUID}(?:/|$))[A-Za-z][^/]*",
    "<path>": r".+",
}
_CAPTURE_RE = re.compile("|".join(re.escape(k) for k in _CAPTURES))
_PLACEHOLDER_RE = re.compile(r"\{[A-Za-z_][A-Za-z0-9_]*\}")
_UUID_RE = re.compile(_CAPTURES["<uuid>"] + "$")
_INT_RE = re.compile(_CAPTURES["<int>"])


@dataclass(frozen=True)
class GeneralizationRule:
    """``/api/<int>/system/info`` -> ``/api/{version}/system/info``

    Placeholders take the template text, except those paired with a ``<keep>``
    capture (a segment starting with a letter that is not a UUID), which take
    the matched segment: ``/api/<int>/<keep>/<uuid>`` with
    ``/api/{version}/{resource}/{uid}`` maps ``/api/29/dataElements/<uid>`` to
    ``/api/{version}/dataElements/{uid}``.
    """

    match_pattern: str
    template: str
    _regex: Pattern[str] = field(default=None, init=False, repr=False, compare=False)
    _kinds: Tuple[str, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        captures = _CAPTURE_RE.findall(self.match_pattern)
        placeholders = _PLACEHOLDER_RE.findall(self.template)
        if len(captures) != len(placeholders):
            raise RuleConfigError(
                f"Reguła {self.match_pattern!r}: {len(captures)} przechwyceń, "
                f"a szablon {self.template!r} ma {len(placeholders)} pól"
            )
        parts = []
        last = 0
        for m in _CAPTURE_RE.finditer(self.match_pattern):
            parts.append(re.escape(self.match_pattern[last:m.start()]))
            parts.append(f"({_CAPTURES[m.group()]})")
            last = m.end()
        parts.append(re.escape(self.match_pattern[last:]))
        object.__setattr__(self, "_regex", re.compile("".join(parts)))
        object.__setattr__(self, "_kinds", tuple(captures))

    def apply(self, path: str) -> Optional[str]:
        match = self._regex.fullmatch(path)
        if match is None:
            return None
        if "<keep>" not in self._kinds:
            return self.template
        pairs = iter(zip(self._kinds, match.groups()))

        def fill(placeholder: re.Match) -> str:
            kind, value = next(pairs)
            return value if kind == "<keep>" else placeholder.group()

        return _PLACEHOLDER_RE.sub(fill, self.template)


def fallback_generalize(path: str) -> str:
    """Replace all-digit and UUID-shaped segments with ``{id}``."""
    segments = path.split("/")
    return "/".join("{id}" if _INT_RE.fullmatch(s) or _UUID_RE.match(s) else s for s in segments)


def generalize_path(path: str, rules: Sequence[GeneralizationRule], id_fallback: bool = False) -> str:
    for rule in rules:
        result = rule.apply(path)
        if result is not None:
            return result
    return fallback_generalize(path) if id_fallback else path


def iter_generalize(entries: Iterable[LogEntry], rules: Sequence[GeneralizationRule],
                    id_fallback: bool = False) -> Iterator[LogEntry]:
    """Set generalized_path on every entry; the first matching rule wins."""
    for e in entries:
        yield replace(e, generalized_path=generalize_path(e.request.path, rules, id_fallback))


def generalize(entries: Iterable[LogEntry], rules: Sequence[GeneralizationRule],
               id_fallback: bool = False) -> List[LogEntry]:
    return list(iter_generalize(entries, rules, id_fallback))


# === RULES DOCUMENT ===

@dataclass(frozen=True)
class RuleSet:
    cleaning: CleaningRules = CleaningRules()
    generalization: Tuple[GeneralizationRule, ...] = ()
    id_fallback: bool = False


def rules_from_dict(data: Mapping[str, Any]) -> RuleSet:
    cleaning = CleaningRules.from_dict(data.get("clean", {}))
    generalization = []
    for index, item in enumerate(data.get("generalize", [])):
        if not isinstance(item, Mapping) or "match" not in item or "template" not in item:
            raise RuleConfigError(f"Reguła generalizacji #{index} wymaga kluczy 'match' i 'template'")
        generalization.append(GeneralizationRule(str(item["match"]), str(item["template"])))
    options = data.get("generalize_options", {})
    id_fallback = options.get("id_fallback", False)
    if not isinstance(id_fallback, bool):
        raise RuleConfigError("generalize_options.id_fallback musi być wartością logiczną")
    return RuleSet(cleaning=cleaning, generalization=tuple(generalization), id_fallback=id_fallback)


def load_rules(path: Union[str, Path]) -> RuleSet:
    """Read a rules TOML document."""
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise LogStreamError(f"Nie można odczytać reguł {path}: {exc}", source_id=str(path))
    except tomllib.TOMLDecodeError as exc:
        raise RuleConfigError(f"Nieprawidłowy plik reguł {path}: {exc}")
    return rules_from_dict(data)


__all__ = [
    "CleaningRules", "GeneralizationRule", "RuleSet", "DEFAULT_REORDER_WINDOW_MS", "clean", "iter_clean",
    "reorder", "fuse", "iter_fuse", "repair_timestamps", "iter_repair_timestamps", "generalize", "iter_generalize",
    "generalize_path", "fallback_generalize", "compile_path_pattern",
    "rules_from_dict", "load_rules",
]
