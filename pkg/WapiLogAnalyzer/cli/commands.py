# cli/commands.py
"""
Interfejs komend CLI - jedna metoda na podkomendę, każda zwraca kod wyjścia

parse, preprocess, sessionize, quality, stats, compare, synth, score, run
"""

import logging
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from ..config.settings import Settings, get_settings
from ..core.exceptions import (
    ConfigError,
    ConfigValidationError,
    FileError,
    LogStreamError,
    ParseHaltedError,
    SessionizerConfigError,
    WapiLogError,
    parse_duration,
    validate_fraction,
    validate_positive,
)
from ..core.types import ExitCode
from ..log_model import LogEntry, LogFormatSpec
from ..parser import (
    ErrorPolicy,
    FormatString,
    ParseDiagnostic,
    compile_format_string,
    iter_parse_stream,
    parse_format_spec,
)
from ..preprocess import (
    DEFAULT_REORDER_WINDOW_MS,
    RuleSet,
    iter_clean,
    iter_fuse,
    iter_generalize,
    iter_repair_timestamps,
    load_rules,
    rules_from_dict,
)
from ..quality import QualityConfig, QualityReport, build_report, render_text
from ..sessionizer import SessionEvent, SessionizerConfig, collect_events, iter_sessionize
from ..stats import CSV_COLUMNS, StatsAccumulator, compare_heuristics, stats_to_dict
from ..storage.file_operations import (
    OutputSet,
    looks_like_diagnostics,
    read_diagnostics,
    read_entries,
    read_jsonl,
    read_session_events,
    write_csv,
    write_diagnostics,
    write_entries,
    write_json,
    write_jsonl,
    write_session_events,
)
from ..synth import TruthLabel, generate, preset, score

logger = logging.getLogger(__name__)

OUTPUT_NAMES = {
    'entries': 'entries.jsonl',
    'diagnostics': 'diagnostics.jsonl',
    'clean': 'clean.jsonl',
    'sessions': 'sessions.jsonl',
    'stats': 'stats.json',
    'report': 'report.json',
}


def _apply_overrides(sections: Dict[str, Dict[str, Any]], overrides: Optional[Dict[str, Any]]) -> None:
    """Nakłada flagi CLI ('sekcja.klucz' -> wartość); None oznacza brak flagi"""
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.partition('.')
        sections.setdefault(section, {})[name] = value


@dataclass(frozen=True)
class PipelineConfig:
    """Zwalidowana konfiguracja wszystkich etapów"""

    format_string: str
    format: FormatString
    spec: LogFormatSpec
    on_error: ErrorPolicy = ErrorPolicy.SKIP_AND_RECORD
    rules: RuleSet = RuleSet()
    repair: bool = False
    reorder_window_ms: int = DEFAULT_REORDER_WINDOW_MS
    sessionizer: SessionizerConfig = SessionizerConfig()
    quality: QualityConfig = QualityConfig()
    min_size: int = 3
    per_app: bool = False
    corpus_id: str = 'corpus'
    fail_on_critical: bool = False
    outputs: Dict[str, str] = field(default_factory=lambda: dict(OUTPUT_NAMES))

    @classmethod
    def from_settings(cls, settings: Settings, overrides: Optional[Dict[str, Any]] = None) -> 'PipelineConfig':
        """
        Buduje konfigurację z ustawień i flag CLI

        Raises:
            ConfigValidationError: wszystkie znalezione błędy naraz
            LogStreamError: nieczytelny plik reguł
        """
        sections = {name: settings.section(name)
                    for name in ('parse', 'preprocess', 'rules', 'sessionize', 'quality', 'stats')}
        overrides = dict(overrides or {})
        rules_path = overrides.pop('preprocess.rules', None)
        _apply_overrides(sections, overrides)

        errors: List[str] = []

        def collect(build: Callable[[], Any], default: Any = None) -> Any:
            try:
                return build()
            except ConfigError as e:
                errors.extend(e.details.get('validation_errors', [e.message]))
                return default

        format_string = str(sections['parse'].get('format', ''))
        directives = collect(lambda: compile_format_string(format_string), ())
        spec = collect(lambda: parse_format_spec(directives)) if directives else None
        on_error = collect(lambda: ErrorPolicy.parse(sections['parse'].get('on_error', 'skip_and_record')),
                           ErrorPolicy.SKIP_AND_RECORD)

        if rules_path:
            rules = load_rules(rules_path)
        else:
            rules = collect(lambda: rules_from_dict(sections['rules']), RuleSet())

        repair = sections['preprocess'].get('repair_timestamps', False)
        if not isinstance(repair, bool):
            errors.append(f"preprocess.repair_timestamps musi być wartością logiczną: {repair!r}")
            repair = False
        reorder_window_ms = collect(
            lambda: parse_duration(sections['preprocess'].get('reorder_window', '1m'), 'preprocess.reorder_window'),
            DEFAULT_REORDER_WINDOW_MS)

        sessionizer = collect(lambda: SessionizerConfig.from_dict(sections['sessionize']), SessionizerConfig())
        errors.extend(sessionizer.validation_errors())

        quality_section = sections['quality']
        corpus_id = str(quality_section.pop('corpus_id', 'corpus'))
        fail_on_critical = bool(quality_section.pop('fail_on_critical', False))
        quality = collect(lambda: QualityConfig.from_dict(quality_section), QualityConfig())
        errors.extend(quality.validation_errors())

        stats_section = sections['stats']
        min_size = stats_section.get('min_size', 3)
        if isinstance(min_size, bool) or not isinstance(min_size, int) or min_size < 0:
            errors.append(f"stats.min_size musi być nieujemną liczbą całkowitą: {min_size!r}")
            min_size = 3

        if errors:
            raise ConfigValidationError(f"Znaleziono {len(errors)} błędów konfiguracji", validation_errors=errors)

        return cls(
            format_string=format_string,
            format=directives,
            spec=spec,
            on_error=on_error,
            rules=rules,
            repair=repair,
            reorder_window_ms=reorder_window_ms,
            sessionizer=sessionizer,
            quality=quality,
            min_size=min_size,
            per_app=bool(stats_section.get('per_app', False)),
            corpus_id=corpus_id,
            fail_on_critical=fail_on_critical,
        )


# === ETAPY WSPÓLNE DLA KOMEND I `run` ===

def parse_inputs(paths: Sequence[str], config: PipelineConfig,
                 on_entry: Optional[Callable[[LogEntry], None]] = None,
                 on_diagnostic: Optional[Callable[[ParseDiagnostic], None]] = None) -> Tuple[int, int]:
    """Parsuje pliki strumieniowo; halt zamienia pierwszą diagnostykę na ParseHaltedError"""
    entries = diagnostics = 0
    for path in paths:
        path = Path(path)
        source_id = path.name
        try:
            with open(path, 'r', encoding='utf-8', newline='') as handle:
                for item in iter_parse_stream(handle, config.spec, config.on_error, source_id):
                    if isinstance(item, ParseDiagnostic):
                        diagnostics += 1
                        if config.on_error is ErrorPolicy.HALT:
                            raise ParseHaltedError(item)
                        if on_diagnostic:
                            on_diagnostic(item)
                    else:
                        entries += 1
                        if on_entry:
                            on_entry(item)
        except OSError as e:
            raise LogStreamError(f"Nie można odczytać pliku {path}: {e}", source_id=source_id)
    if diagnostics:
        logger.warning(f"Odrzucono {diagnostics} linii z {len(paths)} plików")
    return entries, diagnostics


def preprocess_stream(corpora: Sequence[Iterable[LogEntry]], config: PipelineConfig,
                      on_drop: Optional[Callable[[LogEntry, str], None]] = None) -> Iterator[LogEntry]:
    """fuse -> clean -> repair (opcjonalnie) -> generalize, wpis po wpisie"""
    stream = iter_fuse(corpora, config.reorder_window_ms)
    stream = iter_clean(stream, config.rules.cleaning, on_drop)
    if config.repair:
        stream = iter_repair_timestamps(stream)
    return iter_generalize(stream, config.rules.generalization, config.rules.id_fallback)


def source_streams(paths: Sequence[str]) -> List[Iterator[LogEntry]]:
    """
    Jeden leniwy strumień na parę (plik, source_id)

    Pierwszy przebieg zbiera identyfikatory źródeł; każde źródło czyta potem plik osobno.
    """
    streams: List[Iterator[LogEntry]] = []
    for path in paths:
        sources = list(dict.fromkeys(e.source_id for e in read_entries(path)))
        if len(sources) == 1:
            streams.append(read_entries(path))
        else:
            streams.extend(_entries_of_source(path, source_id) for source_id in sources)
    return streams


def _entries_of_source(path: str, source_id: str) -> Iterator[LogEntry]:
    return (e for e in read_entries(path) if e.source_id == source_id)


def _tee_entries(entries: Iterable[LogEntry], handle) -> Iterator[LogEntry]:
    for e in entries:
        write_entries(handle, [e])
        yield e


def _feed(events: Iterable[SessionEvent], accumulator: StatsAccumulator) -> Iterator[SessionEvent]:
    for event in events:
        accumulator.add(event)
        yield event


def stats_accumulator(config: PipelineConfig) -> StatsAccumulator:
    return StatsAccumulator(config.min_size, config.sessionizer.display_label, per_app=config.per_app)


def stats_document(accumulator: StatsAccumulator) -> Dict[str, Any]:
    stats = accumulator.stats()
    profiles = accumulator.profiles() if accumulator.per_app else None
    print(stats.display(), file=sys.stderr)
    return stats_to_dict(stats, profiles)


def load_compare_configs(path: str) -> Tuple[List[SessionizerConfig], Optional[int]]:
    """Dokument TOML z tablicami [[configs]] i opcjonalną sekcją [compare]"""
    try:
        with open(path, 'rb') as handle:
            document = tomllib.load(handle)
    except OSError as e:
        raise LogStreamError(f"Nie można odczytać {path}: {e}", source_id=str(path))
    except tomllib.TOMLDecodeError as e:
        raise SessionizerConfigError(f"Nieprawidłowy plik porównania {path}: {e}")

    tables = document.get('configs')
    if not isinstance(tables, list) or not tables:
        raise SessionizerConfigError(f"{path}: wymagana co najmniej jedna tablica [[configs]]")
    configs = [SessionizerConfig.from_dict(t) for t in tables]
    errors = [f"{c.display_label}: {e}" for c in configs for e in c.validation_errors()]
    if errors:
        raise ConfigValidationError(f"Nieprawidłowe konfiguracje w {path}", validation_errors=errors)
    return configs, document.get('compare', {}).get('min_size')


class CLICommands:
    """
    Komendy dostępne w CLI

    Każda komenda buduje PipelineConfig przed otwarciem jakiegokolwiek wejścia
    i zapisuje wyniki przez OutputSet (pliki tymczasowe + podmiana).
    """

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

        self.session_stats = {
            'start_time': datetime.now(),
            'commands_executed': 0,
            'errors': 0
        }

        logger.debug("Zainicjalizowano CLI commands")

    def _execute(self, name: str, handler: Callable[[Dict[str, Any]], int], args: Dict[str, Any]) -> int:
        """Wspólna obsługa błędów: rodzina wyjątku wyznacza kod wyjścia"""
        logger.info(f"Wykonywanie komendy {name}")
        self.session_stats['commands_executed'] += 1
        try:
            return handler(args)
        except WapiLogError as e:
            if isinstance(e, ConfigError):
                code = ExitCode.CONFIG_ERROR
            elif isinstance(e, FileError):
                code = ExitCode.IO_ERROR
            else:
                code = ExitCode.DATA_ERROR
            logger.error(f"Błąd wykonania {name}: {e.message}")
            for problem in e.details.get('validation_errors', []):
                print(f"  - {problem}", file=sys.stderr)
            self.session_stats['errors'] += 1
            return code

    def _config(self, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
        return PipelineConfig.from_settings(self.settings, overrides)

    # === KOMENDY ETAPÓW ===

    def parse(self, args: Dict[str, Any]) -> int:
        """
        Parsuje surowe logi do JSONL

        Args:
            args: inputs, log_format, on_error, out, diag
        """
        return self._execute('parse', self._parse, args)

    def _parse(self, args: Dict[str, Any]) -> int:
        config = self._config({'parse.format': args.get('log_format'), 'parse.on_error': args.get('on_error')})

        with OutputSet() as outputs:
            entries_out = outputs.open(args.get('out') or OUTPUT_NAMES['entries'])
            diag_out = outputs.open(args['diag']) if args.get('diag') else None
            entries, diagnostics = parse_inputs(
                args['inputs'], config,
                on_entry=lambda e: write_entries(entries_out, [e]),
                on_diagnostic=(lambda d: write_diagnostics(diag_out, [d])) if diag_out else None,
            )

        print(f"Sparsowano {entries} wpisów, odrzucono {diagnostics} linii", file=sys.stderr)
        return ExitCode.OK

    def preprocess(self, args: Dict[str, Any]) -> int:
        """
        Fuzja, czyszczenie, naprawa znaczników czasu i generalizacja

        Args:
            args: inputs, rules, repair_timestamps, reorder_window, out, dropped
        """
        return self._execute('preprocess', self._preprocess, args)

    def _preprocess(self, args: Dict[str, Any]) -> int:
        config = self._config({
            'preprocess.rules': args.get('rules'),
            'preprocess.repair_timestamps': True if args.get('repair_timestamps') else None,
            'preprocess.reorder_window': args.get('reorder_window'),
        })
        corpora = source_streams(args['inputs'])
        dropped = 0

        with OutputSet() as outputs:
            out = outputs.open(args.get('out') or OUTPUT_NAMES['clean'])
            dropped_out = outputs.open(args['dropped']) if args.get('dropped') else None

            def on_drop(e: LogEntry, reason: str) -> None:
                nonlocal dropped
                dropped += 1
                if dropped_out is not None:
                    write_entries(dropped_out, [e])

            kept = write_entries(out, preprocess_stream(corpora, config, on_drop))

        print(f"Po przetworzeniu: {kept} wpisów, odrzucono {dropped}", file=sys.stderr)
        return ExitCode.OK

    def sessionize(self, args: Dict[str, Any]) -> int:
        """
        Rekonstrukcja sesji wybraną heurystyką

        Args:
            args: input, heuristic, delta, theta, app_open_pattern, user_key,
                  time_reference, ambiguity_policy, absent_referer, log_format, out
        """
        return self._execute('sessionize', self._sessionize, args)

    def _sessionize(self, args: Dict[str, Any]) -> int:
        config = self._config(self._sessionize_overrides(args))
        events = iter_sessionize(read_entries(args['input']), config.sessionizer, config.spec.has_referer)

        with OutputSet() as outputs:
            sessions, discarded = write_session_events(
                outputs.open(args.get('out') or OUTPUT_NAMES['sessions']), events)

        print(f"{config.sessionizer.display_label}: {sessions} sesji, "
              f"{discarded} odrzuconych wpisów", file=sys.stderr)
        return ExitCode.OK

    @staticmethod
    def _sessionize_overrides(args: Dict[str, Any]) -> Dict[str, Any]:
        return {
            'parse.format': args.get('log_format'),
            'sessionize.heuristic': args.get('heuristic'),
            'sessionize.delta': args.get('delta'),
            'sessionize.theta': args.get('theta'),
            'sessionize.app_open_pattern': args.get('app_open_pattern'),
            'sessionize.user_key_fields': args.get('user_key') or None,
            'sessionize.time_reference': args.get('time_reference'),
            'sessionize.ambiguity_policy': args.get('ambiguity_policy'),
            'sessionize.absent_referer': args.get('absent_referer'),
        }

    def quality(self, args: Dict[str, Any]) -> int:
        """
        Raport jakości logu

        Args:
            args: inputs (entries.jsonl [diag.jsonl]), log_format, profile, id_locator,
                  output_format (json|text), corpus_id, fail_on_critical, out
        """
        return self._execute('quality', self._quality, args)

    def _quality(self, args: Dict[str, Any]) -> int:
        config = self._config({
            'parse.format': args.get('log_format'),
            'quality.profile': args.get('profile'),
            'quality.id_locators': args.get('id_locator') or None,
            'quality.corpus_id': args.get('corpus_id'),
            'quality.fail_on_critical': True if args.get('fail_on_critical') else None,
        })
        entries: List[LogEntry] = []
        diagnostics: List[ParseDiagnostic] = []
        for path in args['inputs']:
            if looks_like_diagnostics(path):
                diagnostics.extend(read_diagnostics(path))
            else:
                entries.extend(read_entries(path))

        report = build_report(entries, diagnostics, config.spec, config.quality, config.corpus_id)
        text = render_text(report) if args.get('output_format') == 'text' else report.to_json()
        with OutputSet() as outputs:
            outputs.open(args.get('out') or OUTPUT_NAMES['report']).write(text)

        return self._quality_exit(report, config)

    @staticmethod
    def _quality_exit(report: QualityReport, config: PipelineConfig) -> int:
        critical = [i.kind.value for i in report.critical_issues]
        if critical:
            print(f"Krytyczne problemy jakości: {', '.join(critical)}", file=sys.stderr)
            if config.fail_on_critical:
                return ExitCode.CRITICAL_ISSUE
        return ExitCode.OK

    def stats(self, args: Dict[str, Any]) -> int:
        """
        Statystyki sesji

        Args:
            args: input (sessions.jsonl), min_size, per_app, out
        """
        return self._execute('stats', self._stats, args)

    def _stats(self, args: Dict[str, Any]) -> int:
        overrides = self._sessionize_overrides(args)
        overrides.update({'stats.min_size': args.get('min_size'),
                          'stats.per_app': True if args.get('per_app') else None})
        config = self._config(overrides)
        accumulator = stats_accumulator(config).update(read_session_events(args['input']))

        with OutputSet() as outputs:
            write_json(outputs.open(args.get('out') or OUTPUT_NAMES['stats']), stats_document(accumulator))
        return ExitCode.OK

    def compare(self, args: Dict[str, Any]) -> int:
        """
        Porównanie heurystyk (tabela CSV)

        Args:
            args: input, configs (TOML), min_size, log_format, out
        """
        return self._execute('compare', self._compare, args)

    def _compare(self, args: Dict[str, Any]) -> int:
        config = self._config({'parse.format': args.get('log_format')})
        configs, file_min_size = load_compare_configs(args['configs'])
        min_size = args.get('min_size')
        if min_size is None:
            min_size = file_min_size if file_min_size is not None else config.min_size

        entries = list(read_entries(args['input']))
        rows = compare_heuristics(entries, configs, min_size, config.spec.has_referer)

        with OutputSet() as outputs:
            write_csv(outputs.open(args.get('out') or 'table.csv'), CSV_COLUMNS, (r.to_csv_row() for r in rows))
        for row in rows:
            print(row.display(), file=sys.stderr)
        return ExitCode.OK

    # === GENERATOR I OCENA ===

    def synth(self, args: Dict[str, Any]) -> int:
        """
        Generuje syntetyczny log z danymi referencyjnymi

        Args:
            args: preset, users, seed, visits_per_user, proxy_fraction, concurrent_open_rate,
                  app_id_coverage, corruption_rate, ambiguous_rate, orphan_rate, out, truth
        """
        return self._execute('synth', self._synth, args)

    def _synth(self, args: Dict[str, Any]) -> int:
        overrides: Dict[str, Any] = {}
        errors: List[str] = []
        for name, target in (('users', 'user_count'), ('visits_per_user', 'visits_per_user'), ('seed', 'seed')):
            if args.get(name) is not None:
                try:
                    overrides[target] = validate_positive(args[name], name) if name != 'seed' else int(args[name])
                except ConfigValidationError as e:
                    errors.append(e.message)
        for name in ('proxy_fraction', 'concurrent_open_rate', 'app_id_coverage',
                     'corruption_rate', 'ambiguous_rate', 'orphan_rate'):
            if args.get(name) is not None:
                try:
                    overrides[name] = validate_fraction(args[name], name)
                except ConfigValidationError as e:
                    errors.append(e.message)
        if errors:
            raise ConfigValidationError("Nieprawidłowe parametry generatora", validation_errors=errors)

        out = args.get('out') or 'corpus.log'
        # parse nadaje source_id z nazwy pliku, etykiety muszą się zgadzać
        if out != '-':
            overrides['source_id'] = Path(out).name

        spec = preset(args.get('preset') or 'golden', **overrides)
        corpus = generate(spec)

        with OutputSet() as outputs:
            outputs.open(out).write(corpus.text())
            if args.get('truth'):
                write_jsonl(outputs.open(args['truth']), corpus.truth_records())

        print(f"Wygenerowano {len(corpus.lines)} linii ({len(corpus.corrupted_lines)} uszkodzonych, "
              f"{len(corpus.ambiguous_lines)} niejednoznacznych)", file=sys.stderr)
        print(f"Format: {corpus.format_string}", file=sys.stderr)
        return ExitCode.OK

    def score(self, args: Dict[str, Any]) -> int:
        """
        Ocena rekonstrukcji względem danych referencyjnych

        Args:
            args: truth, sessions, out
        """
        return self._execute('score', self._score, args)

    def _score(self, args: Dict[str, Any]) -> int:
        try:
            truth = [TruthLabel.from_record(r) for r in read_jsonl(args['truth'])]
        except (KeyError, TypeError, ValueError) as e:
            raise LogStreamError(f"Nieprawidłowy plik referencyjny {args['truth']}: {e}", source_id=args['truth'])
        result = collect_events(read_session_events(args['sessions']))
        accuracy = score(result, truth)

        with OutputSet() as outputs:
            write_json(outputs.open(args.get('out') or 'score.json'), accuracy.to_dict())
        print(f"F1 = {accuracy.pairwise_f1:.3f} (P = {accuracy.pairwise_precision:.3f}, "
              f"R = {accuracy.pairwise_recall:.3f})", file=sys.stderr)
        return ExitCode.OK

    # === CAŁY POTOK ===

    def run(self, args: Dict[str, Any]) -> int:
        """
        parse -> fuse -> clean -> repair -> generalize -> sessionize -> stats + quality

        Args:
            args: inputs, out_dir, out (sesje; '-' = stdout), log_format, on_error, rules,
                  repair_timestamps, heuristic, delta, min_size, per_app, corpus_id, fail_on_critical
        """
        return self._execute('run', self._run, args)

    def _run(self, args: Dict[str, Any]) -> int:
        overrides = self._sessionize_overrides(args)
        overrides.update({
            'parse.on_error': args.get('on_error'),
            'preprocess.rules': args.get('rules'),
            'preprocess.repair_timestamps': True if args.get('repair_timestamps') else None,
            'preprocess.reorder_window': args.get('reorder_window'),
            'stats.min_size': args.get('min_size'),
            'stats.per_app': True if args.get('per_app') else None,
            'quality.corpus_id': args.get('corpus_id'),
            'quality.fail_on_critical': True if args.get('fail_on_critical') else None,
        })
        config = self._config(overrides)
        out_dir = Path(args.get('out_dir') or '.')

        def target(key: str) -> Path:
            return out_dir / config.outputs[key]

        with OutputSet() as outputs:
            entries_out = outputs.open(target('entries'))
            diag_out = outputs.open(target('diagnostics'))
            # raport jakości potrzebuje całego korpusu
            parsed: List[LogEntry] = []
            by_source: Dict[str, List[LogEntry]] = {}
            diagnostics: List[ParseDiagnostic] = []

            def keep_entry(e: LogEntry) -> None:
                parsed.append(e)
                by_source.setdefault(e.source_id, []).append(e)
                write_entries(entries_out, [e])

            def keep_diagnostic(d: ParseDiagnostic) -> None:
                diagnostics.append(d)
                write_diagnostics(diag_out, [d])

            parse_inputs(args['inputs'], config, keep_entry, keep_diagnostic)

            clean_out = outputs.open(target('clean'))
            sessions_out = outputs.open(args.get('out') or target('sessions'))
            accumulator = stats_accumulator(config)
            entries = _tee_entries(preprocess_stream(list(by_source.values()), config), clean_out)
            events = iter_sessionize(entries, config.sessionizer, config.spec.has_referer)
            write_session_events(sessions_out, _feed(events, accumulator))
            write_json(outputs.open(target('stats')), stats_document(accumulator))

            report = build_report(parsed, diagnostics, config.spec, config.quality, config.corpus_id)
            outputs.open(target('report')).write(report.to_json())

        return self._quality_exit(report, config)

    # === METODY POMOCNICZE ===

    def get_session_stats(self) -> Dict[str, Any]:
        """Zwraca statystyki sesji CLI"""
        current_time = datetime.now()
        duration = (current_time - self.session_stats['start_time']).total_seconds()
        return {
            **self.session_stats,
            'duration_seconds': duration,
        }

    def print_session_summary(self) -> None:
        """Wyświetla podsumowanie sesji CLI na stderr"""
        stats = self.get_session_stats()
        out = sys.stderr
        print("=" * 50, file=out)
        print("📊 PODSUMOWANIE", file=out)
        print(f"Czas trwania: {stats['duration_seconds']:.1f}s", file=out)
        print(f"Wykonane komendy: {stats['commands_executed']}", file=out)
        print(f"Błędy: {stats['errors']}", file=out)
        print("=" * 50, file=out)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            logger.debug(f"Zakończono: {self.session_stats['commands_executed']} komend, "
                         f"{self.session_stats['errors']} błędów")
        return False
