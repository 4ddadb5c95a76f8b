#!/usr/bin/env python3
"""
wapilog - przetwarzanie logów użycia WAPI
Parser argumentów CLI i dyspozytor podkomend
"""

import argparse
import logging
import sys
from typing import List, Optional

from .config.settings import reload_settings, setup_logging
from .core.exceptions import ConfigError, FileError
from .core.types import ExitCode, LogLevel

logger = logging.getLogger(__name__)

HEURISTICS = ('time', 'page-stay', 'nav', 'time_total', 'page_stay', 'navigation_time')


def _add_sessionizer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--heuristic", choices=HEURISTICS, help="Heurystyka sesji (domyślnie z konfiguracji)")
    parser.add_argument("--delta", help="Próg czasu, np. 5m, 15m, 30m")
    parser.add_argument("--theta", help="Próg pobytu na stronie (page-stay), np. 10m")
    parser.add_argument("--app-open-pattern", dest="app_open_pattern", help='Wzorzec otwarcia, np. "/{app}/index.action"')
    parser.add_argument("--user-key", dest="user_key", action="append", choices=("client_ip", "user_agent"),
                        help="Pole klucza użytkownika (można powtarzać)")
    parser.add_argument("--time-reference", dest="time_reference", choices=("last_activity", "opening"))
    parser.add_argument("--ambiguity-policy", dest="ambiguity_policy", choices=("assign", "discard"))
    parser.add_argument("--absent-referer", dest="absent_referer", choices=("discard", "time_fallback"))


def create_cli_parser() -> argparse.ArgumentParser:
    """Tworzy parser argumentów CLI"""
    parser = argparse.ArgumentParser(
        prog="wapilog",
        description="Przetwarzanie logów użycia WAPI: parsowanie, czyszczenie, sesje, jakość",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", help="Dokument konfiguracji TOML (domyślnie WAPILOG_CONFIG)")
    parser.add_argument("--log-level", dest="log_level", choices=[level.value for level in LogLevel])
    parser.add_argument("-v", "--verbose", action="store_true", help="Szczegółowe logi (DEBUG)")
    parser.add_argument("--show-config", dest="show_config", action="store_true",
                        help="Wyświetl konfigurację przed wykonaniem komendy")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="Surowe logi -> entries.jsonl + diagnostyki")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", dest="log_format", help="Format Apache, np. '%%h %%l %%u %%t \"%%r\" %%>s %%b'")
    p.add_argument("--on-error", dest="on_error", choices=("skip", "halt"))
    p.add_argument("--out", default="entries.jsonl", help="Plik wynikowy lub '-' (stdout)")
    p.add_argument("--diag", help="Plik diagnostyk JSONL")

    p = sub.add_parser("preprocess", help="Fuzja, czyszczenie, naprawa czasu, generalizacja")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--rules", help="Reguły TOML ([clean], [[generalize]])")
    p.add_argument("--repair-timestamps", dest="repair_timestamps", action="store_true")
    p.add_argument("--reorder-window", dest="reorder_window", help="Okno porządkowania źródła, np. 1m, 10s")
    p.add_argument("--out", default="clean.jsonl")
    p.add_argument("--dropped", help="Plik z wpisami odrzuconymi przez czyszczenie")

    p = sub.add_parser("sessionize", help="Rekonstrukcja sesji")
    p.add_argument("input")
    _add_sessionizer_flags(p)
    p.add_argument("--log-format", dest="log_format", help="Format logu (obecność referera)")
    p.add_argument("--out", default="sessions.jsonl")

    p = sub.add_parser("quality", help="Raport jakości logu")
    p.add_argument("inputs", nargs="+", help="entries.jsonl [diag.jsonl]")
    p.add_argument("--log-format", dest="log_format")
    p.add_argument("--profile", choices=("nav-sessionization", "time-sessionization", "user-distinction"))
    p.add_argument("--id-locator", dest="id_locator", action="append", help="query:<klucz> lub path:<regex>")
    p.add_argument("--format", dest="output_format", choices=("json", "text"), default="json")
    p.add_argument("--corpus-id", dest="corpus_id")
    p.add_argument("--fail-on-critical", dest="fail_on_critical", action="store_true")
    p.add_argument("--out", default="report.json")

    p = sub.add_parser("stats", help="Statystyki sesji")
    p.add_argument("input")
    p.add_argument("--min-size", dest="min_size", type=int)
    p.add_argument("--per-app", dest="per_app", action="store_true")
    _add_sessionizer_flags(p)
    p.add_argument("--out", default="stats.json")

    p = sub.add_parser("compare", help="Porównanie heurystyk (CSV)")
    p.add_argument("input")
    p.add_argument("--configs", required=True, help="TOML z tablicami [[configs]]")
    p.add_argument("--min-size", dest="min_size", type=int)
    p.add_argument("--log-format", dest="log_format")
    p.add_argument("--out", default="table.csv")

    p = sub.add_parser("synth", help="Syntetyczny log z danymi referencyjnymi")
    p.add_argument("--preset", choices=("golden", "msf", "widp", "development"), default="golden")
    p.add_argument("--users", type=int)
    p.add_argument("--visits-per-user", dest="visits_per_user", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--proxy-fraction", dest="proxy_fraction", type=float)
    p.add_argument("--concurrent-open-rate", dest="concurrent_open_rate", type=float)
    p.add_argument("--app-id-coverage", dest="app_id_coverage", type=float)
    p.add_argument("--corruption-rate", dest="corruption_rate", type=float)
    p.add_argument("--ambiguous-rate", dest="ambiguous_rate", type=float)
    p.add_argument("--orphan-rate", dest="orphan_rate", type=float)
    p.add_argument("--out", default="corpus.log")
    p.add_argument("--truth", help="Plik JSONL z etykietami referencyjnymi")

    p = sub.add_parser("score", help="Ocena sesji względem danych referencyjnych")
    p.add_argument("--truth", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--out", default="score.json")

    p = sub.add_parser("run", help="Cały potok: parse -> ... -> stats + quality")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.add_argument("--out", help="Plik sesji zamiast <out-dir>/sessions.jsonl lub '-' (stdout)")
    p.add_argument("--log-format", dest="log_format")
    p.add_argument("--on-error", dest="on_error", choices=("skip", "halt"))
    p.add_argument("--rules")
    p.add_argument("--repair-timestamps", dest="repair_timestamps", action="store_true")
    p.add_argument("--reorder-window", dest="reorder_window", help="Okno porządkowania źródła, np. 1m, 10s")
    _add_sessionizer_flags(p)
    p.add_argument("--min-size", dest="min_size", type=int)
    p.add_argument("--per-app", dest="per_app", action="store_true")
    p.add_argument("--corpus-id", dest="corpus_id")
    p.add_argument("--fail-on-critical", dest="fail_on_critical", action="store_true")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Główna funkcja; zwraca kod wyjścia"""
    parser = create_cli_parser()
    args = parser.parse_args(argv)

    try:
        settings = reload_settings(config_file=args.config)
    except ConfigError as e:
        print(f"❌ {e.message}", file=sys.stderr)
        for problem in e.details.get('validation_errors', []):
            print(f"  - {problem}", file=sys.stderr)
        return ExitCode.CONFIG_ERROR
    except FileError as e:
        print(f"❌ {e.message}", file=sys.stderr)
        return ExitCode.IO_ERROR

    setup_logging(settings, "DEBUG" if args.verbose else args.log_level)
    if args.show_config:
        settings.print_summary()

    from .cli.commands import CLICommands

    command_args = {k: v for k, v in vars(args).items()
                    if k not in ('command', 'config', 'log_level', 'verbose', 'show_config')}
    handler_name = args.command.replace('-', '_')

    try:
        with CLICommands(settings) as cli:
            code = getattr(cli, handler_name)(command_args)
            if args.verbose:
                cli.print_session_summary()
            return code
    except KeyboardInterrupt:
        logger.warning("Przerwano przez użytkownika")
        return 1


if __name__ == "__main__":
    sys.exit(main())
