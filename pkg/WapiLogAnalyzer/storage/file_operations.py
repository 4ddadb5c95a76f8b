"""
Operacje na plikach wejściowych i wynikowych
JSONL/JSON/CSV, zapis atomowy przez pliki tymczasowe, `-` jako standardowe wyjście
"""

import csv
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, IO, Iterable, Iterator, List, Sequence, Tuple, Union

from ..core.exceptions import LogStreamError, OutputError
from ..log_model import LogEntry, entry_from_record, entry_to_record
from ..parser import ParseDiagnostic
from ..sessionizer import Discarded, SessionEvent, discarded_to_record, iter_events_from_records, session_to_record

logger = logging.getLogger(__name__)

STDOUT = '-'
SPOOL_MAX_BYTES = 8 * 1024 * 1024
PathLike = Union[str, Path]


class OutputSet:
    """
    Zestaw plików wynikowych jednej komendy

    Każdy plik jest pisany do tymczasowego pliku obok docelowego; commit() podmienia
    wszystkie naraz, a wyjątek wewnątrz bloku `with` usuwa wszystkie pliki tymczasowe.
    """

    def __init__(self):
        self._pending: List[tuple] = []
        self._handles: List[IO[str]] = []
        self.committed: List[Path] = []

    def open(self, target: PathLike) -> IO[str]:
        """Zwraca uchwyt tekstowy dla ścieżki docelowej (lub stdout dla '-')"""
        if str(target) == STDOUT:
            return sys.stdout

        path = Path(target)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp_path = tempfile.mkstemp(prefix=f".{path.name}.", suffix='.tmp', dir=str(path.parent))
            handle = os.fdopen(fd, 'w', encoding='utf-8', newline='')
        except OSError as e:
            raise OutputError(f"Nie można utworzyć pliku wynikowego {path}: {e}")

        self._pending.append((tmp_path, path))
        self._handles.append(handle)
        return handle

    def commit(self) -> List[Path]:
        self._close_handles()
        try:
            for tmp_path, path in self._pending:
                os.replace(tmp_path, str(path))
                self.committed.append(path)
        except OSError as e:
            self.discard()
            raise OutputError(f"Nie można zapisać plików wynikowych: {e}")
        self._pending = []
        for path in self.committed:
            logger.debug(f"Zapisano {path}")
        return list(self.committed)

    def discard(self) -> None:
        """Usuwa pliki tymczasowe oraz wyniki podmienione w tej samej operacji"""
        self._close_handles()
        for tmp_path, _ in self._pending:
            try:
                os.unlink(tmp_path)
            except OSError:
                pass
        for path in self.committed:
            try:
                path.unlink()
            except OSError:
                pass
        if self._pending or self.committed:
            logger.debug(f"Usunięto częściowe wyniki ({len(self._pending) + len(self.committed)} plików)")
        self._pending = []
        self.committed = []

    def _close_handles(self) -> None:
        for handle in self._handles:
            if not handle.closed:
                handle.close()
        self._handles = []

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            self.discard()
        elif self._pending:
            self.commit()
        return False


# === ZAPIS ===

def dumps_record(record: Any) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(',', ':'))


def write_jsonl(handle: IO[str], records: Iterable[Any]) -> int:
    count = 0
    for record in records:
        handle.write(dumps_record(record))
        handle.write('\n')
        count += 1
    return count


def write_json(handle: IO[str], document: Any) -> None:
    handle.write(json.dumps(document, ensure_ascii=False, indent=2, sort_keys=True))
    handle.write('\n')


def write_csv(handle: IO[str], columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> None:
    writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def write_entries(handle: IO[str], entries: Iterable[LogEntry]) -> int:
    return write_jsonl(handle, (entry_to_record(e) for e in entries))


def write_diagnostics(handle: IO[str], diagnostics: Iterable[ParseDiagnostic]) -> int:
    return write_jsonl(handle, (d.to_record() for d in diagnostics))


# === ODCZYT ===

def read_jsonl(path: PathLike) -> Iterator[Dict[str, Any]]:
    """Generator rekordów JSONL; puste linie są pomijane"""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise LogStreamError(
                        f"Nieprawidłowy JSON w {path}:{line_number}: {e.msg}",
                        source_id=str(path), details={'line_number': line_number}
                    )
    except OSError as e:
        raise LogStreamError(f"Nie można odczytać {path}: {e}", source_id=str(path))


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except OSError as e:
        raise LogStreamError(f"Nie można odczytać {path}: {e}", source_id=str(path))
    except json.JSONDecodeError as e:
        raise LogStreamError(f"Nieprawidłowy JSON w {path}: {e.msg}", source_id=str(path))


def read_entries(path: PathLike) -> Iterator[LogEntry]:
    for record in read_jsonl(path):
        try:
            yield entry_from_record(record)
        except (KeyError, TypeError, ValueError) as e:
            raise LogStreamError(f"Nieprawidłowy rekord wpisu w {path}: {e}", source_id=str(path))


def read_diagnostics(path: PathLike) -> List[ParseDiagnostic]:
    try:
        return [ParseDiagnostic.from_record(r) for r in read_jsonl(path)]
    except (KeyError, TypeError, ValueError) as e:
        raise LogStreamError(f"Nieprawidłowy rekord diagnostyki w {path}: {e}", source_id=str(path))


def write_session_events(handle: IO[str], events: Iterable[SessionEvent]) -> Tuple[int, int]:
    """
    Zapisuje sesje w kolejności zamykania, a po nich odrzucone wpisy

    Odrzucone wpisy czekają w pliku tymczasowym (w pamięci do SPOOL_MAX_BYTES).

    Returns:
        (liczba sesji, liczba odrzuconych wpisów)
    """
    sessions = discarded = 0
    with tempfile.SpooledTemporaryFile(max_size=SPOOL_MAX_BYTES, mode='w+', encoding='utf-8', newline='') as spool:
        for event in events:
            if isinstance(event, Discarded):
                discarded += write_jsonl(spool, [discarded_to_record(event)])
            else:
                sessions += write_jsonl(handle, [session_to_record(event)])
        spool.seek(0)
        shutil.copyfileobj(spool, handle)
    return sessions, discarded


def read_session_events(path: PathLike) -> Iterator[SessionEvent]:
    """Generator sesji i odrzuconych wpisów z pliku sessions.jsonl"""
    try:
        yield from iter_events_from_records(read_jsonl(path))
    except (KeyError, TypeError, ValueError) as e:
        raise LogStreamError(f"Nieprawidłowy rekord sesji w {path}: {e}", source_id=str(path))


def looks_like_diagnostics(path: PathLike) -> bool:
    """Pierwszy rekord z polem 'kind' oznacza plik diagnostyk"""
    for record in read_jsonl(path):
        return isinstance(record, dict) and 'kind' in record and 'raw_line' in record
    return False


__all__ = [
    'OutputSet', 'STDOUT', 'dumps_record', 'write_jsonl', 'write_json', 'write_csv', 'write_entries',
    'write_diagnostics', 'write_session_events', 'read_jsonl', 'read_json', 'read_entries', 'read_diagnostics',
    'read_session_events', 'looks_like_diagnostics',
]
