# core/types.py
"""
Definicje typów danych dla WapiLogAnalyzer
Kształty rekordów JSON/JSONL wymienianych między komendami CLI
"""

from enum import Enum
from typing import TypedDict, List, Optional, Any


class LogLevel(Enum):
    """Poziomy logowania"""
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class ExitCode:
    """Kody wyjścia CLI"""
    OK = 0
    CONFIG_ERROR = 2
    IO_ERROR = 3
    CRITICAL_ISSUE = 4
    DATA_ERROR = 5


# === REKORDY JSONL ===

class TimestampRecord(TypedDict):
    """Znacznik czasu w postaci kanonicznej"""
    epoch_millis: int
    declared_granularity: str


class RequestRecord(TypedDict):
    """Linia żądania HTTP"""
    method: str
    path: str
    query: List[List[str]]
    protocol: str


class EntryRecord(TypedDict, total=False):
    """Jeden wpis logu (opcjonalne pola pomijane gdy brak wartości)"""
    client_ip: str
    timestamp: TimestampRecord
    request: RequestRecord
    status: int
    object_size: int
    referer: str
    user_agent: str
    duration: int
    source_id: str
    file_order: int
    generalized_path: str
    repaired: bool


class DiagnosticRecord(TypedDict):
    """Diagnostyka parsera"""
    source_id: str
    line_number: int
    kind: str
    raw_line: str
    detail: str


class SessionRecord(TypedDict, total=False):
    """Zrekonstruowana sesja"""
    session_id: str
    app: Optional[str]
    user_key: Optional[str]
    opened_at: TimestampRecord
    closed_at: TimestampRecord
    entries: List[EntryRecord]
    ambiguous: List[List[Any]]


class DiscardedRecord(TypedDict):
    """Wpis odrzucony przez heurystykę"""
    entry: EntryRecord
    reason: str


class TruthRecord(TypedDict, total=False):
    """Etykieta referencyjna generatora"""
    source_id: str
    file_order: int
    session_id: Optional[str]
    app: Optional[str]
    user: str
    true_epoch_millis: int
    has_app_id: bool

