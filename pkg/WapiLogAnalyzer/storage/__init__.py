"""Moduł storage"""
from .file_operations import (
    STDOUT,
    OutputSet,
    read_diagnostics,
    read_entries,
    read_json,
    read_jsonl,
    write_csv,
    write_diagnostics,
    write_entries,
    write_json,
    write_jsonl,
)

__all__ = [
    'STDOUT', 'OutputSet', 'read_diagnostics', 'read_entries', 'read_json', 'read_jsonl',
    'write_csv', 'write_diagnostics', 'write_entries', 'write_json', 'write_jsonl',
]
