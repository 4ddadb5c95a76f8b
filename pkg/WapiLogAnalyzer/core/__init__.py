"""
Core module for WapiLogAnalyzer
Wyjątki, typy rekordów i kody wyjścia
"""

from .exceptions import (
    ConfigError,
    ConfigValidationError,
    DataProcessingError,
    FileError,
    FormatConfigError,
    LogStreamError,
    OutputError,
    ParseHaltedError,
    RenderError,
    RuleConfigError,
    ScoringError,
    SessionizerConfigError,
    SynthConfigError,
    UnorderedInputError,
    WapiLogError,
)
from .types import ExitCode, LogLevel


__all__ = [
    'WapiLogError', 'ConfigError', 'ConfigValidationError', 'FormatConfigError', 'RuleConfigError',
    'SessionizerConfigError', 'SynthConfigError', 'FileError', 'LogStreamError', 'OutputError',
    'DataProcessingError', 'ParseHaltedError', 'UnorderedInputError', 'RenderError', 'ScoringError',
    'ExitCode', 'LogLevel',
]
