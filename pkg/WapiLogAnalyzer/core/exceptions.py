# core/exceptions.py
"""
Własne wyjątki dla WapiLogAnalyzer
"""

import re
from typing import Optional, Dict, Any


class WapiLogError(Exception):
    """Bazowy wyjątek dla wszystkich błędów WapiLogAnalyzer"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self):
        if self.details:
            return f"{self.message} (szczegóły: {self.details})"
        return self.message


# === BŁĘDY KONFIGURACJI ===

class ConfigError(WapiLogError):
    """Błąd konfiguracji"""
    pass


class ConfigValidationError(ConfigError):
    """Błąd walidacji konfiguracji"""

    def __init__(self, message: str, validation_errors: Optional[list] = None, **kwargs):
        details = kwargs.get('details', {})
        if validation_errors is not None:
            details['validation_errors'] = validation_errors
        super().__init__(message, details)


class FormatConfigError(ConfigError):
    """Nieprawidłowy format logu (np. zduplikowana dyrektywa)"""
    pass


class RuleConfigError(ConfigError):
    """Nieprawidłowe reguły czyszczenia lub generalizacji"""
    pass


class SessionizerConfigError(ConfigError):
    """Nieprawidłowa konfiguracja heurystyki sesji"""
    pass


class SynthConfigError(ConfigError):
    """Nieprawidłowa specyfikacja generatora logów"""
    pass


# === BŁĘDY PLIKÓW ===

class FileError(WapiLogError):
    """Błąd operacji na plikach"""
    pass


class LogStreamError(FileError):
    """Błąd odczytu strumienia logu (I/O, kodowanie)"""

    def __init__(self, message: str, source_id: Optional[str] = None, **kwargs):
        details = kwargs.get('details', {})
        details['source_id'] = source_id
        super().__init__(message, details)


class OutputError(FileError):
    """Błąd zapisu plików wynikowych"""
    pass


# === BŁĘDY PRZETWARZANIA DANYCH ===

class DataProcessingError(WapiLogError):
    """Błąd przetwarzania danych"""
    pass


class ParseHaltedError(DataProcessingError):
    """Parsowanie zatrzymane na pierwszej diagnostyce (polityka halt)"""

    def __init__(self, diagnostic):
        self.diagnostic = diagnostic
        super().__init__(
            f"Parsowanie zatrzymane w {diagnostic.source_id}:{diagnostic.line_number} ({diagnostic.kind.value})",
            details={'detail': diagnostic.detail}
        )


class UnorderedInputError(DataProcessingError):
    """Wpisy nie są uporządkowane chronologicznie"""
    pass


class RenderError(DataProcessingError):
    """Brak pola wymaganego przez format przy renderowaniu"""
    pass


class ScoringError(DataProcessingError):
    """Niezgodność rekonstrukcji i danych referencyjnych"""
    pass


# === FUNKCJE POMOCNICZE ===

_DURATION_UNITS = {'ms': 1, 's': 1000, 'm': 60_000, 'h': 3_600_000}
_DURATION_RE = re.compile(r'^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)?\s*$')


def parse_duration(value: Any, field: str = 'duration') -> int:
    """
    Zamienia opis czasu trwania na milisekundy

    Args:
        value: '250ms', '30s', '5m', '1h' lub liczba (minuty)
        field: nazwa pola do komunikatu błędu

    Returns:
        Czas w milisekundach

    Raises:
        ConfigValidationError: dla nieprawidłowego formatu
    """
    if isinstance(value, bool):
        raise ConfigValidationError(f"{field}: nieprawidłowy czas trwania: {value!r}")
    if isinstance(value, (int, float)):
        return int(value * _DURATION_UNITS['m'])

    match = _DURATION_RE.match(str(value))
    if not match:
        raise ConfigValidationError(f"{field}: nieprawidłowy czas trwania: {value!r} (oczekiwano np. 30s, 5m)")

    amount, unit = match.groups()
    return int(float(amount) * _DURATION_UNITS[unit or 'm'])


def format_duration(millis: int) -> str:
    """Odwrotność parse_duration dla etykiet (5m, 90s, 250ms)"""
    for unit in ('h', 'm', 's'):
        size = _DURATION_UNITS[unit]
        if millis >= size and millis % size == 0:
            return f"{millis // size}{unit}"
    return f"{millis}ms"


def validate_fraction(value: Any, field: str) -> float:
    """
    Waliduje ułamek z przedziału [0, 1]

    Raises:
        ConfigValidationError: gdy wartość spoza przedziału
    """
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigValidationError(f"{field}: oczekiwano liczby, otrzymano {value!r}")
    if not 0.0 <= number <= 1.0:
        raise ConfigValidationError(f"{field}: wartość {number} spoza przedziału [0, 1]")
    return number


def validate_positive(value: Any, field: str) -> int:
    """
    Waliduje dodatnią liczbę całkowitą

    Raises:
        ConfigValidationError: gdy wartość <= 0
    """
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ConfigValidationError(f"{field}: oczekiwano dodatniej liczby całkowitej, otrzymano {value!r}")
    return value
