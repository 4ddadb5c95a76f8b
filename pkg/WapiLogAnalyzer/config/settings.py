"""
Konfiguracja aplikacji WapiLogAnalyzer
Kolejność: zmienne środowiskowe (.env) -> dokument TOML (WAPILOG_CONFIG / --config) -> flagi CLI
"""

import copy
import logging
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import load_dotenv

from ..core.exceptions import ConfigError, ConfigValidationError, LogStreamError, WapiLogError, parse_duration
from ..core.types import LogLevel

FILE_SECTIONS = ('logging', 'parse', 'preprocess', 'clean', 'generalize', 'generalize_options',
                 'sessionize', 'quality', 'stats')
RULE_SECTIONS = ('clean', 'generalize', 'generalize_options')
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DEFAULT_FORMAT = '%h %l %u %t "%r" %>s %b "%{Referer}i" "%{User-Agent}i"'


def get_bool_env(key: str, default: bool = False) -> bool:
    """Pobiera zmienną środowiskową jako bool"""
    value = os.getenv(key, str(default)).lower()
    return value in ('true', '1', 'yes', 'on', 'tak')


def get_int_env(key: str, default: int) -> int:
    """Pobiera zmienną środowiskową jako int"""
    try:
        return int(os.getenv(key, str(default)))
    except (ValueError, TypeError):
        return default


def _merge(target: Dict[str, Any], source: Dict[str, Any]) -> None:
    for key, value in source.items():
        if isinstance(value, dict) and isinstance(target.get(key), dict):
            _merge(target[key], value)
        else:
            target[key] = value


class Settings:
    """Główna klasa konfiguracji aplikacji"""

    def __init__(self, env_file: Optional[str] = None, config_file: Optional[Union[str, Path]] = None):
        """
        Inicjalizuje konfigurację

        Args:
            env_file: ścieżka do pliku .env (opcjonalne)
            config_file: dokument TOML; domyślnie z WAPILOG_CONFIG
        """
        # load_dotenv nie nadpisuje zmiennych już ustawionych
        if env_file:
            load_dotenv(env_file)
        else:
            load_dotenv()

        self._config = self._load_config()
        self.config_file: Optional[Path] = None

        config_file = config_file or os.getenv('WAPILOG_CONFIG')
        if config_file:
            self.load_file(config_file)

        self._validate_config()

    @staticmethod
    def _load_config() -> Dict[str, Any]:
        """Ładuje konfigurację ze zmiennych środowiskowych"""
        log_level_str = os.getenv('WAPILOG_LOG_LEVEL', 'INFO').upper()
        try:
            log_level = LogLevel(log_level_str)
        except ValueError:
            log_level = LogLevel.INFO

        return {
            'logging': {
                'level': log_level,
                'log_to_file': get_bool_env('WAPILOG_LOG_TO_FILE', False),
                'log_dir': os.getenv('WAPILOG_LOG_DIR', 'logs'),
                'max_file_size_mb': get_int_env('WAPILOG_LOG_MAX_FILE_SIZE_MB', 50),
                'backup_count': get_int_env('WAPILOG_LOG_BACKUP_COUNT', 5),
            },
            'parse': {
                'format': os.getenv('WAPILOG_DEFAULT_FORMAT', DEFAULT_FORMAT),
                'on_error': 'skip_and_record',
            },
            'preprocess': {
                'repair_timestamps': False,
                'reorder_window': '1m',
            },
            'rules': {},
            'sessionize': {
                'heuristic': 'navigation_time',
                'delta': os.getenv('WAPILOG_DEFAULT_DELTA', '30m'),
            },
            'quality': {},
            'stats': {
                'min_size': 3,
            },
        }

    def load_file(self, path: Union[str, Path]) -> None:
        """Nakłada dokument TOML na konfigurację ze środowiska"""
        path = Path(path)
        try:
            with open(path, 'rb') as handle:
                document = tomllib.load(handle)
        except OSError as e:
            raise LogStreamError(f"Nie można odczytać konfiguracji {path}: {e}", source_id=str(path))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Nieprawidłowy plik konfiguracji {path}: {e}")

        unknown = sorted(set(document) - set(FILE_SECTIONS))
        if unknown:
            raise ConfigValidationError(
                f"Nieznane sekcje w {path}",
                validation_errors=[f"nieznana sekcja [{name}]" for name in unknown]
            )

        for section, value in document.items():
            if section in RULE_SECTIONS:
                self._config['rules'][section] = value
            elif section == 'logging' and 'level' in value:
                value = dict(value)
                try:
                    value['level'] = LogLevel(str(value['level']).upper())
                except ValueError:
                    raise ConfigValidationError(f"Nieznany poziom logowania: {value['level']}")
                _merge(self._config['logging'], value)
            else:
                _merge(self._config[section], value)

        self.config_file = path
        logging.getLogger(__name__).debug(f"Wczytano konfigurację z {path}")

    def _validate_config(self) -> None:
        """Waliduje konfigurację i rzuca wyjątki w przypadku błędów"""
        errors = []

        if self._config['logging']['max_file_size_mb'] < 1:
            errors.append(f"WAPILOG_LOG_MAX_FILE_SIZE_MB zbyt mały: {self._config['logging']['max_file_size_mb']} (min: 1)")

        if self._config['logging']['backup_count'] < 0:
            errors.append(f"WAPILOG_LOG_BACKUP_COUNT ujemny: {self._config['logging']['backup_count']}")

        if not str(self._config['parse'].get('format', '')).strip():
            errors.append("parse.format nie może być pusty")

        try:
            parse_duration(self._config['sessionize'].get('delta'), 'sessionize.delta')
        except WapiLogError as e:
            errors.append(e.message)

        min_size = self._config['stats'].get('min_size')
        if not isinstance(min_size, int) or min_size < 0:
            errors.append(f"stats.min_size musi być nieujemną liczbą całkowitą: {min_size!r}")

        if errors:
            raise ConfigValidationError(
                f"Znaleziono {len(errors)} błędów konfiguracji",
                details={'validation_errors': errors}
            )

    def get(self, key: str, default: Any = None) -> Any:
        """
        Pobiera wartość konfiguracji

        Args:
            key: klucz w formacie 'section.key' np. 'sessionize.delta'
            default: wartość domyślna

        Returns:
            Wartość konfiguracji
        """
        try:
            value = self._config
            for part in key.split('.'):
                value = value[part]
            return value
        except (KeyError, TypeError):
            if default is not None:
                return default
            raise ConfigError(f"Nie znaleziono klucza konfiguracji: {key}")

    def set(self, key: str, value: Any) -> None:
        """Ustawia wartość konfiguracji (runtime only)"""
        parts = key.split('.')
        config = self._config

        for part in parts[:-1]:
            if part not in config:
                config[part] = {}
            config = config[part]

        config[parts[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        """Kopia sekcji (np. 'sessionize') do budowy obiektów konfiguracji"""
        return copy.deepcopy(self._config.get(name, {}))

    @property
    def config(self) -> Dict[str, Any]:
        return self._config

    def print_summary(self) -> None:
        """Wyświetla podsumowanie konfiguracji na stderr"""
        out = sys.stderr
        print("=" * 70, file=out)
        print("🔧 KONFIGURACJA WAPILOG", file=out)
        print("=" * 70, file=out)
        print(f"Plik konfiguracji: {self.config_file or '-'}", file=out)
        print(f"Format logu:       {self.get('parse.format')}", file=out)
        print(f"Błędy parsowania:  {self.get('parse.on_error')}", file=out)
        print(f"Naprawa czasu:     {'✅' if self.get('preprocess.repair_timestamps') else '❌'}", file=out)
        print(f"Heurystyka:        {self.get('sessionize.heuristic')} ({self.get('sessionize.delta')})", file=out)
        print(f"Min. rozmiar sesji: {self.get('stats.min_size')}", file=out)
        print(f"Poziom logów:      {self.get('logging.level').value}", file=out)
        print(f"Logi do pliku:     {'✅' if self.get('logging.log_to_file') else '❌'}", file=out)
        print("=" * 70, file=out)

    def get_validation_errors(self) -> List[str]:
        """Zwraca listę błędów walidacji (bez rzucania wyjątków)"""
        try:
            self._validate_config()
        except ConfigValidationError as e:
            return list(e.details.get('validation_errors', [str(e)]))
        return []

    def to_dict(self) -> Dict[str, Any]:
        """Zwraca konfigurację jako słownik (dla serializacji)"""

        def convert_enums(obj):
            if hasattr(obj, 'value'):
                return obj.value
            elif isinstance(obj, dict):
                return {k: convert_enums(v) for k, v in obj.items()}
            elif isinstance(obj, list):
                return [convert_enums(item) for item in obj]
            return obj

        return convert_enums(self._config)


# === GLOBALNA INSTANCJA KONFIGURACJI ===

_settings_instance: Optional[Settings] = None


def get_settings(env_file: Optional[str] = None, config_file: Optional[Union[str, Path]] = None) -> Settings:
    """Zwraca globalną instancję ustawień (argumenty liczą się tylko przy pierwszym wywołaniu)"""
    global _settings_instance

    if _settings_instance is None:
        _settings_instance = Settings(env_file, config_file)

    return _settings_instance


def reload_settings(env_file: Optional[str] = None, config_file: Optional[Union[str, Path]] = None) -> Settings:
    """Wymusza przeładowanie konfiguracji"""
    global _settings_instance
    _settings_instance = Settings(env_file, config_file)
    return _settings_instance


def setup_logging(settings: Settings, level_override: Optional[str] = None) -> None:
    """
    Konfiguruje system logowania na podstawie ustawień

    Args:
        settings: instancja Settings
        level_override: poziom z flagi --log-level / --verbose
    """
    level_name = level_override.upper() if level_override else settings.get('logging.level').value
    log_level = getattr(logging, level_name, logging.INFO)

    # stderr, żeby `--out -` zostało czyste
    logging.basicConfig(level=log_level, format=LOG_FORMAT, stream=sys.stderr, force=True)

    if settings.get('logging.log_to_file'):
        from logging.handlers import RotatingFileHandler

        log_dir = Path(settings.get('logging.log_dir'))
        log_dir.mkdir(parents=True, exist_ok=True)

        file_handler = RotatingFileHandler(
            log_dir / 'wapilog.log',
            maxBytes=settings.get('logging.max_file_size_mb') * 1024 * 1024,
            backupCount=settings.get('logging.backup_count'),
            encoding='utf-8'
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(file_handler)
