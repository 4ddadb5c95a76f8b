import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT))

from WapiLogAnalyzer.config.settings import Settings, reload_settings
from WapiLogAnalyzer.core.exceptions import ConfigError, ConfigValidationError, LogStreamError
from WapiLogAnalyzer.core.types import LogLevel

ENV_KEYS = ("WAPILOG_CONFIG", "WAPILOG_LOG_LEVEL", "WAPILOG_LOG_TO_FILE", "WAPILOG_DEFAULT_DELTA",
            "WAPILOG_DEFAULT_FORMAT", "WAPILOG_LOG_MAX_FILE_SIZE_MB", "WAPILOG_LOG_BACKUP_COUNT")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)
    monkeypatch.chdir(tmp_path)


def write(tmp_path, text, name="wapilog.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults():
    settings = Settings()
    assert settings.get("sessionize.delta") == "30m"
    assert settings.get("stats.min_size") == 3
    assert settings.get("logging.level") is LogLevel.INFO
    assert settings.get("logging.log_to_file") is False
    assert settings.get_validation_errors() == []


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("WAPILOG_DEFAULT_DELTA", "15m")
    monkeypatch.setenv("WAPILOG_LOG_LEVEL", "debug")
    settings = Settings()
    assert settings.get("sessionize.delta") == "15m"
    assert settings.get("logging.level") is LogLevel.DEBUG


def test_unknown_log_level_falls_back_to_info(monkeypatch):
    monkeypatch.setenv("WAPILOG_LOG_LEVEL", "chatty")
    assert Settings().get("logging.level") is LogLevel.INFO


def test_invalid_environment_is_rejected(monkeypatch):
    monkeypatch.setenv("WAPILOG_DEFAULT_DELTA", "soon")
    with pytest.raises(ConfigValidationError):
        Settings()


def test_file_overrides_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("WAPILOG_DEFAULT_DELTA", "15m")
    path = write(tmp_path, """
[sessionize]
heuristic = "time"
delta = "5m"

[stats]
min_size = 5

[clean]
drop_status = [404]

[logging]
level = "warning"
""")
    settings = Settings(config_file=path)
    assert settings.get("sessionize.delta") == "5m"
    assert settings.get("sessionize.heuristic") == "time"
    assert settings.get("stats.min_size") == 5
    assert settings.get("rules.clean") == {"drop_status": [404]}
    assert settings.get("logging.level") is LogLevel.WARNING
    assert settings.config_file == path


def test_config_path_from_environment(tmp_path, monkeypatch):
    path = write(tmp_path, '[stats]\nmin_size = 7\n')
    monkeypatch.setenv("WAPILOG_CONFIG", str(path))
    assert reload_settings().get("stats.min_size") == 7


def test_load_file_errors(tmp_path):
    with pytest.raises(LogStreamError):
        Settings(config_file=tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        Settings(config_file=write(tmp_path, "[sessionize\n", "broken.toml"))
    with pytest.raises(ConfigValidationError) as exc_info:
        Settings(config_file=write(tmp_path, "[scraper]\nterm = 10\n", "unknown.toml"))
    assert "[scraper]" in exc_info.value.details["validation_errors"][0]
    with pytest.raises(ConfigValidationError):
        Settings(config_file=write(tmp_path, '[logging]\nlevel = "loud"\n', "level.toml"))
    with pytest.raises(ConfigValidationError):
        Settings(config_file=write(tmp_path, "[stats]\nmin_size = -1\n", "min_size.toml"))


def test_get_set_and_section():
    settings = Settings()
    with pytest.raises(ConfigError):
        settings.get("sessionize.missing")
    assert settings.get("sessionize.missing", "fallback") == "fallback"

    settings.set("quality.profile", "user-distinction")
    assert settings.get("quality.profile") == "user-distinction"

    section = settings.section("sessionize")
    section["delta"] = "1h"
    assert settings.get("sessionize.delta") == "30m"


def test_to_dict_converts_enums():
    data = Settings().to_dict()
    assert data["logging"]["level"] == "INFO"
    assert data["parse"]["on_error"] == "skip_and_record"
