"""
Moduł konfiguracji - eksport głównych wartości
"""

from .settings import (
    DEFAULT_FORMAT,
    LOG_FORMAT,
    Settings,
    get_settings,
    reload_settings,
    setup_logging,
)

__all__ = ['DEFAULT_FORMAT', 'LOG_FORMAT', 'Settings', 'get_settings', 'reload_settings', 'setup_logging']
