"""Moduł CLI"""
from .commands import CLICommands, PipelineConfig

__all__ = ['CLICommands', 'PipelineConfig']
