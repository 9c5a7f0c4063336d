"""Command implementations and output formats for the CLI."""

from . import formatters, parsers
from .base import (
    ExitCode,
    build_sweep_spec,
    cmd_run,
    cmd_sweep,
    cmd_verify_chain,
    exit_code_for,
    format_error_message,
    resolve_config,
)

__all__ = [
    "ExitCode",
    "build_sweep_spec",
    "cmd_run",
    "cmd_sweep",
    "cmd_verify_chain",
    "exit_code_for",
    "format_error_message",
    "formatters",
    "parsers",
    "resolve_config",
]
