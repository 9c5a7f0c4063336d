"""Core engine for uavchain."""

from .config import ConfigError, ConfigParseError, ConfigValidationError, SimConfig, load_config
from .engine import Simulation, run
from .runner import RunResult, SweepRunner, SweepSpec

__all__ = [
    "ConfigError",
    "ConfigParseError",
    "ConfigValidationError",
    "RunResult",
    "Simulation",
    "SimConfig",
    "SweepRunner",
    "SweepSpec",
    "load_config",
    "run",
]
