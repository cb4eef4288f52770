"""Discrete-event simulator for the L-MAC location-aware sensor network MAC."""
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .engine import Simulator, build, run
from .geometry import BlockGrid, BlockId, Position
from .metrics import Mode, SummaryReport
from .schedule import default_schedule, verify_schedule

__all__ = [
    "BlockGrid", "BlockId", "ConfigError", "Mode", "Position", "ScenarioConfig",
    "Simulator", "SummaryReport", "build", "default_schedule", "load_config",
    "parse_config", "run", "verify_schedule",
]
__version__ = "0.1.0"
