"""
DUALID scenarios: configuration, simulation engine, runners, metrics and reports.
"""

from .config import ScenarioConfig, load_config, parse_config_text
from .runner import run_scenario

__all__ = [
    "ScenarioConfig",
    "load_config",
    "parse_config_text",
    "run_scenario",
]
