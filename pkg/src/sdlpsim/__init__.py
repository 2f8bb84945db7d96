"""Deterministic vehicular-network simulator with a software-defined
location-privacy controller, pseudonym-changing strategies, and a passive
linking adversary."""

from .config import ScenarioConfig, default_config, load_config
from .runner import RunArtifacts, batch_run, compare_runs, replay_adversary, run_scenario

__version__ = "0.1.0"

__all__ = [
    "RunArtifacts",
    "ScenarioConfig",
    "batch_run",
    "compare_runs",
    "default_config",
    "load_config",
    "replay_adversary",
    "run_scenario",
]
