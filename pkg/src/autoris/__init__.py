"""Autonomous RIS simulator: geometric channels, partial-sensing recovery,
rate estimation and a DQN phase controller."""
from ._kernels import BACKEND
from .config import ARMS, ConfigError, ExperimentConfig, load_config, parse_config
from .harness import RunResult, emit_csv, run_episode, run_sweep

__version__ = "0.1.0"

__all__ = [
    "ARMS", "BACKEND", "ConfigError", "ExperimentConfig", "RunResult",
    "emit_csv", "load_config", "parse_config", "run_episode", "run_sweep",
]
