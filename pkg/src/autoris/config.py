"""Flat ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, vectors are comma separated.
Every key, its default and its unit are listed in ``docs/config.md``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .agent import AgentConfig
from .geometry import SPEED_OF_LIGHT, free_space_reference_power
from .phy import TxConfig, dbm_to_watt, thermal_noise_watt

ARMS = ("aris", "aris_ref1", "aris_ref2", "random")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class ExperimentConfig:
    # run
    arm: str = "aris"
    seed: int = 0
    steps: int = 500
    snapshots: int = 32
    step_period: float = 0.01  # s
    speed: float = 0.0  # m/s, UEs and clusters
    output: str = "run.csv"
    # scenario
    num_users: int = 2
    bs_antennas: int = 4
    ris_hor: int = 4
    ris_ver: int = 8
    clusters_per_link: int = 3
    bs_position: tuple[float, float, float] = (0.0, 0.0, 35.0)
    ris_position: tuple[float, float, float] = (-50.0, 0.0, 10.0)
    ue_area: tuple[float, float] = (100.0, 50.0)
    ue_height: float = 1.0
    cluster_region: tuple[float, float, float] = (200.0, 100.0, 50.0)
    # radio
    carrier_frequency: float = 2.4e9  # Hz
    pathloss_exponent: float = 1.0
    reference_power: float = 0.0  # linear; 0 selects the free-space gain at 1 m
    p_bs_dbm: float = 30.0
    p_ue_dbm: float = 10.0
    bandwidth: float = 20e6  # Hz
    noise_density_dbm_hz: float = -174.0
    # sensing and recovery
    sensing_layout: str = "first_row_and_column"
    sensing_indices: tuple[int, ...] = ()
    grid_hor: int = 64
    grid_ver: int = 64
    bs_paths: int = 0  # 0 selects 1 + clusters_per_link
    ue_paths: int = 0
    least_squares_beta: bool = False
    # agent
    gamma: float = 0.9
    eps_start: float = 1.0
    eps_decay: float = 0.99
    eps_floor: float = 0.05
    replay_capacity: int = 2048
    batch_size: int = 64
    train_period: int = 32
    train_passes: int = 2
    learning_rate: float = 1e-3
    recompute_q: bool = True
    offset_init: bool = True
    action_scale: str = "unit_modulus"
    width1: int = 128
    width2: int = 64
    head_width: int = 128
    leaky_slope: float = 0.01
    dropout: float = 0.2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.arm not in ARMS:
            raise ConfigError(f"arm must be one of {ARMS}, got {self.arm!r}")
        if self.steps < 1 or self.snapshots < 1:
            raise ConfigError("steps and snapshots must be >= 1")
        if self.step_period <= 0:
            raise ConfigError("step_period must be positive")
        if self.speed < 0:
            raise ConfigError("speed must be non-negative")
        if min(self.num_users, self.bs_antennas, self.ris_hor, self.ris_ver) < 1:
            raise ConfigError("array sizes and user count must be >= 1")
        if self.num_users > self.bs_antennas:
            raise ConfigError("cannot precode more users than BS antennas")
        if self.sensing_layout not in ("first_row_and_column", "explicit"):
            raise ConfigError(f"unknown sensing_layout {self.sensing_layout!r}")
        try:
            self.agent_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        n_sense = (len(self.sensing_indices) if self.sensing_layout == "explicit"
                   else self.ris_hor + self.ris_ver - 1)
        if max(self.bs_path_count, self.ue_path_count) > n_sense:
            raise ConfigError("more paths requested than sensing elements can resolve")

    @property
    def num_elements(self) -> int:
        return self.ris_hor * self.ris_ver

    @property
    def bs_path_count(self) -> int:
        return self.bs_paths or self.clusters_per_link + 1

    @property
    def ue_path_count(self) -> int:
        return self.ue_paths or self.clusters_per_link + 1

    def resolved_reference_power(self) -> float:
        return self.reference_power or free_space_reference_power(self.carrier_frequency, SPEED_OF_LIGHT)

    def tx(self) -> TxConfig:
        return TxConfig(
            p_bs=dbm_to_watt(self.p_bs_dbm),
            p_ue=dbm_to_watt(self.p_ue_dbm),
            noise_var=thermal_noise_watt(self.bandwidth, self.noise_density_dbm_hz),
        )

    def agent_config(self) -> AgentConfig:
        names = {f.name for f in fields(AgentConfig)}
        return AgentConfig(**{k: getattr(self, k) for k in names if hasattr(self, k)})

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


def _coerce(name: str, text: str, default):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = [p for p in text.replace(" ", "").split(",") if p]
            conv = int if name == "sensing_indices" else float
            return tuple(conv(p) for p in parts)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse_config(text: str, **overrides) -> ExperimentConfig:
    defaults = ExperimentConfig()
    known = {f.name: getattr(defaults, f.name) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value, known[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(p.read_text(), **overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            val = ", ".join(repr(x) for x in val)
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"
