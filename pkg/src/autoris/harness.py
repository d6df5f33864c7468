"""Episode loop, experiment arms and CSV output.

Arms:

``aris``
    Partial sensing, full-aperture recovery, estimated sum-rate as reward basis.
``aris_ref2``
    Noise-free full observations, estimated sum-rate.
``aris_ref1``
    Noise-free full observations, true sum-rate.
``random``
    i.i.d. uniform phases every step, no agent.

Random streams are split from ``seed`` as
``SeedSequence([seed, 0])`` for the scenario (shared by every arm, so arms
are compared on identical geometry), ``SeedSequence([seed, 1, arm_id])`` for
symbols and noise and ``SeedSequence([seed, 2, arm_id])`` for the agent, with
``arm_id`` the position of the arm in ``ARMS``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .agent import DQNAgent, build_state
from .config import ARMS, ExperimentConfig
from .geometry import advance_mobility, build_channels, random_geometry
from .nn import Network
from .phy import (
    draw_symbols,
    effective_channel,
    mmse_precoder,
    ris_sense_bs,
    ris_sense_ue,
    sensing_indices,
    unit_phase_vector,
)
from .rate import combined_observation, estimated_sum_rate, true_sum_rate, z_power
from .recovery import make_grid, recover_all

CSV_COLUMNS = (
    "step", "sim_time", "true_rate", "estimated_rate", "reward",
    "epsilon", "eta", "action", "arm", "seed",
)


@dataclass
class MetricsRow:
    step: int
    sim_time: float
    true_rate: float
    estimated_rate: float
    reward: float
    epsilon: float
    eta: float
    action: int
    arm: str
    seed: int


@dataclass
class RunResult:
    rows: list[MetricsRow]
    network: Network | None
    anomalies: list[str] = field(default_factory=list)
    rate_basis: list[float] = field(default_factory=list)
    config: ExperimentConfig | None = None


def streams(seed: int, arm: str):
    arm_id = ARMS.index(arm)
    geo = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    env = np.random.default_rng(np.random.SeedSequence([seed, 1, arm_id]))
    agent = np.random.default_rng(np.random.SeedSequence([seed, 2, arm_id]))
    return geo, env, agent


@lru_cache(maxsize=8)
def _sensing(n_hor, n_ver, layout_kind, indices, grid_hor, grid_ver):
    layout = sensing_indices(n_hor, n_ver, layout_kind, indices or None)
    return layout, make_grid(n_hor, n_ver, layout, (grid_hor, grid_ver))


def initial_geometry(cfg: ExperimentConfig, rng):
    return random_geometry(
        rng,
        num_users=cfg.num_users,
        clusters_per_link=cfg.clusters_per_link,
        speed=cfg.speed,
        bs_position=cfg.bs_position,
        ris_position=cfg.ris_position,
        ue_area=cfg.ue_area,
        ue_height=cfg.ue_height,
        cluster_region=cfg.cluster_region,
        bs_antennas=cfg.bs_antennas,
        ris_dims=(cfg.ris_hor, cfg.ris_ver),
        carrier_frequency=cfg.carrier_frequency,
        pathloss_exponent=cfg.pathloss_exponent,
        reference_power=cfg.resolved_reference_power(),
    )


def run_episode(cfg: ExperimentConfig) -> RunResult:
    """Simulate ``cfg.steps`` RIS decisions for one arm and seed."""
    cfg.validate()
    geo_rng, env_rng, agent_rng = streams(cfg.seed, cfg.arm)
    geom = initial_geometry(cfg, geo_rng)
    tx = cfg.tx()
    K, N, T = cfg.num_users, cfg.num_elements, cfg.snapshots
    layout, grid = _sensing(cfg.ris_hor, cfg.ris_ver, cfg.sensing_layout,
                            tuple(cfg.sensing_indices), cfg.grid_hor, cfg.grid_ver)
    agent = None if cfg.arm == "random" else DQNAgent(N, K, cfg.agent_config(), agent_rng)
    v = np.ones(N, dtype=complex)
    rows: list[MetricsRow] = []
    basis_log: list[float] = []
    anomalies: list[str] = []
    nan = float("nan")

    for t in range(cfg.steps):
        ch = build_channels(geom)
        H = effective_channel(ch.H_R, v, ch.h)
        F = mmse_precoder(H, tx)
        r_true = true_sum_rate(H, F, tx)

        if agent is None:
            rows.append(MetricsRow(t, t * cfg.step_period, r_true, nan, nan, nan, nan, -1, cfg.arm, cfg.seed))
            basis_log.append(nan)
            v = unit_phase_vector(agent_rng.uniform(0.0, 2.0 * np.pi, N))
            geom = advance_mobility(geom, cfg.step_period)
            continue

        s, x = draw_symbols(env_rng, K, tx, T)
        if cfg.arm == "aris":
            y_bs, _ = ris_sense_bs(ch.H_R, F, s, layout, tx.noise_var, env_rng)
            y_ue = [ris_sense_ue(ch.h[k], x[k], layout, tx.noise_var, env_rng)[0] for k in range(K)]
            bs_obs, ue_obs = recover_all(y_bs, y_ue, grid, cfg.bs_path_count, cfg.ue_path_count,
                                         cfg.least_squares_beta)
            y_R = bs_obs.y_hat
            y_k = [o.y_hat for o in ue_obs]
        else:
            y_R = ch.H_R @ (F @ s)
            y_k = [np.multiply.outer(ch.h[k], x[k]) for k in range(K)]

        r_est = estimated_sum_rate([z_power(combined_observation(y_R, v, yk)) for yk in y_k], tx)
        basis = r_true if cfg.arm == "aris_ref1" else r_est
        state = build_state(y_R, y_k, v)
        v, info = agent.step(state, basis, v)
        rows.append(MetricsRow(t, t * cfg.step_period, r_true, r_est, info.reward,
                               info.epsilon, info.eta, info.action, cfg.arm, cfg.seed))
        basis_log.append(basis)
        geom = advance_mobility(geom, cfg.step_period)

    if agent is not None:
        anomalies.extend(agent.anomalies)
    for row in rows:
        if not math.isfinite(row.true_rate):
            anomalies.append(f"step {row.step}: non-finite true rate")
    return RunResult(rows, agent.net if agent else None, anomalies, basis_log, cfg)


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_csv(result, destination) -> None:
    """Write the metrics of one or more runs (header + one line per row)."""
    rows = result.rows if isinstance(result, RunResult) else [r for res in result for r in res.rows]
    with open(destination, "w", newline="") as fh:
        fh.write(csv_text(rows))


def read_csv(path) -> list[MetricsRow]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            out.append(MetricsRow(
                int(rec["step"]), float(rec["sim_time"]), float(rec["true_rate"]),
                float(rec["estimated_rate"]), float(rec["reward"]), float(rec["epsilon"]),
                float(rec["eta"]), int(rec["action"]), rec["arm"], int(rec["seed"]),
            ))
    return out


def run_sweep(cfg: ExperimentConfig, arms, seeds, jobs: int = 1) -> list[RunResult]:
    """Independent (arm, seed) runs, optionally in worker processes."""
    configs = [cfg.replace(arm=a, seed=s) for a in arms for s in seeds]
    if jobs <= 1:
        return [run_episode(c) for c in configs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_episode, configs))
