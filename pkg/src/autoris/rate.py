"""True and observation-based downlink sum-rates.

Rates are in bits/s/Hz. The observation-based estimate is the one the RIS
can form on its own: it only needs the recovered BS and UE signals, the
phase vector, the UE power and the noise variance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .phy import TxConfig


@dataclass
class RateReport:
    true_rate: float
    estimated_rate: float
    per_user_true: list[float] = field(default_factory=list)
    per_user_estimated: list[float] = field(default_factory=list)
    z_power: list[float] = field(default_factory=list)


def per_user_true_rates(H, F, tx: TxConfig) -> np.ndarray:
    """SINR-based rate of every user for effective UL matrix ``H`` (M x K)."""
    G = np.abs(H.conj().T @ F) ** 2  # G[k, j] = |h_k^H f_j|^2
    signal = tx.p_bs * np.diag(G)
    interference = tx.p_bs * (G.sum(axis=1) - np.diag(G))
    return np.log2(1.0 + signal / (interference + tx.noise_var))


def true_sum_rate(H, F, tx: TxConfig) -> float:
    return float(np.sum(per_user_true_rates(H, F, tx)))


def combined_observation(y_R, v, y_k):
    """``y_R^H diag(v) y_k``; with ``(N, T)`` inputs, one value per snapshot."""
    y_R = np.asarray(y_R)
    if y_R.ndim == 2:
        return _kernels.snapshot_products(y_R, v, y_k)
    return np.sum(y_R.conj() * v * np.asarray(y_k))


def z_power(samples) -> float:
    """Sample mean of ``|z|^2``."""
    z = np.asarray(samples)
    if z.size == 0:
        raise ValueError("z power needs at least one sample")
    return float(np.mean(np.abs(z) ** 2))


def per_user_estimated_rates(z_powers, tx: TxConfig) -> np.ndarray:
    z = np.asarray(z_powers, dtype=float)
    if np.any(z < 0):
        raise ValueError("z powers must be non-negative")
    return np.log2(1.0 + (z / tx.p_ue) / tx.noise_var)


def estimated_sum_rate(z_powers, tx: TxConfig) -> float:
    """``sum_k log2(1 + E|z_k|^2 / (P_UE sigma^2))``.

    The noise-noise term ``N sigma^4`` contained in ``E|z_k|^2`` is kept,
    which biases the estimate upwards by ``N sigma^2 / P_UE`` in SNR.
    """
    return float(np.sum(per_user_estimated_rates(z_powers, tx)))


def expected_z_power(h_eff_k, f_k, tx: TxConfig, num_elements: int) -> float:
    """Closed form ``P_BS P_UE |f_k^H h_k|^2 + N sigma^4`` under zero IUI."""
    return float(tx.p_bs * tx.p_ue * np.abs(np.vdot(f_k, h_eff_k)) ** 2
                 + num_elements * tx.noise_var ** 2)


def rate_report(H, F, tx: TxConfig, y_R, v, y_ue) -> RateReport:
    """Both rates from the effective channel and (recovered) RIS signals.

    ``y_R`` is ``(N, T)``; ``y_ue`` is a sequence of ``(N, T)`` per user.
    """
    per_true = per_user_true_rates(H, F, tx)
    zp = [z_power(combined_observation(y_R, v, y_k)) for y_k in y_ue]
    per_est = per_user_estimated_rates(zp, tx)
    return RateReport(
        true_rate=float(per_true.sum()),
        estimated_rate=float(per_est.sum()),
        per_user_true=per_true.tolist(),
        per_user_estimated=per_est.tolist(),
        z_power=zp,
    )
