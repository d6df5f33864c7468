"""Transmission, reception and partial sensing at the hybrid RIS.

Indices into the RIS aperture are 0-based and follow the element ordering of
:func:`autoris.geometry.upa_response` (``n = i_hor * n_ver + i_ver``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def thermal_noise_watt(bandwidth_hz: float = 20e6, density_dbm_hz: float = -174.0) -> float:
    return dbm_to_watt(density_dbm_hz + 10.0 * np.log10(bandwidth_hz))


class PrecoderError(np.linalg.LinAlgError):
    """The precoder Gram matrix is singular or numerically rank deficient."""


@dataclass(frozen=True)
class TxConfig:
    p_bs: float = dbm_to_watt(30.0)
    p_ue: float = dbm_to_watt(10.0)
    noise_var: float = thermal_noise_watt()

    def __post_init__(self):
        if min(self.p_bs, self.p_ue, self.noise_var) <= 0:
            raise ValueError("powers and noise variance must be positive")


@dataclass(frozen=True)
class SensingLayout:
    indices: tuple[int, ...]
    num_elements: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError("sensing indices must be unique")
        if any(i < 0 or i >= self.num_elements for i in idx):
            raise ValueError(f"sensing indices must lie in [0, {self.num_elements})")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)


def sensing_indices(n_hor: int, n_ver: int, kind: str = "first_row_and_column", indices=None) -> SensingLayout:
    """Sensing-element layout.

    ``first_row_and_column`` takes the first vertical column (``i_hor = 0``)
    and the first horizontal row (``i_ver = 0``), sharing one corner, so the
    layout has ``n_hor + n_ver - 1`` elements. ``explicit`` returns
    ``indices`` verbatim.
    """
    if n_hor < 1 or n_ver < 1:
        raise ValueError("array dimensions must be >= 1")
    n = n_hor * n_ver
    if kind == "explicit":
        if indices is None:
            raise ValueError("explicit layout needs an index list")
        return SensingLayout(tuple(indices), n)
    if kind != "first_row_and_column":
        raise ValueError(f"unknown sensing layout {kind!r}")
    column = set(range(n_ver))
    row = {i * n_ver for i in range(n_hor)}
    return SensingLayout(tuple(sorted(column | row)), n)


def unit_phase_vector(psi) -> np.ndarray:
    return np.exp(1j * np.asarray(psi, dtype=float))


def effective_channel(H_R, v, h_k):
    """``H_R^H diag(v) h_k``.

    ``h_k`` may also be a ``(K, N)`` stack, giving the ``(M, K)`` effective
    uplink matrix with one column per user.
    """
    h_k = np.asarray(h_k)
    if h_k.ndim == 2:
        return H_R.conj().T @ (v[:, None] * h_k.T)
    return H_R.conj().T @ (v * h_k)


def _normalise(F):
    return F / np.linalg.norm(F)


def _solve_gram(H, reg):
    K = H.shape[1]
    G = H.conj().T @ H + reg * np.eye(K)
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e14:
        raise PrecoderError(f"precoder Gram matrix is singular (condition number {cond:.3e})")
    return H @ np.linalg.solve(G, np.eye(K))


def mmse_precoder(H, tx: TxConfig) -> np.ndarray:
    """Regularised ZF precoder ``H (H^H H + K sigma^2 / P_BS I)^-1`` with ``||F||_F = 1``."""
    K = H.shape[1]
    return _normalise(_solve_gram(H, K * tx.noise_var / tx.p_bs))


def zf_precoder(H, tx: TxConfig | None = None) -> np.ndarray:
    M, K = H.shape
    if K > M or np.linalg.matrix_rank(H) < K:
        raise PrecoderError("zero-forcing needs a full column rank effective channel")
    return _normalise(_solve_gram(H, 0.0))


def complex_normal(rng, var, shape):
    """Circular ``CN(0, var)`` samples."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_symbols(rng, K: int, tx: TxConfig, snapshots: int | None = None):
    """Gaussian DL symbol vector(s) ``s`` and UL symbols ``x``.

    Returns ``(s, x)`` of shape ``(K,)`` each, or ``(K, snapshots)``.
    """
    shape = (K,) if snapshots is None else (K, snapshots)
    s = complex_normal(rng, tx.p_bs, shape)
    x = complex_normal(rng, tx.p_ue, shape)
    return s, x


def dl_receive(h_eff_k, F, s, noise_var, rng):
    """DL sample(s) ``h_eff_k^H F s + n`` at UE ``k``."""
    clean = h_eff_k.conj() @ F @ s
    return clean + complex_normal(rng, noise_var, np.shape(clean))


def ris_sense_bs(H_R, F, s, layout: SensingLayout, noise_var, rng):
    """Sensing-element samples of the DL transmission.

    Returns ``(partial, full)`` where ``full = H_R F s`` is the noise-free
    signal over the whole aperture and ``partial`` its noisy row selection.
    """
    full = H_R @ (F @ s)
    clean = full[layout.index_array]
    return clean + complex_normal(rng, noise_var, clean.shape), full


def ris_sense_ue(h_k, x_k, layout: SensingLayout, noise_var, rng):
    """Sensing-element samples of UE ``k``'s UL symbol(s); see :func:`ris_sense_bs`."""
    full = np.multiply.outer(h_k, x_k)
    clean = full[layout.index_array]
    return clean + complex_normal(rng, noise_var, clean.shape), full
