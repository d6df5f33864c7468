"""Full-aperture reconstruction of RIS signals from the sensing elements.

Angles are found once per snapshot window by a greedy matching pursuit on the
sample autocorrelation of the partial observations; path gains are then
re-estimated for every snapshot and the full signal is rebuilt from the UPA
response.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import steering_matrix, upa_response
from .phy import SensingLayout


@dataclass
class AngleGrid:
    """Uniform ``(theta_hor, theta_ver)`` grid and its partial steering dictionary."""

    theta_hor: np.ndarray
    theta_ver: np.ndarray
    n_hor: int
    n_ver: int
    layout: SensingLayout
    pairs: np.ndarray = field(init=False)  # (G, 2) angle pair per atom
    atoms: np.ndarray = field(init=False)  # (G, |I_s|) partial steering vectors as rows
    inv_norms: np.ndarray = field(init=False)

    def __post_init__(self):
        th, tv = np.meshgrid(self.theta_hor, self.theta_ver, indexing="ij")
        self.pairs = np.column_stack([th.ravel(), tv.ravel()])
        full = steering_matrix(self.pairs[:, 0], self.pairs[:, 1], self.n_hor, self.n_ver)
        self.atoms = np.ascontiguousarray(full[self.layout.index_array].T)
        self.inv_norms = 1.0 / np.sum(np.abs(self.atoms) ** 2, axis=1)

    @property
    def size(self) -> int:
        return self.pairs.shape[0]

    def partial(self, g: int) -> np.ndarray:
        return self.atoms[g]


def make_grid(n_hor: int, n_ver: int, layout: SensingLayout, points=(64, 64)) -> AngleGrid:
    """Grid uniform over ``[0, pi)`` in both angles."""
    gh, gv = points
    return AngleGrid(
        theta_hor=np.arange(gh) * np.pi / gh,
        theta_ver=np.arange(gv) * np.pi / gv,
        n_hor=n_hor,
        n_ver=n_ver,
        layout=layout,
    )


@dataclass
class RecoveredPath:
    theta_hor: float
    theta_ver: float
    beta: np.ndarray  # one complex gain per snapshot


@dataclass
class OmpResult:
    angles: list[tuple[float, float]]
    indices: list[int]
    zero_energy: bool = False


@dataclass
class RecoveredObservation:
    y_hat: np.ndarray  # (N, T)
    paths: list[RecoveredPath]
    residual_energy: float
    zero_energy: bool = False


def sample_autocorrelation(snapshots) -> np.ndarray:
    """``(1/T) sum_t y_t y_t^H``.

    ``snapshots`` is either a list of ``|I_s|``-vectors or an ``(|I_s|, T)``
    array with one snapshot per column.
    """
    if isinstance(snapshots, np.ndarray) and snapshots.ndim == 2:
        Y = snapshots
    else:
        if len(snapshots) == 0:
            raise ValueError("autocorrelation needs at least one snapshot")
        Y = np.column_stack([np.asarray(y) for y in snapshots])
    if Y.shape[1] == 0:
        raise ValueError("autocorrelation needs at least one snapshot")
    R = (Y @ Y.conj().T) / Y.shape[1]
    return 0.5 * (R + R.conj().T)


def omp_angles(R, grid: AngleGrid, num_paths: int, tol: float = 1e-12) -> OmpResult:
    """Greedy atom selection on the projection-deflated autocorrelation.

    Each iteration picks the atom maximising ``a^H P R P a / ||a||^2`` where
    ``P`` projects onto the orthogonal complement of the atoms already
    chosen. Selection order is preserved.
    """
    S = grid.atoms.shape[1]
    if num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    if num_paths > S:
        raise ValueError(f"cannot resolve {num_paths} paths from {S} sensing elements")
    R = np.asarray(R, dtype=complex)
    energy = float(np.real(np.trace(R)))
    if energy <= tol:
        return OmpResult([], [], zero_energy=True)
    chosen: list[int] = []
    R_defl = R
    for _ in range(num_paths):
        scores = _kernels.atom_scores(R_defl, grid.atoms, grid.inv_norms)
        if chosen:
            scores[chosen] = -np.inf
        g = int(np.argmax(scores))
        if scores[g] <= tol * energy:
            break
        chosen.append(g)
        A = grid.atoms[chosen].T
        Q, _ = np.linalg.qr(A)
        P = np.eye(S) - Q @ Q.conj().T
        R_defl = P @ R @ P
        R_defl = 0.5 * (R_defl + R_defl.conj().T)
    return OmpResult([tuple(grid.pairs[g]) for g in chosen], chosen)


def _partial_steering(theta, layout: SensingLayout, n_hor: int, n_ver: int):
    return upa_response(theta[0], theta[1], n_hor, n_ver)[layout.index_array]


def estimate_beta(y_partial, theta, layout: SensingLayout, n_hor: int, n_ver: int):
    """Matched-filter gain ``a_I^H y / |I_s|`` for one or many snapshots."""
    a = _partial_steering(theta, layout, n_hor, n_ver)
    return a.conj() @ np.asarray(y_partial) / layout.size


def estimate_beta_lstsq(y_partial, thetas, layout: SensingLayout, n_hor: int, n_ver: int):
    """Joint least-squares gains for all selected atoms; rows follow ``thetas``."""
    A = np.column_stack([_partial_steering(t, layout, n_hor, n_ver) for t in thetas])
    sol, *_ = np.linalg.lstsq(A, np.asarray(y_partial), rcond=None)
    return sol


def reconstruct(paths, n_hor: int, n_ver: int, snapshot: int | None = None):
    """``sum_l beta_l a_R(theta_l)`` over the full aperture.

    Returns ``(N, T)`` for all snapshots, or ``(N,)`` when ``snapshot`` is given.
    """
    if not paths:
        T = 1 if snapshot is not None else 0
        out = np.zeros((n_hor * n_ver, T), dtype=complex)
        return out[:, 0] if snapshot is not None else out
    A = steering_matrix([p.theta_hor for p in paths], [p.theta_ver for p in paths], n_hor, n_ver)
    B = np.vstack([np.atleast_1d(p.beta) for p in paths])  # (L, T)
    if snapshot is not None:
        return A @ B[:, snapshot]
    return A @ B


def recover_source(
    snapshots, grid: AngleGrid, num_paths: int, least_squares: bool = False
) -> RecoveredObservation:
    """Recover the full-aperture signal of one source over a snapshot window.

    ``snapshots`` is the ``(|I_s|, T)`` matrix of sensing-element samples.
    """
    Y = np.asarray(snapshots, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = grid.n_hor * grid.n_ver
    omp = omp_angles(sample_autocorrelation(Y), grid, num_paths)
    if not omp.angles:
        return RecoveredObservation(
            np.zeros((n, Y.shape[1]), dtype=complex), [], float(np.sum(np.abs(Y) ** 2)), True
        )
    if least_squares:
        betas = estimate_beta_lstsq(Y, omp.angles, grid.layout, grid.n_hor, grid.n_ver)
    else:
        # matched filter per atom, from the cached dictionary rows
        A = grid.atoms[omp.indices]  # (L, |I_s|)
        betas = (A.conj() @ Y) / grid.layout.size
    paths = [RecoveredPath(th, tv, betas[i]) for i, (th, tv) in enumerate(omp.angles)]
    y_hat = reconstruct(paths, grid.n_hor, grid.n_ver)
    residual = float(np.sum(np.abs(Y - y_hat[grid.layout.index_array]) ** 2))
    return RecoveredObservation(y_hat, paths, residual)


def recover_all(bs_snapshots, ue_snapshots, grid: AngleGrid, bs_paths: int, ue_paths: int,
                least_squares: bool = False):
    """Independent recovery of the BS signal and each UE signal.

    Returns ``(bs_observation, [ue_observation_k, ...])``.
    """
    bs_snapshots = np.asarray(bs_snapshots)
    T = bs_snapshots.shape[1] if bs_snapshots.ndim == 2 else 1
    for y in ue_snapshots:
        if (np.asarray(y).shape[1] if np.ndim(y) == 2 else 1) != T:
            raise ValueError("BS and UE snapshot windows differ in length")
    bs = recover_source(bs_snapshots, grid, bs_paths, least_squares)
    ues = [recover_source(y, grid, ue_paths, least_squares) for y in ue_snapshots]
    return bs, ues


def nmse(estimate, truth) -> float:
    return float(np.sum(np.abs(estimate - truth) ** 2) / np.sum(np.abs(truth) ** 2))
