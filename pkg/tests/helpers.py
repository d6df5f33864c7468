"""Scenario builders shared by the unit and acceptance tests."""
import numpy as np

from autoris.geometry import steering_matrix
from autoris.phy import sensing_indices
from autoris.recovery import make_grid

LAYOUT = sensing_indices(4, 8)
GRID = make_grid(4, 8, LAYOUT, (64, 64))


def coherence(grid, i, j):
    a, b = grid.atoms[i], grid.atoms[j]
    return abs(np.vdot(a, b)) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)


def well_separated(rng, grid, num_paths, max_coherence=0.05, tries=10_000):
    """Random on-grid atom indices with small pairwise partial coherence."""
    for _ in range(tries):
        g = rng.choice(grid.size, num_paths, replace=False)
        if all(coherence(grid, g[i], g[j]) <= max_coherence
               for i in range(num_paths) for j in range(i)):
            return g
    raise RuntimeError("no well separated set found")


def on_grid_signal(rng, grid, idx, snapshots):
    """Full-aperture snapshots ``A B`` with i.i.d. CN(0, 1) path gains."""
    B = (rng.standard_normal((len(idx), snapshots))
         + 1j * rng.standard_normal((len(idx), snapshots))) / np.sqrt(2)
    A = steering_matrix(grid.pairs[idx, 0], grid.pairs[idx, 1], grid.n_hor, grid.n_ver)
    return A @ B, B
