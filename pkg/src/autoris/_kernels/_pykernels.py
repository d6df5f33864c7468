import numpy as np


def atom_scores(R, atoms, inv_norms):
    """``Re(a_g^H R a_g) * inv_norms[g]`` for every row ``a_g`` of ``atoms``.

    ``R`` must be Hermitian.
    """
    X = atoms @ R.T
    return np.einsum("gi,gi->g", atoms.conj(), X).real * inv_norms


def phase_update(v, dv, eta):
    """Unit-modulus projection of ``v + eta * dv``.

    Entries whose sum vanishes keep the phase of ``v``.
    """
    w = v + eta * dv
    mag = np.abs(w)
    out = v.copy()
    nz = mag > 0
    out[nz] = w[nz] / mag[nz]
    return out


def snapshot_products(y_R, v, y_k):
    """Per-snapshot ``y_R[:, t]^H diag(v) y_k[:, t]`` for (N, T) inputs."""
    return np.einsum("nt,n,nt->t", y_R.conj(), v, y_k)
