"""Hot numeric kernels.

The compiled extension (``_ckernels``) is used when it was built and imports
cleanly; otherwise the numpy implementations in :mod:`._pykernels` are used.
Set ``AUTORIS_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("AUTORIS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"


def _c128(a):
    return np.ascontiguousarray(a, dtype=np.complex128)


def atom_scores(R, atoms, inv_norms):
    """Quadratic-form score of each atom (row of ``atoms``) against Hermitian ``R``."""
    return _impl.atom_scores(_c128(R), _c128(atoms), np.ascontiguousarray(inv_norms, dtype=float))


def phase_update(v, dv, eta):
    return _impl.phase_update(_c128(v), _c128(dv), float(eta))


def snapshot_products(y_R, v, y_k):
    return _impl.snapshot_products(_c128(y_R), _c128(v), _c128(y_k))


__all__ = ["BACKEND", "atom_scores", "phase_update", "snapshot_products"]
