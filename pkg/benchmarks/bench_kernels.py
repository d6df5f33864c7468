"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Times each hot kernel at the default problem size (N = 32 elements,
11 sensing elements, 64 x 64 angle grid, 32 snapshots) and one full
``aris`` simulation step, once per backend.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from autoris._kernels import _pykernels

try:
    from autoris._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _inputs(rng):
    S, G, N, T = 11, 64 * 64, 32, 32
    A = rng.standard_normal((S, S)) + 1j * rng.standard_normal((S, S))
    R = A @ A.conj().T
    atoms = np.ascontiguousarray(np.exp(1j * rng.uniform(0, 2 * np.pi, (G, S))))
    inv = np.full(G, 1.0 / S)
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, N))
    dv = np.exp(1j * rng.uniform(0, 2 * np.pi, N))
    y_R = rng.standard_normal((N, T)) + 1j * rng.standard_normal((N, T))
    y_k = rng.standard_normal((N, T)) + 1j * rng.standard_normal((N, T))
    return {
        "atom_scores": (R, atoms, inv),
        "phase_update": (v, dv, 0.05),
        "snapshot_products": (y_R, v, y_k),
    }


def bench(module, inputs, repeat):
    out = {}
    for name, args in inputs.items():
        fn = getattr(module, name)
        t = timeit.repeat(lambda: fn(*args), number=repeat, repeat=5)
        out[name] = min(t) / repeat
    return out


def bench_episode(backend, steps):
    import autoris._kernels as k
    from autoris.config import ExperimentConfig
    from autoris.harness import run_episode

    saved = k._impl
    k._impl = _ckernels if backend == "cython" else _pykernels
    try:
        run_episode(ExperimentConfig(arm="aris", steps=2))  # warm caches
        t = timeit.timeit(lambda: run_episode(ExperimentConfig(arm="aris", steps=steps)), number=1)
    finally:
        k._impl = saved
    return t / steps


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--steps", type=int, default=100, help="episode steps per backend")
    args = ap.parse_args(argv)

    inputs = _inputs(np.random.default_rng(0))
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not available; timing the Python backend only")

    results = {b: bench(m, inputs, args.repeat) for b, m in backends.items()}
    print(f"{'kernel':20s}" + "".join(f"{b:>14s}" for b in backends) + "   speedup")
    for name in inputs:
        row = [results[b][name] * 1e6 for b in backends]
        speed = row[0] / row[1] if len(row) == 2 else float("nan")
        print(f"{name:20s}" + "".join(f"{x:12.2f}us" for x in row) + f"   {speed:6.2f}x")

    ep = {b: bench_episode(b, args.steps) for b in backends}
    row = [ep[b] * 1e3 for b in backends]
    speed = row[0] / row[1] if len(row) == 2 else float("nan")
    print(f"{'aris step':20s}" + "".join(f"{x:12.2f}ms" for x in row) + f"   {speed:6.2f}x")


if __name__ == "__main__":
    main()
