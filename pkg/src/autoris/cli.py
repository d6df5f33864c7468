"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime or
numeric error.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import ARMS, ConfigError, ExperimentConfig, load_config
from .harness import emit_csv, run_episode, run_sweep

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
GRAD_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _arm_list(text):
    arms = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in arms if a not in ARMS]
    if bad or not arms:
        raise argparse.ArgumentTypeError(f"arms must be drawn from {ARMS}, got {text!r}")
    return arms


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="autoris", description="Autonomous RIS simulator with a DQN phase controller.")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate one arm and seed")
    run.add_argument("--config", help="key = value configuration file")
    run.add_argument("--arm", choices=ARMS)
    run.add_argument("--seed", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--speed", type=float, help="UE and cluster speed, m/s")
    run.add_argument("--out", help="CSV destination (default: config 'output')")

    sweep = sub.add_parser("sweep", help="several arms and seeds into one CSV")
    sweep.add_argument("--config")
    sweep.add_argument("--arms", type=_arm_list, default=list(ARMS))
    sweep.add_argument("--seeds", type=_int_list, default=[0])
    sweep.add_argument("--steps", type=int)
    sweep.add_argument("--speed", type=float)
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    sweep.add_argument("--out", required=True)

    gc = sub.add_parser("grad-check", help="finite-difference check of the Q network")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--batch", type=int, default=4)

    sub.add_parser("selftest", help="fast invariant checks")
    return p


def _config(args) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in ("arm", "seed", "steps", "speed")}
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _cmd_run(args) -> int:
    cfg = _config(args)
    out = args.out or cfg.output
    result = run_episode(cfg)
    emit_csv(result, out)
    for msg in result.anomalies:
        logging.warning(msg)
    print(f"wrote {len(result.rows)} rows to {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    results = run_sweep(cfg, args.arms, args.seeds, args.jobs)
    emit_csv(results, args.out)
    print(f"wrote {sum(len(r.rows) for r in results)} rows to {args.out}")
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    from .nn import gradient_check

    worst, report = gradient_check(batch=args.batch, seed=args.seed)
    for name, err in report.items():
        print(f"{name:24s} {err:.3e}")
    ok = worst <= GRAD_TOLERANCE
    print(f"max relative error {worst:.3e} ({'ok' if ok else 'FAIL'}, tolerance {GRAD_TOLERANCE:g})")
    return EXIT_OK if ok else EXIT_RUNTIME


def selftest() -> list[tuple[str, bool]]:
    """Cheap invariants that should hold on any installation."""
    from . import _kernels
    from .agent import dft_action_set, normalize_target, update_phase
    from .phy import sensing_indices
    from .recovery import make_grid, omp_angles, sample_autocorrelation

    rng = np.random.default_rng(1)
    checks = []

    q = normalize_target(rng.standard_normal(32), 0.05, 0.9)
    checks.append(("normalised target mean and std",
                   abs(q.mean() - 10.0) < 1e-9 and abs(q.std() - 0.05) < 1e-9))

    V = dft_action_set(32)
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, 32))
    for a in rng.integers(0, 32, 200):
        v = update_phase(v, int(a), 0.3, V)
    checks.append(("phase update keeps unit modulus", np.max(np.abs(np.abs(v) - 1)) < 1e-12))

    layout = sensing_indices(4, 8)
    grid = make_grid(4, 8, layout, (16, 16))
    g = 37
    y = grid.atoms[g][:, None] * np.exp(1j * rng.uniform(0, 2 * np.pi, 8))
    res = omp_angles(sample_autocorrelation(y), grid, 1)
    checks.append(("single path angle recovery", int(res.indices[0]) == g))

    A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    R = A @ A.conj().T  # autocorrelations are Hermitian; the kernel relies on it
    atoms = rng.standard_normal((7, 5)) + 1j * rng.standard_normal((7, 5))
    inv = rng.uniform(0.5, 1.5, 7)
    ref = np.einsum("gi,ij,gj->g", atoms.conj(), R, atoms).real * inv
    checks.append((f"kernel backend '{_kernels.BACKEND}' matches reference",
                   np.allclose(_kernels.atom_scores(R, atoms, inv), ref, atol=1e-12)))

    cfg = ExperimentConfig(arm="random", steps=3)
    a, b = run_episode(cfg), run_episode(cfg)
    checks.append(("random arm is deterministic",
                   [r.true_rate for r in a.rows] == [r.true_rate for r in b.rows]))
    return checks


def _cmd_selftest(args) -> int:
    results = selftest()
    for name, ok in results:
        print(f"[{'pass' if ok else 'FAIL'}] {name}")
    return EXIT_OK if all(ok for _, ok in results) else EXIT_RUNTIME


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "grad-check": _cmd_grad_check,
            "selftest": _cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
