"""End-to-end acceptance checks.

Each test prints one ``[acceptance N] PASS|FAIL`` line to the terminal (also
under output capture) and then asserts. Criteria 6 and 7 simulate full
episodes and take a few minutes together.
"""
import subprocess
import sys
import time

import numpy as np
import pytest
from helpers import GRID, LAYOUT, on_grid_signal, well_separated
from scipy import stats

from autoris.agent import dft_action_set, normalize_target, update_phase
from autoris.config import ExperimentConfig
from autoris.geometry import build_channels
from autoris.harness import initial_geometry, run_episode, streams
from autoris.nn import gradient_check
from autoris.phy import complex_normal, draw_symbols, effective_channel, zf_precoder
from autoris.rate import combined_observation, expected_z_power, z_power
from autoris.recovery import estimate_beta, nmse, omp_angles, recover_source, sample_autocorrelation


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_1_estimator_identity(capsys):
    t0 = time.perf_counter()
    cfg = ExperimentConfig()
    geo, env, _ = streams(0, "aris")
    ch = build_channels(initial_geometry(cfg, geo))
    tx, N = cfg.tx(), cfg.num_elements
    v = np.exp(1j * env.uniform(0, 2 * np.pi, N))
    H = effective_channel(ch.H_R, v, ch.h)
    F = zf_precoder(H)
    s, x = draw_symbols(env, cfg.num_users, tx, 100_000)
    y_R = ch.H_R @ (F @ s)
    errs = []
    for k in range(cfg.num_users):
        zp = z_power(combined_observation(y_R, v, np.multiply.outer(ch.h[k], x[k])))
        expect = expected_z_power(H[:, k], F[:, k], tx, N)
        errs.append(abs(zp / expect - 1))
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 0.02 and elapsed < 30
    report(capsys, 1, ok, f"max relative error {max(errs):.4f} (<= 0.02), {elapsed:.1f} s (< 30 s)")


def test_2_recovery_exactness(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_beta, angles_ok = 0.0, True
    for g in rng.choice(GRID.size, 50, replace=False):
        beta = complex_normal(rng, 1.0, 8)
        y = np.outer(GRID.atoms[g], beta)
        res = omp_angles(sample_autocorrelation(y), GRID, 1)
        # atoms whose partial responses coincide are the same observation
        angles_ok &= bool(np.allclose(GRID.atoms[res.indices[0]], GRID.atoms[g], atol=1e-9))
        worst_beta = max(worst_beta, np.abs(estimate_beta(y, res.angles[0], LAYOUT, 4, 8) - beta).max())

    errs = []
    for _ in range(100):
        idx = well_separated(rng, GRID, 3)
        full, _ = on_grid_signal(rng, GRID, idx, 256)
        clean = full[LAYOUT.index_array]
        nv = np.mean(np.abs(clean) ** 2) / 10 ** 3.0
        y = clean + complex_normal(rng, nv, clean.shape)
        errs.append(nmse(recover_source(y, GRID, 3).y_hat, full))
    nmse_db = 10 * np.log10(np.mean(errs))
    elapsed = time.perf_counter() - t0
    ok = angles_ok and worst_beta <= 1e-10 and nmse_db <= -20 and elapsed < 60
    report(capsys, 2, ok, f"L=1 angles exact={angles_ok}, beta error {worst_beta:.1e} (<= 1e-10); "
                          f"L=3 NMSE {nmse_db:.1f} dB (<= -20 dB), {elapsed:.1f} s (< 60 s)")


def test_3_gradient_check(capsys):
    t0 = time.perf_counter()
    worst, _ = gradient_check(batch=4)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 60
    report(capsys, 3, ok, f"max relative error {worst:.2e} (<= 1e-4), {elapsed:.1f} s (< 60 s)")


def test_4_normalization_identities(capsys):
    rng = np.random.default_rng(0)
    worst_mean = worst_std = 0.0
    for _ in range(10_000):
        q = rng.normal(rng.uniform(-5, 5), rng.uniform(0.01, 5), 32)
        eta, gamma = rng.uniform(0.01, 0.5), rng.uniform(0.0, 0.99)
        out = normalize_target(q, eta, gamma)
        worst_mean = max(worst_mean, abs(out.mean() - 1 / (1 - gamma)))
        worst_std = max(worst_std, abs(out.std() - eta))
    ok = worst_mean <= 1e-9 and worst_std <= 1e-9
    report(capsys, 4, ok, f"mean error {worst_mean:.1e}, std error {worst_std:.1e} (<= 1e-9)")


def test_5_unit_modulus(capsys):
    rng = np.random.default_rng(0)
    V = dft_action_set(32)
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, 32))
    worst = 0.0
    for a, eta in zip(rng.integers(0, 32, 100_000), rng.uniform(0.0, 2.0, 100_000)):
        v = update_phase(v, int(a), float(eta), V)
        worst = max(worst, np.abs(np.abs(v) - 1).max())
    report(capsys, 5, worst <= 1e-12, f"max modulus error {worst:.1e} (<= 1e-12)")


def _tail(cfg, n, reducer):
    return reducer([r.true_rate for r in run_episode(cfg).rows[-n:]])


@pytest.mark.slow
def test_6_end_to_end_improvement(capsys):
    t0 = time.perf_counter()
    med = {arm: np.median([_tail(ExperimentConfig(arm=arm, seed=s, speed=0.0, steps=500), 50, np.median)
                           for s in range(10)])
           for arm in ("aris", "aris_ref1", "random")}
    elapsed = time.perf_counter() - t0
    ratio = med["aris"] / med["random"]
    ok = ratio >= 1.2 and med["aris_ref1"] >= med["aris"] and elapsed <= 300
    report(capsys, 6, ok, f"aris/random {ratio:.2f} (>= 1.2), aris_ref1 {med['aris_ref1']:.3f} "
                          f">= aris {med['aris']:.3f}, {elapsed:.0f} s (<= 300 s)")


@pytest.mark.slow
def test_7_mobility_ordering(capsys):
    t0 = time.perf_counter()
    rates = {sp: np.array([_tail(ExperimentConfig(arm="aris", seed=s, speed=sp, steps=500), 100, np.mean)
                           for s in range(10)])
             for sp in (1.0, 5.0)}
    test = stats.ttest_rel(rates[1.0], rates[5.0], alternative="less")
    elapsed = time.perf_counter() - t0
    # only a significant reversal (5 m/s better) fails
    ok = test.pvalue >= 0.05 and elapsed <= 600
    report(capsys, 7, ok, f"mean 1 m/s {rates[1.0].mean():.3f}, 5 m/s {rates[5.0].mean():.3f}, "
                          f"reversal p={test.pvalue:.3f} (>= 0.05), {elapsed:.0f} s (<= 600 s)")


def test_8_determinism(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("arm = aris\nseed = 3\nsteps = 40\n")
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        subprocess.run([sys.executable, "-m", "autoris.cli", "run", "--config", str(cfg), "--out", str(out)],
                       check=True, capture_output=True)
        outs.append(out.read_bytes())
    report(capsys, 8, outs[0] == outs[1] and len(outs[0]) > 0,
           f"two runs byte-identical ({len(outs[0])} bytes each)")
