import numpy as np
import pytest
from helpers import GRID, LAYOUT, on_grid_signal, well_separated
from hypothesis import given, settings
from hypothesis import strategies as st

from autoris.geometry import steering_matrix, upa_response
from autoris.phy import complex_normal, sensing_indices
from autoris.recovery import (
    estimate_beta,
    estimate_beta_lstsq,
    make_grid,
    nmse,
    omp_angles,
    reconstruct,
    recover_all,
    recover_source,
    sample_autocorrelation,
    RecoveredPath,
)


def test_grid_layout():
    assert GRID.size == 64 * 64
    assert GRID.atoms.shape == (4096, 11)
    assert GRID.atoms.flags.c_contiguous
    th, tv = GRID.pairs[64 * 3 + 5]
    assert (th, tv) == pytest.approx((3 * np.pi / 64, 5 * np.pi / 64))
    np.testing.assert_allclose(GRID.atoms[77], upa_response(*GRID.pairs[77], 4, 8)[LAYOUT.index_array])
    np.testing.assert_allclose(GRID.inv_norms, 1 / 11)


def test_autocorrelation_single_snapshot():
    y = np.arange(11) + 1j
    np.testing.assert_allclose(sample_autocorrelation([y]), np.outer(y, y.conj()))


def test_autocorrelation_list_and_matrix_agree():
    rng = np.random.default_rng(0)
    Y = complex_normal(rng, 1.0, (11, 9))
    R = sample_autocorrelation(Y)
    np.testing.assert_allclose(R, sample_autocorrelation(list(Y.T)), atol=1e-14)
    np.testing.assert_allclose(R, R.conj().T)
    assert np.all(np.linalg.eigvalsh(R) > -1e-12)


def test_autocorrelation_white_noise():
    rng = np.random.default_rng(1)
    Y = complex_normal(rng, 0.4, (11, 100_000))
    R = sample_autocorrelation(Y)
    ref = 0.4 * np.eye(11)
    assert np.linalg.norm(R - ref) / np.linalg.norm(ref) < 0.02


def test_autocorrelation_rejects_empty():
    with pytest.raises(ValueError):
        sample_autocorrelation([])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4095), st.integers(1, 5), st.integers(0, 2**31))
def test_single_path_exact(g, T, seed):
    rng = np.random.default_rng(seed)
    beta = complex_normal(rng, 1.0, T) + 0.1
    y = np.outer(GRID.atoms[g], beta)
    res = omp_angles(sample_autocorrelation(y), GRID, 1)
    # grid points with identical partial responses are equally valid
    np.testing.assert_allclose(GRID.atoms[res.indices[0]], GRID.atoms[g], atol=1e-9)
    b = estimate_beta(y, res.angles[0], LAYOUT, 4, 8)
    np.testing.assert_allclose(b, beta, atol=1e-10)


def test_omp_errors_and_zero_energy():
    with pytest.raises(ValueError):
        omp_angles(np.eye(11), GRID, 12)
    res = omp_angles(np.zeros((11, 11)), GRID, 2)
    assert res.zero_energy and res.angles == []
    obs = recover_source(np.zeros((11, 4)), GRID, 2)
    assert obs.zero_energy
    np.testing.assert_array_equal(obs.y_hat, 0)


def test_omp_stops_at_signal_rank():
    rng = np.random.default_rng(2)
    y, _ = on_grid_signal(rng, GRID, [1234], 8)
    res = omp_angles(sample_autocorrelation(y[LAYOUT.index_array]), GRID, 3)
    assert len(res.indices) == 1


def test_omp_well_separated_noise_free():
    # Orthogonal gain sequences remove the sample cross-correlation between
    # paths. The deflated score is not normalised by ||P a||, so a grid
    # neighbour can still win a later pick; the strongest path never misses
    # by more than chance and the reconstruction stays accurate.
    rng = np.random.default_rng(3)
    B = np.fft.fft(np.eye(16))[:3] * np.array([[1.0], [0.7], [0.4]])
    exact = first = 0
    errs = []
    for _ in range(100):
        idx = well_separated(rng, GRID, 3)
        y = GRID.atoms[idx].T @ B
        res = omp_angles(sample_autocorrelation(y), GRID, 3)
        exact += sorted(res.indices) == sorted(idx.tolist())
        first += res.indices[0] == idx[0]
        full = steering_matrix(GRID.pairs[idx, 0], GRID.pairs[idx, 1], 4, 8) @ B
        errs.append(nmse(recover_source(y, GRID, 3, least_squares=True).y_hat, full))
    assert first >= 95
    assert exact >= 60
    assert 10 * np.log10(np.mean(errs)) < -30


def test_matched_filter_leakage_closed_form():
    g1, g2 = 100, 2900
    b1, b2 = 1.0 + 0.5j, -0.3 + 2j
    a1, a2 = GRID.atoms[g1], GRID.atoms[g2]
    y = b1 * a1 + b2 * a2
    est = estimate_beta(y, GRID.pairs[g1], LAYOUT, 4, 8)
    expect = b1 + np.vdot(a1, a2) * b2 / LAYOUT.size
    assert est == pytest.approx(expect, abs=1e-12)
    # least squares removes the leakage
    ls = estimate_beta_lstsq(y, [GRID.pairs[g1], GRID.pairs[g2]], LAYOUT, 4, 8)
    np.testing.assert_allclose(ls, [b1, b2], atol=1e-10)


@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_beta_is_linear(c):
    rng = np.random.default_rng(5)
    y = complex_normal(rng, 1.0, 11)
    theta = GRID.pairs[321]
    assert estimate_beta(c * y, theta, LAYOUT, 4, 8) == pytest.approx(
        c * estimate_beta(y, theta, LAYOUT, 4, 8), rel=1e-9, abs=1e-9)


def test_reconstruct_shapes_and_values():
    p = RecoveredPath(0.3, 1.1, np.array([1.0, 2j]))
    full = reconstruct([p], 4, 8)
    assert full.shape == (32, 2)
    np.testing.assert_allclose(full[:, 1], 2j * upa_response(0.3, 1.1, 4, 8))
    np.testing.assert_allclose(reconstruct([p], 4, 8, snapshot=0), full[:, 0])
    assert reconstruct([], 4, 8).shape == (32, 0)


def test_recover_all_noise_free_single_path_exact():
    rng = np.random.default_rng(6)
    bs, _ = on_grid_signal(rng, GRID, [800], 6)
    ues = [on_grid_signal(rng, GRID, [g], 6)[0] for g in (50, 3000)]
    obs_bs, obs_ue = recover_all(bs[LAYOUT.index_array], [u[LAYOUT.index_array] for u in ues], GRID, 1, 1)
    assert nmse(obs_bs.y_hat, bs) < 1e-20
    for o, u in zip(obs_ue, ues):
        np.testing.assert_allclose(o.y_hat, u, atol=1e-10 * np.abs(u).max())


def test_recover_all_noise_free_multipath_least_squares_exact():
    rng = np.random.default_rng(7)
    idx = well_separated(rng, GRID, 3)
    full, _ = on_grid_signal(rng, GRID, idx, 12)
    obs, _ = recover_all(full[LAYOUT.index_array], [], GRID, 3, 1, least_squares=True)
    np.testing.assert_allclose(obs.y_hat, full, atol=1e-10 * np.abs(full).max())
    assert obs.residual_energy < 1e-18


def test_recover_all_window_mismatch():
    with pytest.raises(ValueError):
        recover_all(np.zeros((11, 4)), [np.zeros((11, 5))], GRID, 1, 1)


def test_noisy_recovery_improves_with_snr():
    rng = np.random.default_rng(8)
    idx = well_separated(rng, GRID, 2)
    full, _ = on_grid_signal(rng, GRID, idx, 64)
    errs = []
    for snr_db in (10, 30):
        nv = np.mean(np.abs(full) ** 2) / 10 ** (snr_db / 10)
        y = full[LAYOUT.index_array] + complex_normal(rng, nv, (11, 64))
        errs.append(nmse(recover_source(y, GRID, 2).y_hat, full))
    assert errs[1] < errs[0]


def test_other_layout_grid():
    lay = sensing_indices(4, 8, "explicit", [0, 1, 2, 3, 8, 16, 24, 9])
    grid = make_grid(4, 8, lay, (16, 16))
    assert grid.atoms.shape == (256, 8)
