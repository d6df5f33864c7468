import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoris.geometry import (
    SPEED_OF_LIGHT,
    InvalidGeometryError,
    ScenarioGeometry,
    advance_mobility,
    arrival_angles,
    build_bs_channel,
    build_channels,
    build_ue_channel,
    departure_zenith,
    free_space_reference_power,
    path_params,
    random_geometry,
    steering_matrix,
    ula_response,
    upa_response,
)

angles = st.floats(0.0, np.pi, allow_nan=False)


def _upa_oracle(th, tv, nh, nv):
    out = np.empty(nh * nv, dtype=complex)
    for ih in range(nh):
        for iv in range(nv):
            out[ih * nv + iv] = np.exp(1j * np.pi * (ih * np.cos(th) * np.sin(tv) + iv * np.cos(tv)))
    return out


def _geom(**kw):
    base = dict(
        bs_position=[0, 0, 35], ris_position=[-50, 0, 10],
        ue_positions=[[10, 5, 1], [-20, -10, 1]],
        bs_clusters=[[30, 20, 20]], ue_clusters=[[[0, 30, 10]], [[-40, -30, 5]]],
        ue_velocities=np.zeros((2, 3)), bs_cluster_velocities=np.zeros((1, 3)),
        ue_cluster_velocities=np.zeros((2, 1, 3)),
    )
    base.update(kw)
    return ScenarioGeometry(**base)


@given(angles, angles)
def test_upa_matches_elementwise_oracle(th, tv):
    np.testing.assert_allclose(upa_response(th, tv, 4, 8), _upa_oracle(th, tv, 4, 8), atol=1e-12)


@given(angles, angles)
def test_upa_unit_modulus_and_norm(th, tv):
    a = upa_response(th, tv, 4, 8)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    assert np.isclose(np.vdot(a, a).real, 32)


def test_upa_broadside_is_all_ones():
    np.testing.assert_allclose(upa_response(np.pi / 2, np.pi / 2, 4, 8), np.ones(32), atol=1e-12)


def test_steering_matrix_columns():
    rng = np.random.default_rng(0)
    th, tv = rng.uniform(0, np.pi, 7), rng.uniform(0, np.pi, 7)
    A = steering_matrix(th, tv, 4, 8)
    assert A.shape == (32, 7)
    for g in range(7):
        np.testing.assert_allclose(A[:, g], upa_response(th[g], tv[g], 4, 8), atol=1e-12)


def test_ula_is_vertical_upa():
    phi = 0.7
    np.testing.assert_allclose(ula_response(phi, 4), np.exp(1j * np.pi * np.cos(phi) * np.arange(4)))


def test_arrival_angles_axes():
    assert arrival_angles([1, 0, 0]) == pytest.approx((0.0, np.pi / 2))
    assert arrival_angles([0, 1, 0]) == pytest.approx((np.pi / 2, np.pi / 2))
    assert arrival_angles([0, 0, 1])[1] == pytest.approx(0.0)
    assert arrival_angles([-1, 0, 0])[0] == pytest.approx(np.pi)


@given(st.tuples(*[st.floats(-1, 1) for _ in range(3)]).filter(lambda u: np.linalg.norm(u) > 1e-3))
def test_arrival_angles_reproduce_xz_components(u):
    u = np.asarray(u) / np.linalg.norm(u)
    th, tv = arrival_angles(u)
    assert 0 <= th <= np.pi and 0 <= tv <= np.pi
    # only the x and z cosines are seen; sin(arccos(z)) loses digits near the pole
    assert np.cos(th) * np.sin(tv) == pytest.approx(u[0], abs=1e-7)
    assert np.cos(tv) == pytest.approx(u[2], abs=1e-9)


def test_arrival_angles_fold_y_sign():
    assert arrival_angles([0.3, 0.5, 0.2]) == pytest.approx(arrival_angles([0.3, -0.5, 0.2]))


def test_departure_zenith():
    assert departure_zenith([0, 0, -1]) == pytest.approx(np.pi)
    assert departure_zenith([1, 0, 0]) == pytest.approx(np.pi / 2)


def test_free_space_reference_power():
    lam = SPEED_OF_LIGHT / 2.4e9
    assert free_space_reference_power(2.4e9) == pytest.approx((lam / (4 * np.pi)) ** 2)


def test_path_params_gain_delay_and_angles():
    g = _geom(pathloss_exponent=1.0)
    p = path_params([[10, 5, 1], [0, 30, 10], [-50, 0, 10]], g)
    d1 = np.linalg.norm([10, -25, -9])
    d2 = np.linalg.norm([50, 30, 0])
    assert p.segment_lengths == pytest.approx((d1, d2))
    assert p.delay == pytest.approx((d1 + d2) / SPEED_OF_LIGHT)
    assert abs(p.gain) == pytest.approx(np.sqrt(g.reference_power) / (d1 * d2))
    assert np.angle(p.gain) == pytest.approx(
        np.angle(np.exp(-2j * np.pi * g.carrier_frequency * p.delay)), abs=1e-6)
    # last segment arrives from the cluster
    assert (p.theta_hor, p.theta_ver) == pytest.approx(arrival_angles([50, 30, 0]))
    assert p.phi_ver is None


def test_path_params_exponent_two():
    g = _geom(pathloss_exponent=2.0)
    p = path_params([[0, 10, 10], [-50, 0, 10]], g)
    d = np.linalg.norm([50, 10, 0])
    assert abs(p.gain) == pytest.approx(np.sqrt(g.reference_power) / d ** 2)


def test_path_params_rejects_zero_length_segment():
    g = _geom()
    with pytest.raises(InvalidGeometryError):
        path_params([[1, 2, 3], [1, 2, 3], [-50, 0, 10]], g)


def test_geometry_rejects_non_finite():
    with pytest.raises(InvalidGeometryError):
        _geom(ue_positions=[[np.nan, 0, 1], [0, 0, 1]])


def test_ue_channel_is_sum_of_path_responses():
    g = _geom()
    ch = build_channels(g)
    paths = ch.ue_paths[0]
    assert len(paths) == 2
    expect = sum(p.gain * _upa_oracle(p.theta_hor, p.theta_ver, 4, 8) for p in paths)
    np.testing.assert_allclose(build_ue_channel(g, 0), expect, rtol=1e-12)
    np.testing.assert_allclose(ch.h[0], expect, rtol=1e-12)


def test_bs_channel_rank_and_structure():
    g = _geom()
    H = build_bs_channel(g)
    assert H.shape == (32, 4)
    assert np.linalg.matrix_rank(H, tol=1e-9 * np.abs(H).max()) <= 2
    ch = build_channels(g)
    expect = sum(p.gain * np.outer(upa_response(p.theta_hor, p.theta_ver, 4, 8),
                                   ula_response(p.phi_ver, 4).conj()) for p in ch.bs_paths)
    np.testing.assert_allclose(H, expect, rtol=1e-12)


def test_build_ue_channel_index_check():
    with pytest.raises(IndexError):
        build_ue_channel(_geom(), 5)


def test_advance_mobility_moves_only_mobile_entities():
    rng = np.random.default_rng(3)
    g = random_geometry(rng, speed=2.0)
    g2 = advance_mobility(g, 0.5)
    np.testing.assert_allclose(g2.ue_positions - g.ue_positions, g.ue_velocities * 0.5)
    np.testing.assert_allclose(g2.bs_clusters - g.bs_clusters, g.bs_cluster_velocities * 0.5)
    np.testing.assert_allclose(g2.bs_position, g.bs_position)
    np.testing.assert_allclose(g2.ris_position, g.ris_position)
    with pytest.raises(ValueError):
        advance_mobility(g, -1.0)


def test_static_geometry_does_not_move():
    g = random_geometry(np.random.default_rng(0), speed=0.0)
    g2 = advance_mobility(g, 10.0)
    np.testing.assert_array_equal(g2.ue_positions, g.ue_positions)
    np.testing.assert_array_equal(g2.ue_clusters, g.ue_clusters)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 10.0))
def test_random_geometry_ranges(seed, speed):
    g = random_geometry(np.random.default_rng(seed), num_users=3, clusters_per_link=2, speed=speed)
    assert g.ue_positions.shape == (3, 3)
    assert np.all(np.abs(g.ue_positions[:, 0]) <= 50) and np.all(np.abs(g.ue_positions[:, 1]) <= 25)
    np.testing.assert_allclose(g.ue_positions[:, 2], 1.0)
    assert g.ue_clusters.shape == (3, 2, 3)
    assert np.all((g.ue_clusters[..., 2] >= 0) & (g.ue_clusters[..., 2] <= 50))
    for vel in (g.ue_velocities, g.bs_cluster_velocities, g.ue_cluster_velocities):
        np.testing.assert_allclose(np.linalg.norm(vel, axis=-1), speed, atol=1e-9)
        np.testing.assert_allclose(vel[..., 2], 0.0)


def test_random_geometry_reproducible():
    a = random_geometry(np.random.default_rng(11))
    b = random_geometry(np.random.default_rng(11))
    np.testing.assert_array_equal(a.ue_clusters, b.ue_clusters)


def test_small_motion_changes_channel_smoothly():
    g = random_geometry(np.random.default_rng(5), speed=1.0)
    h0 = build_channels(g).h
    h1 = build_channels(advance_mobility(g, 0.01)).h
    rel = np.linalg.norm(h1 - h0) / np.linalg.norm(h0)
    assert 0 < rel < 1.0
