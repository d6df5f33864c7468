"""Cluster-based geometric channels between the BS, the RIS and the UEs.

Axis convention: the RIS UPA lies in the x-z plane and faces +y. ``theta_ver``
is the polar angle measured from +z and ``theta_hor`` the azimuth measured from
+x, so the horizontal phase term ``cos(theta_hor) * sin(theta_ver)`` is the
x-component and the vertical term ``cos(theta_ver)`` the z-component of the
arrival direction. The BS carries a vertical ULA parameterised by the zenith
angle of departure only.

Element ordering follows the Kronecker structure of :func:`upa_response`:
element ``n = i_hor * n_ver + i_ver``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class InvalidGeometryError(ValueError):
    """Raised when positions cannot define a propagation path."""


def free_space_reference_power(carrier_frequency: float, c: float = SPEED_OF_LIGHT) -> float:
    """Friis power gain at 1 m, ``(lambda / 4 pi)^2``."""
    return (c / (4.0 * np.pi * carrier_frequency)) ** 2


@dataclass
class ScenarioGeometry:
    bs_position: np.ndarray
    ris_position: np.ndarray
    ue_positions: np.ndarray  # (K, 3)
    bs_clusters: np.ndarray  # (C_R, 3), one scatter point per BS-side NLoS path
    ue_clusters: np.ndarray  # (K, C_k, 3)
    ue_velocities: np.ndarray  # (K, 3)
    bs_cluster_velocities: np.ndarray  # (C_R, 3)
    ue_cluster_velocities: np.ndarray  # (K, C_k, 3)
    bs_antennas: int = 4
    ris_dims: tuple[int, int] = (4, 8)
    carrier_frequency: float = 2.4e9
    pathloss_exponent: float = 1.0
    reference_power: float = field(default_factory=lambda: free_space_reference_power(2.4e9))
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        self.bs_position = np.asarray(self.bs_position, dtype=float).reshape(3)
        self.ris_position = np.asarray(self.ris_position, dtype=float).reshape(3)
        self.ue_positions = np.asarray(self.ue_positions, dtype=float).reshape(-1, 3)
        k = self.ue_positions.shape[0]
        self.bs_clusters = np.asarray(self.bs_clusters, dtype=float).reshape(-1, 3)
        self.ue_clusters = np.asarray(self.ue_clusters, dtype=float).reshape(k, -1, 3)
        self.ue_velocities = np.asarray(self.ue_velocities, dtype=float).reshape(k, 3)
        self.bs_cluster_velocities = np.asarray(
            self.bs_cluster_velocities, dtype=float
        ).reshape(self.bs_clusters.shape)
        self.ue_cluster_velocities = np.asarray(
            self.ue_cluster_velocities, dtype=float
        ).reshape(self.ue_clusters.shape)
        self.ris_dims = (int(self.ris_dims[0]), int(self.ris_dims[1]))
        if self.bs_antennas < 1 or min(self.ris_dims) < 1:
            raise InvalidGeometryError("array dimensions must be >= 1")
        if self.carrier_frequency <= 0 or self.reference_power <= 0:
            raise InvalidGeometryError("carrier frequency and reference power must be positive")
        for name in ("bs_position", "ris_position", "ue_positions", "bs_clusters", "ue_clusters"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidGeometryError(f"{name} contains non-finite entries")

    @property
    def num_users(self) -> int:
        return self.ue_positions.shape[0]

    @property
    def num_elements(self) -> int:
        return self.ris_dims[0] * self.ris_dims[1]


@dataclass(frozen=True)
class PathSpec:
    """One propagation path ending at the RIS."""

    segment_lengths: tuple[float, ...]
    delay: float
    theta_hor: float
    theta_ver: float
    phi_ver: float | None = None  # zenith of departure, BS-side paths only
    gain: complex = 0j


@dataclass
class ChannelSet:
    h: np.ndarray  # (K, N) UE-to-RIS channels
    H_R: np.ndarray  # (N, M) BS-to-RIS channel
    ue_paths: list[list[PathSpec]]
    bs_paths: list[PathSpec]


def upa_response(theta_hor, theta_ver, n_hor, n_ver):
    """Half-wavelength UPA response ``a_hor(theta) kron a_ver(theta)``."""
    step_hor = np.pi * np.cos(theta_hor) * np.sin(theta_ver)
    step_ver = np.pi * np.cos(theta_ver)
    a_hor = np.exp(1j * step_hor * np.arange(n_hor))
    a_ver = np.exp(1j * step_ver * np.arange(n_ver))
    return np.kron(a_hor, a_ver)


def ula_response(phi_ver, m):
    """Vertical ULA response; identical to ``upa_response(., phi_ver, 1, m)``."""
    return upa_response(0.0, phi_ver, 1, m)


def steering_matrix(theta_hor, theta_ver, n_hor, n_ver):
    """Stack of UPA responses, one column per ``(theta_hor[g], theta_ver[g])``.

    Returns an ``(n_hor * n_ver, G)`` complex matrix whose columns equal
    :func:`upa_response` evaluated at each angle pair.
    """
    theta_hor = np.atleast_1d(np.asarray(theta_hor, dtype=float))
    theta_ver = np.atleast_1d(np.asarray(theta_ver, dtype=float))
    step_hor = np.pi * np.cos(theta_hor) * np.sin(theta_ver)
    step_ver = np.pi * np.cos(theta_ver)
    a_hor = np.exp(1j * np.outer(np.arange(n_hor), step_hor))
    a_ver = np.exp(1j * np.outer(np.arange(n_ver), step_ver))
    return (a_hor[:, None, :] * a_ver[None, :, :]).reshape(n_hor * n_ver, -1)


def arrival_angles(direction) -> tuple[float, float]:
    """Map a direction (pointing from the RIS towards the source) to
    ``(theta_hor, theta_ver)``.

    The UPA response only sees the x and z components, so the y sign is
    folded into ``theta_hor in [0, pi]``.
    """
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    theta_ver = float(np.arccos(np.clip(u[2], -1.0, 1.0)))
    theta_hor = float(np.arctan2(abs(u[1]), u[0]))
    return theta_hor, theta_ver


def departure_zenith(direction) -> float:
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return float(np.arccos(np.clip(u[2], -1.0, 1.0)))


def path_params(waypoints, geometry: ScenarioGeometry, departure: bool = False) -> PathSpec:
    """Extract a :class:`PathSpec` from ordered waypoints ending at the RIS.

    With ``departure=True`` the first waypoint is taken as the BS and the
    zenith of departure is computed from the first segment.
    """
    pts = np.asarray(waypoints, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise InvalidGeometryError("a path needs at least two waypoints")
    legs = np.diff(pts, axis=0)
    lengths = np.linalg.norm(legs, axis=1)
    if np.any(lengths <= 0):
        raise InvalidGeometryError(f"zero-length segment in path {pts.tolist()}")
    theta_hor, theta_ver = arrival_angles(-legs[-1])
    phi_ver = departure_zenith(legs[0]) if departure else None
    delay = float(np.sum(lengths) / geometry.speed_of_light)
    gain = (
        np.sqrt(geometry.reference_power)
        / np.prod(lengths ** geometry.pathloss_exponent)
        * np.exp(-2j * np.pi * geometry.carrier_frequency * delay)
    )
    return PathSpec(
        segment_lengths=tuple(float(d) for d in lengths),
        delay=delay,
        theta_hor=theta_hor,
        theta_ver=theta_ver,
        phi_ver=phi_ver,
        gain=complex(gain),
    )


def ue_paths(geometry: ScenarioGeometry, k: int) -> list[PathSpec]:
    """LoS path followed by one two-segment NLoS path per cluster."""
    ue = geometry.ue_positions[k]
    ris = geometry.ris_position
    paths = [path_params([ue, ris], geometry)]
    for cluster in geometry.ue_clusters[k]:
        paths.append(path_params([ue, cluster, ris], geometry))
    return paths


def bs_paths(geometry: ScenarioGeometry) -> list[PathSpec]:
    bs = geometry.bs_position
    ris = geometry.ris_position
    paths = [path_params([bs, ris], geometry, departure=True)]
    for cluster in geometry.bs_clusters:
        paths.append(path_params([bs, cluster, ris], geometry, departure=True))
    return paths


def ue_channel_from_paths(paths, n_hor: int, n_ver: int) -> np.ndarray:
    h = np.zeros(n_hor * n_ver, dtype=complex)
    for p in paths:
        h += p.gain * upa_response(p.theta_hor, p.theta_ver, n_hor, n_ver)
    return h


def bs_channel_from_paths(paths, n_hor: int, n_ver: int, m: int) -> np.ndarray:
    H = np.zeros((n_hor * n_ver, m), dtype=complex)
    for p in paths:
        a_r = upa_response(p.theta_hor, p.theta_ver, n_hor, n_ver)
        a_b = ula_response(p.phi_ver, m)
        H += p.gain * np.outer(a_r, a_b.conj())
    return H


def build_ue_channel(geometry: ScenarioGeometry, k: int) -> np.ndarray:
    if not 0 <= k < geometry.num_users:
        raise IndexError(f"UE index {k} out of range for {geometry.num_users} users")
    return ue_channel_from_paths(ue_paths(geometry, k), *geometry.ris_dims)


def build_bs_channel(geometry: ScenarioGeometry) -> np.ndarray:
    return bs_channel_from_paths(bs_paths(geometry), *geometry.ris_dims, geometry.bs_antennas)


def build_channels(geometry: ScenarioGeometry) -> ChannelSet:
    n_hor, n_ver = geometry.ris_dims
    per_ue = [ue_paths(geometry, k) for k in range(geometry.num_users)]
    bs = bs_paths(geometry)
    h = np.stack([ue_channel_from_paths(p, n_hor, n_ver) for p in per_ue])
    H_R = bs_channel_from_paths(bs, n_hor, n_ver, geometry.bs_antennas)
    return ChannelSet(h=h, H_R=H_R, ue_paths=per_ue, bs_paths=bs)


def advance_mobility(geometry: ScenarioGeometry, dt: float) -> ScenarioGeometry:
    """Translate UEs and cluster points along their velocities for ``dt`` seconds."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return replace(
        geometry,
        ue_positions=geometry.ue_positions + geometry.ue_velocities * dt,
        bs_clusters=geometry.bs_clusters + geometry.bs_cluster_velocities * dt,
        ue_clusters=geometry.ue_clusters + geometry.ue_cluster_velocities * dt,
    )


def _horizontal_velocities(rng, shape, speed):
    heading = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    v = np.zeros(shape + (3,))
    v[..., 0] = speed * np.cos(heading)
    v[..., 1] = speed * np.sin(heading)
    return v


def random_geometry(
    rng: np.random.Generator,
    num_users: int = 2,
    clusters_per_link: int = 3,
    speed: float = 0.0,
    bs_position=(0.0, 0.0, 35.0),
    ris_position=(-50.0, 0.0, 10.0),
    ue_area=(100.0, 50.0),
    ue_height: float = 1.0,
    cluster_region=(200.0, 100.0, 50.0),
    **array_kwargs,
) -> ScenarioGeometry:
    """Draw a random scenario.

    UEs are uniform over an ``ue_area`` rectangle centred at the origin at
    fixed height. Cluster points are uniform over ``cluster_region``, centred
    at the origin horizontally and spanning ``[0, height]`` vertically. Every
    UE and cluster moves at ``speed`` in a uniformly random horizontal heading.
    """
    ax, ay = ue_area
    ue = np.column_stack([
        rng.uniform(-ax / 2, ax / 2, num_users),
        rng.uniform(-ay / 2, ay / 2, num_users),
        np.full(num_users, ue_height),
    ])
    cx, cy, cz = cluster_region

    def clusters(n):
        return np.column_stack([
            rng.uniform(-cx / 2, cx / 2, n),
            rng.uniform(-cy / 2, cy / 2, n),
            rng.uniform(0.0, cz, n),
        ])

    bs_cl = clusters(clusters_per_link)
    ue_cl = np.stack([clusters(clusters_per_link) for _ in range(num_users)])
    return ScenarioGeometry(
        bs_position=np.asarray(bs_position, dtype=float),
        ris_position=np.asarray(ris_position, dtype=float),
        ue_positions=ue,
        bs_clusters=bs_cl,
        ue_clusters=ue_cl,
        ue_velocities=_horizontal_velocities(rng, (num_users,), speed),
        bs_cluster_velocities=_horizontal_velocities(rng, (clusters_per_link,), speed),
        ue_cluster_velocities=_horizontal_velocities(rng, (num_users, clusters_per_link), speed),
        **array_kwargs,
    )
