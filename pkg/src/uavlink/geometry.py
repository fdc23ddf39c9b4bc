"""BS-UAV link geometry: distances, elevation/azimuth angles, LoS direction.

Coordinates are 3D Cartesian in meters, BS antenna at (0, 0, h_bs), no
Earth curvature. All functions are pure over immutable state and safe for
concurrent use.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CoLocatedEndpoints


@dataclass(frozen=True)
class GeometryState:
    """Snapshot of the BS/UAV positions and UAV velocity.

    p_uav : (x, y, z) position in meters, z > 0
    v_uav : (vx, vy, vz) velocity in m/s
    h_bs  : BS antenna height in meters, > 0
    """

    p_uav: tuple
    v_uav: tuple = (0.0, 0.0, 0.0)
    h_bs: float = 25.0

    def __post_init__(self):
        if self.h_bs <= 0.0:
            raise ValueError(f"h_bs must be positive, got {self.h_bs}")
        if len(self.p_uav) != 3 or len(self.v_uav) != 3:
            raise ValueError("p_uav and v_uav must be 3-vectors")
        if self.p_uav[2] <= 0.0:
            raise ValueError(f"UAV altitude must be positive, got {self.p_uav[2]}")

    @property
    def p_bs(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.h_bs])

    @property
    def uav(self) -> np.ndarray:
        return np.asarray(self.p_uav, dtype=float)

    @property
    def velocity(self) -> np.ndarray:
        return np.asarray(self.v_uav, dtype=float)


def horizontal_distance(g: GeometryState) -> float:
    """Ground-plane distance sqrt(x^2 + y^2) in meters."""
    x, y, _ = g.p_uav
    return float(np.hypot(x, y))


def slant_distance(g: GeometryState) -> float:
    """Euclidean BS-UAV distance d = sqrt(r^2 + (h_bs - z)^2)."""
    r = horizontal_distance(g)
    dz = g.h_bs - g.p_uav[2]
    return float(np.hypot(r, dz))


def elevation_azimuth(g: GeometryState) -> tuple:
    """Elevation theta in [0, pi/2] and azimuth phi in (-pi, pi].

    theta = arctan(|h_bs - z| / r); the arctan form stays defined for
    r < |h_bs - z| (the arcsin ratio would exceed 1 there) and agrees at
    small angles. phi = atan2(y, x).
    """
    x, y, z = g.p_uav
    r = horizontal_distance(g)
    dz = abs(g.h_bs - z)
    if r == 0.0 and dz == 0.0:
        raise CoLocatedEndpoints("BS and UAV are co-located; angles undefined")
    theta = float(np.arctan2(dz, r))  # in [0, pi/2] since both args >= 0
    theta = min(max(theta, 0.0), np.pi / 2.0)
    phi = float(np.arctan2(y, x))
    return theta, phi


def unit_direction(g: GeometryState) -> np.ndarray:
    """Unit vector from the UAV toward the BS (used in the Doppler product)."""
    delta = g.p_bs - g.uav
    d = float(np.linalg.norm(delta))
    if d == 0.0:
        raise CoLocatedEndpoints("BS and UAV are co-located; direction undefined")
    return delta / d
