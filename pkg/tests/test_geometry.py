import numpy as np
import pytest

from uavlink.errors import CoLocatedEndpoints
from uavlink.geometry import (GeometryState, elevation_azimuth, horizontal_distance,
                              slant_distance, unit_direction)


def test_horizontal_distance_345():
    g = GeometryState(p_uav=(3.0, 4.0, 50.0), h_bs=25.0)
    assert horizontal_distance(g) == 5.0


def test_horizontal_distance_zenith():
    g = GeometryState(p_uav=(0.0, 0.0, 50.0), h_bs=25.0)
    assert horizontal_distance(g) == 0.0


def test_horizontal_distance_sqrt2():
    g = GeometryState(p_uav=(1.0, 1.0, 10.0), h_bs=25.0)
    assert horizontal_distance(g) == pytest.approx(np.sqrt(2.0), abs=1e-15)


def test_elevation_equal_legs():
    g = GeometryState(p_uav=(100.0, 0.0, 125.0), h_bs=25.0)  # r = 100, dz = 100
    theta, _ = elevation_azimuth(g)
    assert theta == pytest.approx(np.pi / 4.0, abs=1e-15)


def test_elevation_zenith_limit():
    g = GeometryState(p_uav=(0.0, 0.0, 100.0), h_bs=25.0)  # r = 0, z != h_bs
    theta, _ = elevation_azimuth(g)
    assert theta == pytest.approx(np.pi / 2.0, abs=1e-15)


def test_azimuth_along_y_horizontal():
    g = GeometryState(p_uav=(0.0, 5.0, 25.0), h_bs=25.0)  # z = h_bs
    theta, phi = elevation_azimuth(g)
    assert theta == 0.0
    assert phi == pytest.approx(np.pi / 2.0, abs=1e-15)


def test_colocated_raises():
    g = GeometryState(p_uav=(0.0, 0.0, 25.0), h_bs=25.0)
    with pytest.raises(CoLocatedEndpoints):
        elevation_azimuth(g)
    with pytest.raises(CoLocatedEndpoints):
        unit_direction(g)


def test_unit_direction_axis_cases():
    g = GeometryState(p_uav=(10.0, 0.0, 25.0), h_bs=25.0)
    assert np.allclose(unit_direction(g), [-1.0, 0.0, 0.0], atol=1e-15)
    g = GeometryState(p_uav=(0.0, 0.0, 5.0), h_bs=25.0)  # UAV 20 m below BS height
    assert np.allclose(unit_direction(g), [0.0, 0.0, 1.0], atol=1e-15)


def test_unit_direction_345_components():
    g = GeometryState(p_uav=(3.0, 0.0, 29.0), h_bs=25.0)  # offset (3, 0, 4)
    assert np.allclose(unit_direction(g), [-0.6, 0.0, -0.8], atol=1e-15)


def test_unit_norm_random_geometries():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        p = rng.uniform([-500, -500, 1.0], [500, 500, 500])
        g = GeometryState(p_uav=tuple(p), h_bs=float(rng.uniform(1, 100)))
        assert abs(np.linalg.norm(unit_direction(g)) - 1.0) < 1e-12


def test_theta_monotone_in_height_gap():
    rng = np.random.default_rng(12)
    for _ in range(200):
        r = rng.uniform(1.0, 300.0)
        h_bs = 25.0
        gaps = np.sort(rng.uniform(0.1, 400.0, size=8))
        thetas = []
        for dz in gaps:
            g = GeometryState(p_uav=(r, 0.0, h_bs + dz), h_bs=h_bs)
            thetas.append(elevation_azimuth(g)[0])
        assert np.all(np.diff(thetas) >= -1e-15)


def test_pythagorean_identity():
    rng = np.random.default_rng(13)
    for _ in range(500):
        p = rng.uniform([-200, -200, 1.0], [200, 200, 300])
        g = GeometryState(p_uav=tuple(p), h_bs=30.0)
        r = horizontal_distance(g)
        d = slant_distance(g)
        assert d * d == pytest.approx(r * r + (30.0 - p[2]) ** 2, rel=1e-12)
        assert d >= r and d >= abs(30.0 - p[2])


def test_invalid_state_rejected():
    with pytest.raises(ValueError):
        GeometryState(p_uav=(1.0, 1.0, -5.0), h_bs=25.0)
    with pytest.raises(ValueError):
        GeometryState(p_uav=(1.0, 1.0, 5.0), h_bs=0.0)
