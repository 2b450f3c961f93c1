"""Dislocation model tests.

The rectangular solution is anchored to the published checkpoint values
of Okada (1985), Table 2, case 2; the point-source summation serves as
an independent oracle for random geometries (both routes must agree).
"""

import numpy as np
import pytest

from gnssdenoise.okada import (
    DislocationSource,
    ProjectionError,
    Station,
    StationNetwork,
    magnitude_to_geometry,
    okada_displacement,
    okada_point_oracle,
    project_local,
    rect_displacement_corner,
)


def grid_network(half_extent_km=150.0, n=7, lat0=40.0, lon0=-120.0):
    """Square station grid centered on (lat0, lon0)."""
    offsets = np.linspace(-half_extent_km, half_extent_km, n)
    stations = []
    for i, dy in enumerate(offsets):
        for j, dx in enumerate(offsets):
            lat = lat0 + dy / 110.57
            lon = lon0 + dx / (111.32 * np.cos(np.deg2rad(lat0)))
            stations.append(Station(f"S{i:02d}{j:02d}", lat, lon))
    return StationNetwork(stations)


def random_thrust(rng, lat0=40.0, lon0=-120.0):
    mw = rng.uniform(6.0, 7.0)
    geom = magnitude_to_geometry(mw)
    return DislocationSource(
        lat=lat0 + rng.uniform(-0.3, 0.3),
        lon=lon0 + rng.uniform(-0.3, 0.3),
        depth_km=rng.uniform(20.0, 40.0),
        strike_deg=rng.uniform(0.0, 360.0),
        dip_deg=rng.uniform(8.0, 30.0),
        rake_deg=rng.uniform(80.0, 100.0),
        length_km=geom["length_km"],
        width_km=geom["width_km"],
        slip_m=geom["slip_m"],
    )


# ---------------------------------------------------------------------------
# published checkpoint


def test_rectangular_solution_matches_okada_1985_table_2_case_2():
    # x=2, y=3, d=4, dip=70 deg, L=3, W=2, unit dislocations, lambda=mu
    expected = {
        "strike": (-8.689e-3, -4.298e-3, -2.747e-3),
        "dip": (-4.682e-3, -3.527e-2, -3.564e-2),
        "tensile": (-2.660e-4, +1.056e-2, +3.214e-3),
    }
    for mech, (ex, ey, ez) in expected.items():
        u = rect_displacement_corner(
            2.0, 3.0, depth_bottom_km=4.0, dip_deg=70.0,
            length_km=3.0, width_km=2.0,
            strike_slip_m=1.0 if mech == "strike" else 0.0,
            dip_slip_m=1.0 if mech == "dip" else 0.0,
            tensile_m=1.0 if mech == "tensile" else 0.0)
        np.testing.assert_allclose(
            u[:, 0], [ex, ey, ez], rtol=1.5e-3,
            err_msg=f"{mech}-slip component mismatch")


# ---------------------------------------------------------------------------
# projection


def test_project_local_reference_points():
    net = StationNetwork([
        Station("ORIG", 45.0, 10.0),
        Station("N1", 46.0, 10.0),
        Station("E1", 45.0, 11.0),
    ])
    xy = project_local(net, 45.0, 10.0)
    np.testing.assert_allclose(xy[0], [0.0, 0.0], atol=0)
    assert xy[1][1] == pytest.approx(110.57)
    assert xy[2][0] == pytest.approx(111.32 * np.cos(np.deg2rad(45.0)))
    assert xy[2][0] == pytest.approx(78.715, abs=5e-3)


def test_project_local_rejects_far_station_and_outside_origin():
    net = StationNetwork([Station("A", 40.0, -120.0), Station("B", 40.0, -95.0)])
    with pytest.raises(ProjectionError, match="2000 km"):
        project_local(net, 40.0, -120.0)
    near = StationNetwork([Station("A", 40.0, -120.0)])
    with pytest.raises(ProjectionError, match="outside"):
        project_local(near, 50.0, -120.0)


def test_station_network_validation():
    with pytest.raises(ValueError, match="unique"):
        StationNetwork([Station("A", 0, 0), Station("A", 1, 1)])
    with pytest.raises(ValueError, match="out of range"):
        StationNetwork([Station("A", 95.0, 0.0)])


def test_station_file_round_trip(tmp_path):
    net = grid_network(n=3)
    path = tmp_path / "stations.csv"
    net.to_csv(path)
    back = StationNetwork.from_csv(path)
    assert back.ids == net.ids
    np.testing.assert_array_equal(back.coords(), net.coords())


# ---------------------------------------------------------------------------
# closed form behavior


def test_zero_slip_gives_zero_field():
    src = random_thrust(np.random.default_rng(0))
    src.slip_m = 0.0
    u = okada_displacement(src, grid_network())
    np.testing.assert_array_equal(u, 0.0)


def test_dip_slip_field_is_symmetric_along_strike():
    # pure dip slip is mirror-symmetric about the plane normal to strike
    # through the centroid: stations at +/-s along strike see equal
    # along-dip displacement and opposite along-strike displacement.
    strike = 35.0
    phi = np.deg2rad(strike)
    lat0, lon0 = 40.0, -120.0
    s, y_off = 37.0, 21.0  # km, along-strike and up-dip-horizontal offsets
    stations = []
    for sign in (+1, -1):
        e = sign * s * np.sin(phi) - y_off * np.cos(phi)
        n = sign * s * np.cos(phi) + y_off * np.sin(phi)
        lat = lat0 + n / 110.57
        lon = lon0 + e / (111.32 * np.cos(np.deg2rad(lat0)))
        stations.append(Station(f"P{sign:+d}", lat, lon))
    src = DislocationSource(lat=lat0, lon=lon0, depth_km=25.0, strike_deg=strike,
                            dip_deg=14.0, rake_deg=90.0, length_km=30.0,
                            width_km=20.0, slip_m=0.5)
    u = okada_displacement(src, StationNetwork(stations))
    # rotate back to the fault frame
    sp, cp = np.sin(phi), np.cos(phi)
    along = u[:, 0] * sp + u[:, 1] * cp
    updip = -u[:, 0] * cp + u[:, 1] * sp
    assert updip[0] == pytest.approx(updip[1], rel=1e-9)
    assert along[0] == pytest.approx(-along[1], rel=1e-9)


def test_thrust_moves_hanging_wall_station_up_dip():
    # north-striking fault dipping east: a station above the centroid is
    # on the hanging wall and moves west (up-dip) for reverse slip.
    net = StationNetwork([Station("TOP", 40.0, -120.0)])
    src = DislocationSource(lat=40.0, lon=-120.0, depth_km=25.0, strike_deg=0.0,
                            dip_deg=12.0, rake_deg=90.0, length_km=30.0,
                            width_km=30.0, slip_m=0.5)
    u = okada_displacement(src, net)
    assert u[0, 0] < 0.0  # east component negative: westward


def test_displacement_decays_with_distance():
    rng = np.random.default_rng(42)
    for _ in range(5):
        src = random_thrust(rng, lat0=40.0, lon0=-120.0)
        src.lat, src.lon = 40.0, -120.0
        L = src.length_km
        near = grid_network(half_extent_km=1.0 * L, n=5)
        far_off = 6.0 * L
        far = StationNetwork([
            Station("F1", 40.0 + far_off / 110.57, -120.0),
            Station("F2", 40.0 - far_off / 110.57, -120.0),
            Station("F3", 40.0, -120.0 + far_off / (111.32 * np.cos(np.deg2rad(40.0)))),
            Station("F4", 40.0, -120.0 - far_off / (111.32 * np.cos(np.deg2rad(40.0)))),
        ])
        u_near = okada_displacement(src, near)
        u_far = okada_displacement(src, far)
        assert np.abs(u_far).max() < np.abs(u_near).max()


def test_slip_linearity_is_exact():
    rng = np.random.default_rng(3)
    src = random_thrust(rng)
    net = grid_network()
    u1 = okada_displacement(src, net)
    doubled = DislocationSource(**{**src.__dict__, "slip_m": 2.0 * src.slip_m})
    np.testing.assert_array_equal(okada_displacement(doubled, net), 2.0 * u1)


# ---------------------------------------------------------------------------
# point oracle and cross-validation


def test_point_oracle_zero_slip_and_nsub_validation():
    src = random_thrust(np.random.default_rng(1))
    with pytest.raises(ValueError):
        okada_point_oracle(src, grid_network(n=3), n_sub=1)
    src.slip_m = 0.0
    u, ok = okada_point_oracle(src, grid_network(n=3), n_sub=4)
    np.testing.assert_array_equal(u, 0.0)
    assert ok.all()


def test_point_oracle_richardson_convergence():
    rng = np.random.default_rng(7)
    src = random_thrust(rng, lat0=40.0, lon0=-120.0)
    src.lat, src.lon = 40.0, -120.0
    net = grid_network(half_extent_km=3.0 * src.length_km, n=5)
    closed = okada_displacement(src, net)
    diffs = []
    for n_sub in (16, 32, 64):
        approx, ok = okada_point_oracle(src, net, n_sub)
        assert ok.all()
        diffs.append(np.linalg.norm(approx - closed))
    assert diffs[0] > diffs[1] > diffs[2]


def test_closed_form_agrees_with_point_oracle_sampled():
    # 10 random thrust sources here; the acceptance suite runs 100
    rng = np.random.default_rng(2024)
    lat0, lon0 = 40.0, -120.0
    for _ in range(10):
        src = random_thrust(rng, lat0=lat0, lon0=lon0)
        src.lat, src.lon = lat0, lon0
        L = src.length_km
        ring = []
        for k, r_mult in enumerate(np.linspace(2.2, 4.0, 3)):
            for az in np.linspace(0, 2 * np.pi, 8, endpoint=False):
                e = r_mult * L * np.sin(az)
                n = r_mult * L * np.cos(az)
                ring.append(Station(f"R{k}{az:.2f}",
                                    lat0 + n / 110.57,
                                    lon0 + e / (111.32 * np.cos(np.deg2rad(lat0)))))
        net = StationNetwork(ring)
        closed = okada_displacement(src, net)
        approx, ok = okada_point_oracle(src, net, n_sub=64)
        assert ok.all()
        rel = np.linalg.norm(approx - closed) / np.linalg.norm(closed)
        assert rel < 0.01


# ---------------------------------------------------------------------------
# magnitude scaling


def test_magnitude_to_geometry_reference_values():
    geom = magnitude_to_geometry(6.0)
    # 1.5*6 + 9.1 = 18.1
    assert geom["moment_nm"] == pytest.approx(10.0 ** 18.1, rel=1e-12)
    assert geom["moment_nm"] == pytest.approx(1.2589e18, rel=1e-4)
    assert geom["length_km"] == pytest.approx(10.0, rel=1e-12)
    assert geom["width_km"] == pytest.approx(10.0, rel=1e-12)
    # hand check: M0 / (mu * area) = 10^18.1 / (30e9 * 1e8 m^2)
    assert geom["slip_m"] == pytest.approx(10.0 ** 18.1 / 3.0e18, rel=1e-12)
    assert geom["slip_m"] == pytest.approx(0.41964, abs=5e-5)


def test_magnitude_to_geometry_range_check():
    for bad in (5.4, 7.6):
        with pytest.raises(ValueError):
            magnitude_to_geometry(bad)


def test_source_moment_magnitude_round_trip():
    geom = magnitude_to_geometry(6.5)
    src = DislocationSource(lat=40, lon=-120, depth_km=30, strike_deg=350,
                            dip_deg=12, rake_deg=90, length_km=geom["length_km"],
                            width_km=geom["width_km"], slip_m=geom["slip_m"])
    assert src.moment_magnitude == pytest.approx(6.5, abs=1e-12)
