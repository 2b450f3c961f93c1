"""Static surface displacement of a rectangular dislocation in an
elastic half-space, after Okada (1985), plus an independent
point-source summation oracle and magnitude scaling relations.

Conventions
-----------
* Strike ``phi`` is degrees clockwise from north; the fault dips to the
  right of the strike direction (dip ``delta`` in (0, 90]).
* Sources are positioned by the surface projection of the fault
  centroid (lat/lon) and the centroid depth in km.
* Rake follows the usual convention: 0 = left-lateral strike slip,
  90 = reverse (thrust).
* Only horizontal components are returned, in mm, as (east, north).

Internally the solution is evaluated in the fault frame: x along
strike, y horizontal up-dip, z up. The elastic medium is a Poisson
solid (nu = 0.25) with shear modulus 30 GPa.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

KM_PER_DEG_LAT = 110.57
KM_PER_DEG_LON_EQUATOR = 111.32
POISSON_RATIO = 0.25
SHEAR_MODULUS_PA = 30e9
# mu / (lambda + mu) for a Poisson solid: 1 - 2*nu
_ALPHA = 1.0 - 2.0 * POISSON_RATIO

_EPS = 1e-12


class ProjectionError(ValueError):
    """Flat-earth projection used outside its validity range."""


@dataclass(frozen=True)
class Station:
    id: str
    lat: float
    lon: float


@dataclass
class StationNetwork:
    """An ordered set of GNSS stations with unique ids."""

    stations: list[Station]

    def __post_init__(self):
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ValueError("station ids are not unique")
        for s in self.stations:
            if abs(s.lat) > 90 or abs(s.lon) > 180:
                raise ValueError(f"station {s.id}: lat/lon out of range "
                                 f"({s.lat}, {s.lon})")

    @property
    def count(self) -> int:
        return len(self.stations)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.stations]

    def coords(self) -> np.ndarray:
        """[N, 2] array of (lat, lon) in degrees."""
        return np.array([[s.lat, s.lon] for s in self.stations], dtype=np.float64)

    @classmethod
    def from_csv(cls, path) -> "StationNetwork":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or \
                    [f.strip() for f in reader.fieldnames] != ["id", "lat", "lon"]:
                raise ValueError(
                    f"{path}: expected header 'id,lat,lon', got {reader.fieldnames}")
            stations = [Station(row["id"].strip(), float(row["lat"]), float(row["lon"]))
                        for row in reader]
        return cls(stations)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "lat", "lon"])
            for s in self.stations:
                writer.writerow([s.id, repr(float(s.lat)), repr(float(s.lon))])


@dataclass
class DislocationSource:
    """One rectangular slip patch plus its temporal ramp parameters."""

    lat: float
    lon: float
    depth_km: float           # centroid depth, positive down
    strike_deg: float
    dip_deg: float
    rake_deg: float
    length_km: float
    width_km: float
    slip_m: float
    t0_days: float = 30.0     # ramp inflection time within the window
    duration_days: float = 20.0

    def __post_init__(self):
        if not (0.0 < self.dip_deg <= 90.0):
            raise ValueError(f"dip {self.dip_deg} outside (0, 90]")
        if self.depth_km <= 0:
            raise ValueError(f"depth {self.depth_km} must be positive (km down)")
        if self.length_km <= 0 or self.width_km <= 0 or self.slip_m < 0:
            raise ValueError("fault dimensions must be positive, slip nonnegative")
        if self.duration_days <= 0:
            raise ValueError(f"duration {self.duration_days} must be positive")

    @property
    def moment_magnitude(self) -> float:
        """Mw implied by slip x area and the module's shear modulus."""
        m0 = SHEAR_MODULUS_PA * self.slip_m * self.length_km * self.width_km * 1e6
        return (np.log10(m0) - 9.1) / 1.5


def project_local(network: StationNetwork, origin_lat: float,
                  origin_lon: float) -> np.ndarray:
    """Equirectangular flat-earth projection to km, returns [N, 2] (x=east, y=north).

    The origin must lie within the network bounding box padded by 5
    degrees, and no station may be farther than 2000 km from the origin
    (beyond that the flat-earth approximation is not acceptable here).
    """
    coords = network.coords()
    lat_lo, lon_lo = coords.min(axis=0) - 5.0
    lat_hi, lon_hi = coords.max(axis=0) + 5.0
    if not (lat_lo <= origin_lat <= lat_hi and lon_lo <= origin_lon <= lon_hi):
        raise ProjectionError(
            f"origin ({origin_lat}, {origin_lon}) outside padded network box "
            f"[{lat_lo}, {lat_hi}] x [{lon_lo}, {lon_hi}]")
    x = (coords[:, 1] - origin_lon) * KM_PER_DEG_LON_EQUATOR * \
        np.cos(np.deg2rad(origin_lat))
    y = (coords[:, 0] - origin_lat) * KM_PER_DEG_LAT
    dist = np.hypot(x, y)
    if np.any(dist > 2000.0):
        worst = network.stations[int(np.argmax(dist))]
        raise ProjectionError(
            f"station {worst.id} is {dist.max():.0f} km from origin; "
            "flat-earth projection invalid beyond 2000 km")
    return np.column_stack([x, y])


def magnitude_to_geometry(mw: float) -> dict[str, float]:
    """Square constant-stress-drop fault geometry for a moment magnitude.

    M0 = 10^(1.5 Mw + 9.1) N m; L = W = 10^((Mw-4)/2) km; slip closes
    the moment budget with the module's shear modulus.
    """
    if not (5.5 <= mw <= 7.5):
        raise ValueError(f"Mw {mw} outside supported range [5.5, 7.5]")
    m0 = 10.0 ** (1.5 * mw + 9.1)
    side_km = 10.0 ** ((mw - 4.0) / 2.0)
    slip = m0 / (SHEAR_MODULUS_PA * side_km * side_km * 1e6)
    return {"length_km": side_km, "width_km": side_km, "slip_m": slip,
            "moment_nm": m0}


# ---------------------------------------------------------------------------
# rectangular source, corner convention (Okada 1985, finite fault)


def _safe_atan(num, den):
    out = np.zeros(np.broadcast_shapes(np.shape(num), np.shape(den)))
    ok = np.abs(den) > _EPS
    out[ok] = np.arctan(np.asarray(num)[ok] / np.asarray(den)[ok])
    return out


def _rect_term(xi, eta, q, sd, cd):
    """One Chinnery corner term; returns 9 fault-frame components
    (x, y, z for strike-slip, dip-slip, tensile), per unit slip and
    without the -1/(2 pi) factor.
    """
    xi = np.asarray(xi, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    R = np.sqrt(xi * xi + eta * eta + q * q)
    X = np.sqrt(xi * xi + q * q)
    dbar = eta * sd - q * cd
    ybar = eta * cd + q * sd

    with np.errstate(divide="ignore", invalid="ignore"):
        # guarded reciprocals / logs on the singular rays
        r_eta = R + eta
        near_eta = np.abs(r_eta) < _EPS
        inv_r_eta = np.where(near_eta, 0.0, 1.0 / np.where(near_eta, 1.0, r_eta))
        ln_r_eta = np.where(near_eta, -np.log(R - eta), np.log(np.where(near_eta, 1.0, r_eta)))
        r_xi = R + xi
        near_xi = np.abs(r_xi) < _EPS
        inv_r_xi = np.where(near_xi, 0.0, 1.0 / np.where(near_xi, 1.0, r_xi))
        theta = _safe_atan(xi * eta, q * R)
        inv_r_dbar = 1.0 / (R + dbar)

        if abs(cd) > 1e-9:
            i5 = _ALPHA * 2.0 / cd * _safe_atan(
                eta * (X + q * cd) + X * (R + X) * sd, xi * (R + X) * cd)
            i5 = np.where(np.abs(xi) < _EPS, 0.0, i5)
            i4 = _ALPHA / cd * (np.log(R + dbar) - sd * ln_r_eta)
            i3 = _ALPHA * (ybar * inv_r_dbar / cd - ln_r_eta) + sd / cd * i4
            i2 = _ALPHA * (-ln_r_eta) - i3
            i1 = _ALPHA * (-xi * inv_r_dbar / cd) - sd / cd * i5
        else:
            i1 = -_ALPHA / 2.0 * xi * q * inv_r_dbar ** 2
            i3 = _ALPHA / 2.0 * (eta * inv_r_dbar + ybar * q * inv_r_dbar ** 2
                                 - ln_r_eta)
            i2 = _ALPHA * (-ln_r_eta) - i3
            i4 = -_ALPHA * q * inv_r_dbar
            i5 = -_ALPHA * xi * sd * inv_r_dbar

        rr_eta = inv_r_eta / R
        rr_xi = inv_r_xi / R

        ux_ss = xi * q * rr_eta + theta + i1 * sd
        uy_ss = ybar * q * rr_eta + q * cd * inv_r_eta + i2 * sd
        uz_ss = dbar * q * rr_eta + q * sd * inv_r_eta + i4 * sd

        ux_ds = q / R - i3 * sd * cd
        uy_ds = ybar * q * rr_xi + cd * theta - i1 * sd * cd
        uz_ds = dbar * q * rr_xi + sd * theta - i5 * sd * cd

        ux_tf = q * q * rr_eta - i3 * sd * sd
        uy_tf = -dbar * q * rr_xi - sd * (xi * q * rr_eta - theta) - i1 * sd * sd
        uz_tf = ybar * q * rr_xi + cd * (xi * q * rr_eta - theta) - i5 * sd * sd

    return np.stack([ux_ss, uy_ss, uz_ss,
                     ux_ds, uy_ds, uz_ds,
                     ux_tf, uy_tf, uz_tf])


def rect_displacement_corner(x, y, depth_bottom_km: float, dip_deg: float,
                             length_km: float, width_km: float,
                             strike_slip_m: float, dip_slip_m: float,
                             tensile_m: float = 0.0) -> np.ndarray:
    """Fault-frame surface displacement, corner convention.

    The fault occupies along-strike [0, L] and up-dip [0, W] from its
    bottom edge at depth ``depth_bottom_km`` below the x axis. ``x``/``y``
    are fault-frame station coordinates in km. Returns [3, N] in the
    slip units (x along strike, y horizontal up-dip, z up).
    """
    sd = np.sin(np.deg2rad(dip_deg))
    cd = np.cos(np.deg2rad(dip_deg))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    p = y * cd + depth_bottom_km * sd
    q = y * sd - depth_bottom_km * cd

    total = np.zeros((9,) + x.shape)
    for xi, eta, sign in ((x, p, 1.0),
                          (x, p - width_km, -1.0),
                          (x - length_km, p, -1.0),
                          (x - length_km, p - width_km, 1.0)):
        total += sign * _rect_term(xi, eta, q, sd, cd)

    fac = 1.0 / (2.0 * np.pi)
    u = np.zeros((3,) + x.shape)
    u -= strike_slip_m * fac * total[0:3]
    u -= dip_slip_m * fac * total[3:6]
    u += tensile_m * fac * total[6:9]
    return u


def _fault_frame(source: DislocationSource, xy_km: np.ndarray):
    """Rotate east/north offsets into the fault frame of a source.

    Returns (x_f along strike, y_f horizontal up-dip) for a fault whose
    up-dip side is 90 degrees left of strike.
    """
    phi = np.deg2rad(source.strike_deg)
    sp, cp = np.sin(phi), np.cos(phi)
    e, n = xy_km[:, 0], xy_km[:, 1]
    x_f = e * sp + n * cp
    y_f = -e * cp + n * sp
    return x_f, y_f


def _to_east_north(source: DislocationSource, ux, uy) -> np.ndarray:
    phi = np.deg2rad(source.strike_deg)
    sp, cp = np.sin(phi), np.cos(phi)
    east = ux * sp - uy * cp
    north = ux * cp + uy * sp
    return np.column_stack([east, north])


def _slip_components(source: DislocationSource):
    rake = np.deg2rad(source.rake_deg)
    return source.slip_m * np.cos(rake), source.slip_m * np.sin(rake)


def okada_displacement(source: DislocationSource,
                       network: StationNetwork) -> np.ndarray:
    """Closed-form horizontal surface displacement, [N, 2] (east, north) mm.

    Stations that land exactly on a singular edge ray of the solution
    are perturbed by 1 m and a warning is issued.
    """
    if source.slip_m == 0.0:
        return np.zeros((network.count, 2))
    xy = project_local(network, source.lat, source.lon)
    x_f, y_f = _fault_frame(source, xy)
    u1, u2 = _slip_components(source)
    d_bottom = source.depth_km + 0.5 * source.width_km * \
        np.sin(np.deg2rad(source.dip_deg))
    # corner convention: shift the centered fault to [0, L] x [0, W]
    x_c = x_f + 0.5 * source.length_km
    y_c = y_f + 0.5 * source.width_km * np.cos(np.deg2rad(source.dip_deg))
    u = rect_displacement_corner(x_c, y_c, d_bottom, source.dip_deg,
                                 source.length_km, source.width_km, u1, u2)
    bad = ~np.all(np.isfinite(u), axis=0)
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} station(s) on a dislocation singularity; "
            "evaluation point perturbed by 1 m", RuntimeWarning)
        u_bad = rect_displacement_corner(
            x_c[bad] + 1e-3, y_c[bad] + 1e-3, d_bottom, source.dip_deg,
            source.length_km, source.width_km, u1, u2)
        u[:, bad] = u_bad
        if not np.all(np.isfinite(u)):
            raise FloatingPointError(
                "dislocation solution non-finite even after perturbation")
    return _to_east_north(source, u[0], u[1]) * 1000.0


# ---------------------------------------------------------------------------
# point-source oracle


def _point_term(x, y, d, sd, cd):
    """Surface displacement of a buried point dislocation per unit
    potency (slip x area), without the 1/(2 pi) factors; 9 components
    ordered as in :func:`_rect_term`.
    """
    R = np.sqrt(x * x + y * y + d * d)
    p = y * cd + d * sd
    q = y * sd - d * cd
    R3 = R ** 3
    R5 = R ** 5
    Rd = R + d

    i1 = _ALPHA * y * (1.0 / (R * Rd ** 2) - x * x * (3.0 * R + d) / (R3 * Rd ** 3))
    i2 = _ALPHA * x * (1.0 / (R * Rd ** 2) - y * y * (3.0 * R + d) / (R3 * Rd ** 3))
    i3 = _ALPHA * (x / R3) - i2
    i4 = _ALPHA * (-x * y * (2.0 * R + d) / (R3 * Rd ** 2))
    i5 = _ALPHA * (1.0 / (R * Rd) - x * x * (2.0 * R + d) / (R3 * Rd ** 2))

    ux_ss = 3.0 * x * x * q / R5 + i1 * sd
    uy_ss = 3.0 * x * y * q / R5 + i2 * sd
    uz_ss = 3.0 * x * d * q / R5 + i4 * sd

    ux_ds = 3.0 * x * p * q / R5 - i3 * sd * cd
    uy_ds = 3.0 * y * p * q / R5 - i1 * sd * cd
    uz_ds = 3.0 * d * p * q / R5 - i5 * sd * cd

    ux_tf = 3.0 * x * q * q / R5 - i3 * sd * sd
    uy_tf = 3.0 * y * q * q / R5 - i1 * sd * sd
    uz_tf = 3.0 * d * q * q / R5 - i5 * sd * sd

    return np.stack([ux_ss, uy_ss, uz_ss,
                     ux_ds, uy_ds, uz_ds,
                     ux_tf, uy_tf, uz_tf])


def okada_point_oracle(source: DislocationSource, network: StationNetwork,
                       n_sub: int) -> tuple[np.ndarray, np.ndarray]:
    """Discretize the fault into n_sub x n_sub point sources and sum.

    Returns (displacement [N, 2] mm, reliable [N] bool). Stations whose
    3-D distance to the fault rectangle is smaller than one sub-patch
    diagonal are flagged unreliable (the point-source limit has not
    converged there) and should be excluded from comparisons.
    """
    if n_sub < 2:
        raise ValueError(f"n_sub {n_sub} must be >= 2")
    if source.slip_m == 0.0:
        return np.zeros((network.count, 2)), np.ones(network.count, dtype=bool)
    xy = project_local(network, source.lat, source.lon)
    x_f, y_f = _fault_frame(source, xy)
    sd = np.sin(np.deg2rad(source.dip_deg))
    cd = np.cos(np.deg2rad(source.dip_deg))
    u1, u2 = _slip_components(source)

    ds = source.length_km / n_sub
    dw = source.width_km / n_sub
    potency = u1 * ds * dw, u2 * ds * dw  # (strike, dip), m km^2
    fac = 1.0 / (2.0 * np.pi)
    # patch centers in centered fault-plane coordinates (s along strike,
    # w up-dip from the centroid)
    s_centers = -0.5 * source.length_km + (np.arange(n_sub) + 0.5) * ds
    w_centers = -0.5 * source.width_km + (np.arange(n_sub) + 0.5) * dw

    u = np.zeros((3, network.count))
    for w in w_centers:
        d_pt = source.depth_km - w * sd
        y_rel = y_f - w * cd
        for s in s_centers:
            term = _point_term(x_f - s, y_rel, d_pt, sd, cd)
            u -= potency[0] * fac * term[0:3]
            u -= potency[1] * fac * term[3:6]

    # distance from each station to the fault rectangle
    s_sta = x_f
    w_sta = y_f * cd + source.depth_km * sd
    s_cl = np.clip(s_sta, -0.5 * source.length_km, 0.5 * source.length_km)
    w_cl = np.clip(w_sta, -0.5 * source.width_km, 0.5 * source.width_km)
    nearest = np.stack([s_cl, w_cl * cd, -source.depth_km + w_cl * sd])
    station = np.stack([x_f, y_f, np.zeros_like(x_f)])
    dist = np.linalg.norm(station - nearest, axis=0)
    reliable = dist > np.hypot(ds, dw)
    return _to_east_north(source, u[0], u[1]) * 1000.0, reliable
