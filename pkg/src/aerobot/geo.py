"""Spherical geodesy, circular orbits and visibility geometry.

Angles are radians, lengths meters. Vectorized helpers accept numpy arrays;
the ``GeoPoint``-based functions are thin scalar wrappers around them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_lon(lon):
    """Wrap longitude(s) into [-pi, pi)."""
    return (np.asarray(lon) + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class PlanetModel:
    radius: float = 6_051_800.0
    gravitational_parameter: float = 3.24859e14

    def __post_init__(self):
        if not (self.radius > 0 and self.gravitational_parameter > 0):
            raise ValueError("planet radius and gravitational parameter must be positive")


VENUS = PlanetModel()


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float
    alt: float = 0.0

    def __post_init__(self):
        if not (-math.pi <= self.lon <= math.pi):
            object.__setattr__(self, "lon", float(wrap_lon(self.lon)))
        if not (-math.pi / 2 <= self.lat <= math.pi / 2):
            raise ValueError(f"latitude {self.lat!r} outside [-pi/2, pi/2]")
        if self.alt < 0:
            raise ValueError(f"altitude {self.alt!r} is negative")

    @classmethod
    def from_degrees(cls, lon_deg: float, lat_deg: float, alt: float = 0.0) -> "GeoPoint":
        return cls(math.radians(lon_deg), math.radians(lat_deg), alt)


@dataclass(frozen=True)
class CircularOrbit:
    altitude: float
    inclination: float = 0.0
    raan: float = 0.0
    initial_phase: float = 0.0
    retrograde: bool = False

    def __post_init__(self):
        if self.altitude <= 0:
            raise ValueError("orbit altitude must be positive")

    def semi_major_axis(self, planet: PlanetModel = VENUS) -> float:
        return planet.radius + self.altitude

    def period(self, planet: PlanetModel = VENUS) -> float:
        a = self.semi_major_axis(planet)
        return TWO_PI * math.sqrt(a**3 / planet.gravitational_parameter)


# Orbit presets. The near-polar inclination is a default, not a mission value.
VAMOS_ORBIT = CircularOrbit(altitude=30_000e3, inclination=0.0)
VERITAS_ORBIT = CircularOrbit(altitude=220e3, inclination=math.radians(88.9))
ORBITS = {"vamos": VAMOS_ORBIT, "veritas": VERITAS_ORBIT}


def central_angle(lon1, lat1, lon2, lat2):
    """Great-circle central angle, stable for coincident and antipodal points."""
    dlon = np.asarray(lon2) - np.asarray(lon1)
    c1, s1 = np.cos(lat1), np.sin(lat1)
    c2, s2 = np.cos(lat2), np.sin(lat2)
    cd = np.cos(dlon)
    y = np.hypot(c2 * np.sin(dlon), c1 * s2 - s1 * c2 * cd)
    x = s1 * s2 + c1 * c2 * cd
    return np.arctan2(y, x)


def great_circle(lon1, lat1, lon2, lat2, radius: float):
    return radius * central_angle(lon1, lat1, lon2, lat2)


def geodesic_distance(a: GeoPoint, b: GeoPoint, planet: PlanetModel = VENUS) -> float:
    """Surface great-circle distance between two points; altitude is ignored."""
    return float(great_circle(a.lon, a.lat, b.lon, b.lat, planet.radius))


def to_cartesian(lon, lat, r):
    lon, lat, r = np.asarray(lon), np.asarray(lat), np.asarray(r)
    cl = np.cos(lat)
    return np.stack([r * cl * np.cos(lon), r * cl * np.sin(lon), r * np.sin(lat)], axis=-1)


def orbit_position(orbit: CircularOrbit, planet: PlanetModel, t) -> np.ndarray:
    """Position vector(s) of the spacecraft in the (non-rotating) planet frame."""
    a = orbit.semi_major_axis(planet)
    n = TWO_PI / orbit.period(planet)
    if orbit.retrograde:
        n = -n
    u = orbit.initial_phase + n * np.asarray(t, dtype=float)
    cu, su = np.cos(u), np.sin(u)
    co, so = math.cos(orbit.raan), math.sin(orbit.raan)
    ci, si = math.cos(orbit.inclination), math.sin(orbit.inclination)
    x = co * cu - so * su * ci
    y = so * cu + co * su * ci
    z = su * si
    return a * np.stack([x, y, z], axis=-1)


def propagate_orbit(orbit: CircularOrbit, planet: PlanetModel, t: float) -> tuple[GeoPoint, np.ndarray]:
    """Sub-spacecraft point and 3D position at time ``t`` seconds."""
    if t < 0:
        raise ValueError("t must be non-negative")
    pos = orbit_position(orbit, planet, t)
    r = float(np.linalg.norm(pos))
    lat = math.asin(max(-1.0, min(1.0, pos[2] / r)))
    lon = math.atan2(pos[1], pos[0])
    return GeoPoint(lon, lat, 0.0), pos


def elevation_angles(lon, lat, alt, target, planet: PlanetModel = VENUS):
    """Elevation of ``target`` (3-vector) above the local horizontal of each observer."""
    obs = to_cartesian(lon, lat, planet.radius + np.asarray(alt))
    los = np.asarray(target) - obs
    up = obs / np.linalg.norm(obs, axis=-1, keepdims=True)
    vertical = np.sum(los * up, axis=-1)
    lx, ly, lz = los[..., 0], los[..., 1], los[..., 2]
    ux, uy, uz = up[..., 0], up[..., 1], up[..., 2]
    # |los x up|, written out: np.cross carries heavy per-call overhead
    horizontal = np.sqrt((ly * uz - lz * uy) ** 2 + (lz * ux - lx * uz) ** 2 + (lx * uy - ly * ux) ** 2)
    return np.arctan2(vertical, horizontal)


def elevation_angle(observer: GeoPoint, target_position, planet: PlanetModel = VENUS) -> float:
    return float(elevation_angles(observer.lon, observer.lat, observer.alt, target_position, planet))


def limb_angle(orbiter_position, planet: PlanetModel = VENUS) -> float:
    """Geocentric half-angle of the surface cap visible from the orbiter."""
    return math.acos(planet.radius / float(np.linalg.norm(orbiter_position)))


def visible_mask(lon, lat, orbiter_position, planet: PlanetModel = VENUS):
    pos = np.asarray(orbiter_position, dtype=float)
    r = float(np.linalg.norm(pos))
    sub_lon = math.atan2(pos[1], pos[0])
    sub_lat = math.asin(max(-1.0, min(1.0, pos[2] / r)))
    return central_angle(sub_lon, sub_lat, lon, lat) < math.acos(planet.radius / r)


def visible_from_orbiter(surface_point: GeoPoint, orbiter_position, planet: PlanetModel = VENUS) -> bool:
    """True iff the point lies strictly inside the cap bounded by the orbiter's limb."""
    return bool(visible_mask(surface_point.lon, surface_point.lat, orbiter_position, planet))


# cos(lat) floor for zonal displacement near the poles
MIN_COS_LAT = math.cos(math.radians(89.5))


def displace(lon, lat, alt, zonal, meridional, dt: float, planet: PlanetModel = VENUS):
    """Horizontal drift over ``dt`` seconds at altitude ``alt``; returns (lon, lat)."""
    r = planet.radius + np.asarray(alt, dtype=float)
    coslat = np.maximum(np.cos(lat), MIN_COS_LAT)
    new_lat = np.clip(np.asarray(lat) + np.asarray(meridional) * dt / r, -math.pi / 2, math.pi / 2)
    new_lon = wrap_lon(np.asarray(lon) + np.asarray(zonal) * dt / (r * coslat))
    return new_lon, new_lat


def destination(lon, lat, distance, bearing, radius: float):
    """Point reached by travelling ``distance`` along a great circle at ``bearing`` (from north)."""
    d = np.asarray(distance, dtype=float) / radius
    sin_lat = np.sin(lat) * np.cos(d) + np.cos(lat) * np.sin(d) * np.cos(bearing)
    lat2 = np.arcsin(np.clip(sin_lat, -1.0, 1.0))
    lon2 = np.asarray(lon) + np.arctan2(np.sin(bearing) * np.sin(d) * np.cos(lat), np.cos(d) - np.sin(lat) * sin_lat)
    return wrap_lon(lon2), lat2
