"""Link availability, Friis link budget and the Earth contact schedule."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .geo import VENUS, CircularOrbit, PlanetModel, elevation_angles, great_circle

BOLTZMANN = 1.380649e-23
LIGHT_SPEED = 299_792_458.0
HOUR = 3600.0
EARTH_DAY = 86400.0
ORBITER_ID = -1


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def disc_covering_gain_db(orbit: CircularOrbit, planet: PlanetModel = VENUS) -> float:
    """Gain of an antenna whose -3 dB beam just covers the planet's disc."""
    beam = math.degrees(2.0 * math.asin(planet.radius / orbit.semi_major_axis(planet)))
    return 10.0 * math.log10(41253.0 / beam**2)


@dataclass(frozen=True)
class LinkModel:
    balloon_range: float = 200e3
    min_elevation: float = math.radians(30.0)
    tx_power: float = 1.0
    tx_gain_db: float = 2.0
    rx_gain_db: float = 2.0
    system_loss_db: float = 3.0
    noise_temperature: float = 730.0
    frequency: float = 401e6
    required_ebn0_db: float = 3.0
    margin_db: float = 3.0

    def __post_init__(self):
        if not self.balloon_range > 0:
            raise ValueError("balloon link range must be positive")
        if not 0.0 <= self.min_elevation <= math.pi / 2:
            raise ValueError("minimum elevation must lie in [0, pi/2]")
        if not (self.tx_power > 0 and self.noise_temperature > 0 and self.frequency > 0):
            raise ValueError("power, noise temperature and frequency must be positive")

    def for_orbiter(self, orbit: CircularOrbit, planet: PlanetModel = VENUS) -> "LinkModel":
        """Copy with the receive gain of a disc-covering orbiter antenna."""
        return replace(self, rx_gain_db=disc_covering_gain_db(orbit, planet))


def received_power(distance, model: LinkModel):
    wavelength = LIGHT_SPEED / model.frequency
    path = (wavelength / (4.0 * math.pi * np.asarray(distance, dtype=float))) ** 2
    gain = db_to_linear(model.tx_gain_db + model.rx_gain_db - model.system_loss_db)
    return model.tx_power * gain * path


def data_rate(distance, model: LinkModel = LinkModel()):
    """(raw, constrained) bit rates; the constrained rate is the largest power of 2 <= raw."""
    if np.any(np.asarray(distance) <= 0):
        raise ValueError("range must be positive")
    n0 = BOLTZMANN * model.noise_temperature
    raw = received_power(distance, model) / (n0 * db_to_linear(model.required_ebn0_db + model.margin_db))
    constrained = np.where(raw >= 1.0, 2.0 ** np.floor(np.log2(np.maximum(raw, 1.0))), 0.0)
    if np.ndim(raw) == 0:
        return float(raw), float(constrained)
    return raw, constrained


@lru_cache(maxsize=32)
def _pairs(n: int):
    return np.triu_indices(n, k=1)


def balloon_links(lon, lat, model: LinkModel, planet: PlanetModel = VENUS):
    """Index pairs (i < j) of balloons within link range, with their distances."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    i, j = _pairs(lon.size)
    d = great_circle(lon[i], lat[i], lon[j], lat[j], planet.radius)
    ok = d <= model.balloon_range
    return i[ok], j[ok], d[ok]


def orbiter_links(lon, lat, alt, orbiter_position, model: LinkModel, planet: PlanetModel = VENUS) -> np.ndarray:
    """Mask of balloons that see the orbiter at or above the minimum elevation."""
    el = elevation_angles(lon, lat, alt, orbiter_position, planet)
    return np.atleast_1d(el >= model.min_elevation)


def links_available(balloons, orbiter_position, model: LinkModel = LinkModel(), t: float = 0.0, planet: PlanetModel = VENUS) -> set:
    """Linked agent pairs as frozensets; balloons are list indices, the orbiter is ``ORBITER_ID``.

    ``balloons`` is a sequence of GeoPoints. ``t`` is accepted for symmetry with
    time-dependent link models and does not affect the geometric rules.
    """
    pts = list(balloons)
    out = set()
    if not pts:
        return out
    lon = np.array([p.lon for p in pts])
    lat = np.array([p.lat for p in pts])
    alt = np.array([p.alt for p in pts])
    for a, b, _ in zip(*balloon_links(lon, lat, model, planet)):
        out.add(frozenset((int(a), int(b))))
    if orbiter_position is not None:
        for k in np.flatnonzero(orbiter_links(lon, lat, alt, orbiter_position, model, planet)):
            out.add(frozenset((int(k), ORBITER_ID)))
    return out


@dataclass(frozen=True)
class GroundSchedule:
    contact_times: tuple[float, ...] = (8 * HOUR, 20 * HOUR)
    uplink_latency: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        times = tuple(float(c) for c in self.contact_times)
        if len(times) != 2 or len(set(times)) != 2 or any(not 0.0 <= c < EARTH_DAY for c in times):
            raise ValueError("need two distinct contact times within [0, 24 h)")
        if self.uplink_latency < 0:
            raise ValueError("uplink latency must be non-negative")
        object.__setattr__(self, "contact_times", tuple(sorted(times)))


def next_ground_contact(schedule: GroundSchedule, t: float) -> float:
    """Earliest contact strictly after ``t``."""
    local = t - schedule.offset
    day = math.floor(local / EARTH_DAY)
    for d in (day, day + 1):
        for c in schedule.contact_times:
            tc = d * EARTH_DAY + c + schedule.offset
            if tc > t:
                return tc
    raise AssertionError("unreachable")


def contacts_between(schedule: GroundSchedule, t0: float, t1: float) -> list[float]:
    """Contacts in the half-open window (t0, t1]."""
    out = []
    t = next_ground_contact(schedule, t0)
    while t <= t1:
        out.append(t)
        t = next_ground_contact(schedule, t)
    return out


def write_link_log(rows, path) -> None:
    """Rows of (t, pair label, range m, raw bps, constrained bps)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "pair", "range_m", "raw_bps", "constrained_bps"])
        for t, pair, rng, raw, con in rows:
            w.writerow([f"{t:.1f}", pair, f"{rng:.1f}", f"{raw:.6g}", f"{con:.0f}"])
