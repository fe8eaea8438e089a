"""Volcano catalogs, eruption sampling and VEI -> detection radius."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .geo import GeoPoint

DAY = 86400.0

# km, indexed by VEI
DETECTION_RADIUS_KM = (110.0, 370.0, 1400.0, 4100.0, 6800.0, 9500.0, 11000.0)

DEFAULT_VEI_PROBS = (0.07, 0.17, 0.48, 0.20, 0.06, 0.015, 0.005)

# events / site / second; see scripts/calibrate_rate.py
NOMINAL_SITE_RATE = 0.00093 / DAY


class CatalogError(ValueError):
    pass


def detection_radius_for(vei: int, radius_multiplier: float = 1.0) -> float:
    """Detection radius in meters for an eruption of the given VEI."""
    if isinstance(vei, bool) or int(vei) != vei or not 0 <= vei <= 6:
        raise ValueError(f"VEI must be an integer in [0, 6], got {vei!r}")
    if not radius_multiplier > 0:
        raise ValueError("radius multiplier must be positive")
    return DETECTION_RADIUS_KM[int(vei)] * 1000.0 * radius_multiplier


@dataclass(frozen=True)
class VolcanoSite:
    id: str
    location: GeoPoint
    size: str = "large"


@dataclass(frozen=True)
class VolcanicEvent:
    id: str
    site_id: str
    location: GeoPoint
    vei: int
    start: float
    duration: float
    detection_radius: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("event duration must be positive")
        if not 0 <= self.vei <= 6:
            raise ValueError("VEI outside [0, 6]")

    @property
    def end(self) -> float:
        return self.start + self.duration


def is_active(event: VolcanicEvent, t: float) -> bool:
    return event.start <= t < event.start + event.duration


@dataclass(frozen=True)
class EruptionModel:
    vei_probs: tuple[float, ...] = DEFAULT_VEI_PROBS
    # log-normal durations: median at VEI 2, geometric growth per VEI step
    duration_median_vei2: float = 1.0 * DAY
    duration_growth: float = 3.0
    duration_sigma_log: float = 1.5
    site_rate: float = NOMINAL_SITE_RATE
    rate_multiplier: float = 1.0
    radius_multiplier: float = 1.0
    backfill: float = 100.0 * DAY

    def __post_init__(self):
        p = np.asarray(self.vei_probs, dtype=float)
        if p.shape != (7,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("vei_probs must be 7 non-negative values summing to 1")
        if self.site_rate < 0 or self.rate_multiplier < 0:
            raise ValueError("rates must be non-negative")
        if not (self.radius_multiplier > 0 and self.duration_median_vei2 > 0 and self.duration_growth > 0):
            raise ValueError("multipliers and duration parameters must be positive")
        if self.duration_sigma_log < 0 or self.backfill < 0:
            raise ValueError("duration sigma and backfill must be non-negative")

    def duration_median(self, vei) -> np.ndarray:
        return self.duration_median_vei2 * self.duration_growth ** (np.asarray(vei) - 2.0)


def sample_events(catalog, model: EruptionModel, horizon: float, seed) -> list[VolcanicEvent]:
    """Poisson eruptions per site over [-backfill, horizon), sorted by start time."""
    if not catalog:
        raise ValueError("catalog is empty")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    window = horizon + model.backfill
    lam = model.site_rate * model.rate_multiplier * window
    counts = rng.poisson(lam, size=len(catalog))
    n = int(counts.sum())
    if n == 0:
        return []
    site_idx = np.repeat(np.arange(len(catalog)), counts)
    starts = rng.uniform(-model.backfill, horizon, size=n)
    vei = rng.choice(7, size=n, p=np.asarray(model.vei_probs, dtype=float))
    durations = model.duration_median(vei) * np.exp(model.duration_sigma_log * rng.standard_normal(n))

    order = np.lexsort((site_idx, starts))
    events = []
    for rank, k in enumerate(order):
        site = catalog[site_idx[k]]
        v = int(vei[k])
        events.append(
            VolcanicEvent(
                id=f"e{rank:04d}-{site.id}",
                site_id=site.id,
                location=site.location,
                vei=v,
                start=float(starts[k]),
                duration=float(durations[k]),
                detection_radius=detection_radius_for(v, model.radius_multiplier),
            )
        )
    return events


@dataclass
class EventTable:
    """Columnar view of an event list for vectorized geometry."""

    ids: list
    lon: np.ndarray
    lat: np.ndarray
    vei: np.ndarray
    start: np.ndarray
    end: np.ndarray
    radius: np.ndarray
    events: list = field(repr=False, default_factory=list)

    @classmethod
    def from_events(cls, events) -> "EventTable":
        events = list(events)
        return cls(
            ids=[e.id for e in events],
            lon=np.array([e.location.lon for e in events], dtype=float),
            lat=np.array([e.location.lat for e in events], dtype=float),
            vei=np.array([e.vei for e in events], dtype=int),
            start=np.array([e.start for e in events], dtype=float),
            end=np.array([e.start + e.duration for e in events], dtype=float),
            radius=np.array([e.detection_radius for e in events], dtype=float),
            events=events,
        )

    def __len__(self):
        return len(self.ids)

    def active(self, t: float) -> np.ndarray:
        return (self.start <= t) & (t < self.end)


def _parse_catalog(text: str, origin: str) -> list[VolcanoSite]:
    reader = csv.DictReader(io.StringIO(text))
    required = {"id", "lon_deg", "lat_deg", "size"}
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        raise CatalogError(f"{origin}: header must contain {sorted(required)}")
    sites, seen = [], set()
    for line, row in enumerate(reader, start=2):
        try:
            lon = float(row["lon_deg"])
            lat = float(row["lat_deg"])
        except (TypeError, ValueError):
            raise CatalogError(f"{origin}:{line}: unparseable coordinates") from None
        if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
            raise CatalogError(f"{origin}:{line}: longitude {lon} outside [-180, 180]")
        if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
            raise CatalogError(f"{origin}:{line}: latitude {lat} outside [-90, 90]")
        sid = (row["id"] or "").strip()
        if not sid or sid in seen:
            raise CatalogError(f"{origin}:{line}: missing or duplicate id {sid!r}")
        seen.add(sid)
        sites.append(VolcanoSite(sid, GeoPoint.from_degrees(lon, lat), (row["size"] or "").strip()))
    return sites


def load_catalog(source=None) -> list[VolcanoSite]:
    """Read a site CSV (id, lon_deg, lat_deg, size); ``None`` loads the bundled catalog."""
    if source is None:
        text = resources.files("aerobot.data").joinpath("large_volcanoes.csv").read_text()
        return _parse_catalog(text, "large_volcanoes.csv")
    return _parse_catalog(Path(source).read_text(), str(source))


def dump_events(events, path) -> None:
    rows = []
    for e in events:
        d = asdict(e)
        d["location"] = {"lon": e.location.lon, "lat": e.location.lat}
        rows.append(d)
    Path(path).write_text(json.dumps(rows, indent=1))


def read_events(path) -> list[VolcanicEvent]:
    out = []
    for d in json.loads(Path(path).read_text()):
        loc = d.pop("location")
        out.append(VolcanicEvent(location=GeoPoint(loc["lon"], loc["lat"]), **d))
    return out
