"""Geometric eruption detection and the shared, grow-only event database."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .events import EventTable
from .geo import VENUS, GeoPoint, PlanetModel, great_circle, visible_mask

ORBITER = "orbiter"
ORBITER_MIN_VEI = 2


@dataclass(frozen=True)
class Detection:
    event_id: str
    location: GeoPoint
    time: float
    source: str
    vei: int = -1

    def _order_key(self):
        return (self.time, self.source, self.location.lon, self.location.lat, self.vei)


def _earlier(a: Detection, b: Detection) -> Detection:
    return a if a._order_key() <= b._order_key() else b


class EventDatabase:
    """Map event id -> first known detection. Entries are never removed."""

    __slots__ = ("_entries", "_key", "version")

    def __init__(self, detections=()):
        self._entries: dict[str, Detection] = {}
        self._key = None
        # bumped on every change; lets callers skip redundant merges
        self.version = 0
        for d in detections:
            self.add(d)

    def add(self, detection: Detection) -> bool:
        """Insert or improve an entry; returns True if the database changed."""
        old = self._entries.get(detection.event_id)
        if old is None:
            self._entries[detection.event_id] = detection
            self._key = None
            self.version += 1
            return True
        best = _earlier(old, detection)
        if best is not old:
            self._entries[detection.event_id] = best
            self.version += 1
            return True
        return False

    def update(self, other: "EventDatabase") -> bool:
        changed = False
        for d in other._entries.values():
            changed |= self.add(d)
        return changed

    def copy(self) -> "EventDatabase":
        out = EventDatabase()
        out._entries = dict(self._entries)
        out._key = self._key
        out.version = self.version
        return out

    def key(self) -> tuple:
        """Hashable identity of the event set (ids only)."""
        if self._key is None:
            self._key = tuple(sorted(self._entries))
        return self._key

    def detections(self) -> list[Detection]:
        return [self._entries[k] for k in self.key()]

    def get(self, event_id):
        return self._entries.get(event_id)

    def __contains__(self, event_id):
        return event_id in self._entries

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self.key())

    def __eq__(self, other):
        return isinstance(other, EventDatabase) and self._entries == other._entries

    def __repr__(self):
        return f"EventDatabase({len(self)} events)"


def merge(db_a: EventDatabase, db_b: EventDatabase) -> EventDatabase:
    """Key-wise union keeping the earliest detection of each event."""
    out = db_a.copy()
    out.update(db_b)
    return out


def _as_table(events) -> EventTable:
    return events if isinstance(events, EventTable) else EventTable.from_events(events)


def _detections(table: EventTable, mask, t, source) -> list[Detection]:
    out = []
    for k in np.flatnonzero(mask):
        e = table.events[k]
        out.append(Detection(e.id, e.location, float(t), source, e.vei))
    return out


def balloon_detect_mask(lon, lat, table: EventTable, t: float, planet: PlanetModel = VENUS) -> np.ndarray:
    d = great_circle(lon, lat, table.lon, table.lat, planet.radius)
    return table.active(t) & (d <= table.radius)


def balloon_detect(position: GeoPoint, events, t: float, planet: PlanetModel = VENUS, source: str = "balloon") -> list[Detection]:
    """Active events within their detection radius of the balloon (perfect geolocation)."""
    table = _as_table(events)
    if not len(table):
        return []
    return _detections(table, balloon_detect_mask(position.lon, position.lat, table, t, planet), t, source)


def orbiter_detect_mask(orbiter_position, table: EventTable, t: float, planet: PlanetModel = VENUS) -> np.ndarray:
    return table.active(t) & (table.vei >= ORBITER_MIN_VEI) & visible_mask(table.lon, table.lat, orbiter_position, planet)


def orbiter_detect(orbiter_position, events, t: float, planet: PlanetModel = VENUS) -> list[Detection]:
    table = _as_table(events)
    if not len(table):
        return []
    return _detections(table, orbiter_detect_mask(orbiter_position, table, t, planet), t, ORBITER)


def write_detection_log(detections, path) -> None:
    rows = [
        {"event_id": d.event_id, "lon": d.location.lon, "lat": d.location.lat, "time": d.time, "source": d.source, "vei": d.vei}
        for d in detections
    ]
    Path(path).write_text(json.dumps(rows, indent=1))
