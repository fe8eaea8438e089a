"""Time-stepped fleet simulation, visit accounting and Monte Carlo campaigns."""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import multiprocessing as mp
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .comms import GroundSchedule, LinkModel, balloon_links, contacts_between, orbiter_links
from .events import DAY, EruptionModel, EventTable, load_catalog, sample_events
from .geo import ORBITS, TWO_PI, VENUS, CircularOrbit, GeoPoint, PlanetModel, displace, great_circle, orbit_position, visible_mask
from .planner import GuidancePolicy, Lattice, PlannerConfig, TransitionModel, build_transitions, nearest_nodes, plan
from .sensing import ORBITER, ORBITER_MIN_VEI, Detection, EventDatabase
from .wind import SynthesisConfig, WindField, synthesize_wind_field

HOUR = 3600.0
DEFAULT_WIND_SEED = 2022


class Mode(str, Enum):
    AUTONOMOUS = "autonomous"
    GROUND = "ground-in-the-loop"
    PASSIVE = "passive"


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrialConfig:
    seed: int = 0
    n_balloons: int = 3
    horizon: float = 60 * DAY
    time_step: float = HOUR
    orbit: CircularOrbit = ORBITS["vamos"]
    mode: Mode = Mode.AUTONOMOUS
    radius_multiplier: float = 1.0
    rate_multiplier: float = 1.0
    eruption: EruptionModel = EruptionModel()
    planner: PlannerConfig = PlannerConfig()
    links: LinkModel = LinkModel()
    contacts: GroundSchedule = GroundSchedule()
    initial_altitude: float = 55e3
    ascent_rate: float = 1000.0 / HOUR
    max_init_attempts: int = 100_000
    count_visits_per_step: bool = False
    record_trajectory: bool = False
    warm_start: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if self.n_balloons < 1:
            raise ValueError("n_balloons must be >= 1")
        if not (self.time_step > 0 and self.ascent_rate > 0):
            raise ValueError("time step and ascent rate must be positive")
        if self.max_init_attempts < 1:
            raise ValueError("max_init_attempts must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.time_step))

    def eruption_model(self) -> EruptionModel:
        return replace(self.eruption, rate_multiplier=self.rate_multiplier, radius_multiplier=self.radius_multiplier)


@dataclass(eq=False)
class Environment:
    """Trial-invariant inputs shared by every trial of a campaign."""

    wind: WindField
    lattice: Lattice
    transitions: TransitionModel
    catalog: list
    planet: PlanetModel = VENUS

    @classmethod
    def build(cls, wind: WindField, catalog=None, time_step: float = HOUR, lattice: Lattice | None = None, planet: PlanetModel = VENUS):
        lattice = lattice or Lattice.from_wind(wind)
        trans = build_transitions(wind, lattice, time_step, planet)
        return cls(wind, lattice, trans, load_catalog() if catalog is None else list(catalog), planet)

    def check(self, cfg: TrialConfig):
        if not math.isclose(self.transitions.time_step, cfg.time_step):
            raise ValueError("environment transitions were built for a different time step")
        lo, hi = self.lattice.h_min, self.lattice.h_max
        if not lo <= cfg.initial_altitude <= hi:
            raise ValueError(f"initial altitude {cfg.initial_altitude} outside [{lo}, {hi}]")


@functools.lru_cache(maxsize=2)
def default_environment(time_step: float = HOUR) -> Environment:
    return Environment.build(synthesize_wind_field(SynthesisConfig(), DEFAULT_WIND_SEED), time_step=time_step)


@dataclass
class BalloonState:
    position: GeoPoint
    command: float
    database: EventDatabase = field(default_factory=EventDatabase)
    policy: GuidancePolicy | None = None
    mode: Mode = Mode.AUTONOMOUS


@dataclass(frozen=True)
class Visit:
    balloon: int
    event_id: str
    start: float
    closest_approach: float
    serendipitous: bool
    latency: float  # detection-to-visit seconds, NaN if serendipitous


@dataclass(frozen=True)
class TrialMetrics:
    seed: int
    distinct_detections: int
    distinct_visits: int
    total_visits: int
    pct_detected_visited: float
    pct_events_visited: float
    n_events: int
    serendipitous_visits: int
    replans: int
    closest_approaches: tuple = ()
    latencies: tuple = ()

    SCALARS = (
        "distinct_detections", "distinct_visits", "total_visits",
        "pct_detected_visited", "pct_events_visited", "n_events", "serendipitous_visits", "replans",
    )


@dataclass
class TrialState:
    cfg: TrialConfig
    env: Environment
    events: list
    table: EventTable
    balloons: list
    orbiter: CircularOrbit
    orbiter_db: EventDatabase
    contacts: GroundSchedule
    wind_offset: float
    t: float = 0.0
    step_index: int = 0
    policies: dict = field(default_factory=dict)
    uplink: GuidancePolicy | None = None
    queued: list = field(default_factory=list)  # (ready time, policy) awaiting uplink
    inside: np.ndarray | None = None
    closest: np.ndarray | None = None
    open_visit: dict = field(default_factory=dict)
    visits: list = field(default_factory=list)
    step_visits: int = 0
    first_detection: dict = field(default_factory=dict)
    synced: dict = field(default_factory=dict)
    replans: int = 0
    trajectory: list = field(default_factory=list)

    @property
    def lon(self):
        return np.array([b.position.lon for b in self.balloons])

    @property
    def lat(self):
        return np.array([b.position.lat for b in self.balloons])

    @property
    def alt(self):
        return np.array([b.position.alt for b in self.balloons])


def trial_seed(campaign_seed: int, index: int) -> int:
    """Per-trial seed; shared across modes so trials pair by index."""
    return int(np.random.SeedSequence([int(campaign_seed), int(index)]).generate_state(1, np.uint64)[0])


def _area_uniform(rng: np.random.Generator, n: int):
    return rng.uniform(-math.pi, math.pi, n), np.arcsin(rng.uniform(-1.0, 1.0, n))


def initialize_trial(cfg: TrialConfig, env: Environment | None = None) -> TrialState:
    """Sample events and start positions until some balloon can detect an active event at t = 0."""
    env = env or default_environment(cfg.time_step)
    env.check(cfg)
    model = cfg.eruption_model()
    if model.site_rate * model.rate_multiplier == 0:
        raise InitializationError("eruption rate is zero: no active event can satisfy the start condition")
    ss_events, ss_pos, ss_wind, ss_orbit = np.random.SeedSequence(cfg.seed).spawn(4)
    rng_pos = np.random.default_rng(ss_pos)
    rng_events = np.random.default_rng(ss_events)
    for attempt in range(cfg.max_init_attempts):
        events = sample_events(env.catalog, model, cfg.horizon or cfg.time_step, rng_events)
        lon, lat = _area_uniform(rng_pos, cfg.n_balloons)
        table = EventTable.from_events(events)
        if len(table) == 0:
            continue
        d = great_circle(lon[:, None], lat[:, None], table.lon, table.lat, env.planet.radius)
        if np.any(table.active(0.0) & (d <= table.radius)):
            break
    else:
        raise InitializationError(f"no admissible start found in {cfg.max_init_attempts} attempts")

    rng_wind = np.random.default_rng(ss_wind)
    wind_offset = float(env.wind.times[rng_wind.integers(env.wind.times.size)] - env.wind.times[0])
    rng_orbit = np.random.default_rng(ss_orbit)
    orbiter = replace(cfg.orbit, initial_phase=float(rng_orbit.uniform(0.0, TWO_PI)))
    contacts = replace(cfg.contacts, offset=float(rng_orbit.uniform(0.0, DAY)))

    balloons = [
        BalloonState(GeoPoint(float(a), float(b), cfg.initial_altitude), cfg.initial_altitude, mode=cfg.mode)
        for a, b in zip(lon, lat)
    ]
    n_e = len(table)
    state = TrialState(
        cfg, env, events, table, balloons, orbiter, EventDatabase(), contacts, wind_offset,
        inside=np.zeros((cfg.n_balloons, n_e), dtype=bool), closest=np.full((cfg.n_balloons, n_e), np.inf),
    )
    _observe(state)
    return state


def _true_wind(state: TrialState, t: float, lon, lat, alt):
    w = state.env.wind
    return w.sample(w.times[0] + state.wind_offset + t, lon, lat, alt)


def _sync(state: TrialState, orbiter_pos):
    """Merge databases over the link graph until every linked component agrees."""
    cfg, env = state.cfg, state.env
    lon, lat, alt = state.lon, state.lat, state.alt
    n = len(state.balloons)
    parent = list(range(n + 1))  # slot n is the orbiter

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    bi, bj, _ = balloon_links(lon, lat, cfg.links, env.planet)
    sees_orbiter = orbiter_links(lon, lat, alt, orbiter_pos, cfg.links, env.planet)
    for a, b in zip(bi, bj):
        parent[find(int(a))] = find(int(b))
    for k in np.flatnonzero(sees_orbiter):
        parent[find(int(k))] = find(n)
    dbs = [b.database for b in state.balloons] + [state.orbiter_db]
    groups: dict[int, list[int]] = {}
    for k in range(n + 1):
        groups.setdefault(find(k), []).append(k)
    for members in groups.values():
        if len(members) < 2:
            continue
        members = tuple(members)
        versions = tuple(dbs[k].version for k in members)
        if state.synced.get(members) == versions:
            continue
        union = EventDatabase()
        for k in members:
            union.update(dbs[k])
        for k in members:
            dbs[k].update(union)
        state.synced[members] = tuple(dbs[k].version for k in members)
    return sees_orbiter


def _visits(state: TrialState, dist: np.ndarray):
    cfg, t = state.cfg, state.t
    radius = cfg.planner.visit_radius
    started = state.table.start <= t
    now_in = (dist <= radius) & started[None, :]
    entering = now_in & ~state.inside
    leaving = state.inside & ~now_in
    state.closest = np.where(now_in, np.minimum(state.closest, dist), state.closest)

    for b, e in zip(*np.nonzero(leaving)):
        _close_visit(state, b, e)
    for b, e in zip(*np.nonzero(entering)):
        first = state.first_detection.get(state.table.ids[e])
        state.open_visit[(b, e)] = (t, first is None, math.nan if first is None else t - first)
    if cfg.count_visits_per_step:
        state.step_visits += int(now_in.sum())
    state.inside = now_in
    state.closest = np.where(now_in, state.closest, np.inf)


def _close_visit(state: TrialState, b, e):
    start, seren, latency = state.open_visit.pop((b, e))
    state.visits.append(Visit(int(b), state.table.ids[e], start, float(state.closest[b, e]), seren, latency))


def _fleet_database(state: TrialState) -> EventDatabase:
    fleet = state.orbiter_db.copy()
    for b in state.balloons:
        fleet.update(b.database)
    return fleet


def _policy_for(state: TrialState, db: EventDatabase) -> GuidancePolicy:
    key = db.key()
    pol = state.policies.get(key)
    if pol is None:
        initial = None
        if state.cfg.warm_start:
            # values for a subset of the events are a lower bound on the new ones
            have = set(key)
            base = max((k for k in state.policies if len(k) < len(key) and have.issuperset(k)), key=len, default=None)
            initial = None if base is None else state.policies[base].values
        pol = plan(state.env.transitions, db, state.cfg.planner, initial)
        state.policies[key] = pol
        state.replans += 1
    return pol


def _observe(state: TrialState, t_prev: float | None = None):
    """Detections, sync, visits and guidance updates at the current time."""
    cfg, env, t = state.cfg, state.env, state.t
    table = state.table
    lon, lat = state.lon, state.lat
    active = table.active(t)
    dist = great_circle(lon[:, None], lat[:, None], table.lon[None, :], table.lat[None, :], env.planet.radius)
    hits = active[None, :] & (dist <= table.radius[None, :])
    for b, e in zip(*np.nonzero(hits)):
        ev = table.events[e]
        db = state.balloons[b].database
        if ev.id not in db:
            db.add(Detection(ev.id, ev.location, t, f"balloon{b}", ev.vei))
            state.first_detection.setdefault(ev.id, t)
    orbiter_pos = orbit_position(state.orbiter, env.planet, t)
    seen = active & (table.vei >= ORBITER_MIN_VEI) & visible_mask(table.lon, table.lat, orbiter_pos, env.planet)
    for e in np.flatnonzero(seen):
        ev = table.events[e]
        if ev.id not in state.orbiter_db:
            state.orbiter_db.add(Detection(ev.id, ev.location, t, ORBITER, ev.vei))
            state.first_detection.setdefault(ev.id, t)

    sees_orbiter = _sync(state, orbiter_pos)
    _visits(state, dist)

    if cfg.mode is Mode.PASSIVE:
        return
    if cfg.mode is Mode.GROUND:
        contacts = contacts_between(state.contacts, t_prev, t) if t_prev is not None else []
        if contacts:
            state.queued.append((contacts[-1] + state.contacts.uplink_latency, _policy_for(state, state.orbiter_db)))
        while state.queued and state.queued[0][0] <= t:
            state.uplink = state.queued.pop(0)[1]
        if state.uplink is not None:
            for k in np.flatnonzero(sees_orbiter):
                state.balloons[k].policy = state.uplink
    else:
        for b in state.balloons:
            b.policy = _policy_for(state, b.database)

    nodes = nearest_nodes(env.lattice, lon, lat, state.alt, env.planet)
    for b, node in zip(state.balloons, nodes):
        if b.policy is not None:
            b.command = float(b.policy.commands[node])


def step(state: TrialState) -> TrialState:
    """Advance one time step: altitude change, advection, then observation."""
    cfg = state.cfg
    max_dh = cfg.ascent_rate * cfg.time_step
    alt = state.alt
    cmd = np.array([b.command for b in state.balloons])
    new_alt = alt + np.clip(cmd - alt, -max_dh, max_dh)
    new_alt = np.where(np.abs(new_alt - cmd) < 1e-6, cmd, new_alt)
    mid = 0.5 * (alt + new_alt)
    lon, lat = state.lon, state.lat
    u, v = _true_wind(state, state.t, lon, lat, mid)
    lon, lat = displace(lon, lat, mid, u, v, cfg.time_step, state.env.planet)
    for b, a, p, h in zip(state.balloons, lon, lat, new_alt):
        b.position = GeoPoint(float(a), float(p), float(h))
    t_prev = state.t
    state.step_index += 1
    state.t = state.step_index * cfg.time_step
    _observe(state, t_prev)
    if cfg.record_trajectory:
        _record(state)
    return state


def _record(state: TrialState):
    for k, b in enumerate(state.balloons):
        state.trajectory.append((state.t, k, b.position.lon, b.position.lat, b.position.alt))


def collect_metrics(state: TrialState) -> TrialMetrics:
    for b, e in list(state.open_visit):
        _close_visit(state, b, e)
    cfg, table = state.cfg, state.table
    fleet = _fleet_database(state)
    visits = state.visits
    visited = {v.event_id for v in visits}
    detected = set(fleet.key())
    in_window = (table.end > 0.0) & (table.start <= state.t)
    n_events = int(in_window.sum())
    total = state.step_visits if cfg.count_visits_per_step else len(visits)
    return TrialMetrics(
        seed=cfg.seed,
        distinct_detections=len(detected),
        distinct_visits=len(visited),
        total_visits=total,
        pct_detected_visited=100.0 * len(visited & detected) / len(detected) if detected else 0.0,
        pct_events_visited=100.0 * len(visited) / n_events if n_events else 0.0,
        n_events=n_events,
        serendipitous_visits=sum(v.serendipitous for v in visits),
        replans=state.replans,
        closest_approaches=tuple(v.closest_approach for v in visits),
        latencies=tuple(v.latency for v in visits if not v.serendipitous),
    )


def simulate(cfg: TrialConfig, env: Environment | None = None) -> TrialState:
    state = initialize_trial(cfg, env)
    if cfg.record_trajectory:
        _record(state)
    for _ in range(cfg.n_steps):
        step(state)
    return state


def run_trial(cfg: TrialConfig, env: Environment | None = None) -> TrialMetrics:
    return collect_metrics(simulate(cfg, env))


# ------------------------------------------------------------- campaigns

_WORKER_ENV: Environment | None = None


def _worker(cfg: TrialConfig) -> TrialMetrics:
    return run_trial(cfg, _WORKER_ENV)


def run_trials(base: TrialConfig, n_trials: int, campaign_seed: int, env: Environment | None = None, workers: int = 1) -> list[TrialMetrics]:
    """Independent trials of one configuration, ordered by trial index."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    global _WORKER_ENV
    env = env or default_environment(base.time_step)
    cfgs = [replace(base, seed=trial_seed(campaign_seed, k)) for k in range(n_trials)]
    if workers <= 1:
        return [run_trial(c, env) for c in cfgs]
    _WORKER_ENV = env
    try:
        with mp.get_context("fork").Pool(workers) as pool:
            return pool.map(_worker, cfgs, chunksize=max(1, n_trials // (4 * workers)))
    finally:
        _WORKER_ENV = None


def aggregate(metrics: list[TrialMetrics]) -> dict:
    """Mean, std, extremes and quartiles of every scalar metric."""
    out = {"n_trials": len(metrics)}
    for name in TrialMetrics.SCALARS:
        x = np.array([getattr(m, name) for m in metrics], dtype=float)
        q25, q50, q75 = np.quantile(x, [0.25, 0.5, 0.75])
        out[name] = {
            "mean": float(x.mean()),
            "std": float(x.std(ddof=1)) if x.size > 1 else 0.0,
            "min": float(x.min()),
            "max": float(x.max()),
            "q25": float(q25),
            "q50": float(q50),
            "q75": float(q75),
        }
    ca = np.concatenate([np.asarray(m.closest_approaches, dtype=float) for m in metrics]) if metrics else np.empty(0)
    out["closest_approach_m"] = [float(c) for c in ca]
    return out


def run_campaign(base: TrialConfig, n_trials: int, campaign_seed: int = 0, env: Environment | None = None, workers: int = 1):
    """Returns (per-trial metrics, aggregate summary)."""
    metrics = run_trials(base, n_trials, campaign_seed, env, workers)
    return metrics, aggregate(metrics)


def metrics_csv(metrics: list[TrialMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in fields(TrialMetrics)]
    w.writerow(names)
    for m in metrics:
        row = []
        for n in names:
            v = getattr(m, n)
            if isinstance(v, tuple):
                row.append(";".join(f"{x:.3f}" for x in v))
            elif isinstance(v, float):
                row.append(f"{v:.6f}")
            else:
                row.append(v)
        w.writerow(row)
    return buf.getvalue()


def write_metrics_csv(metrics, path) -> None:
    Path(path).write_text(metrics_csv(metrics))


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")


def write_trajectory_csv(state: TrialState, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "balloon", "lon_deg", "lat_deg", "alt_m"])
        for t, k, lon, lat, alt in state.trajectory:
            w.writerow([f"{t:.1f}", k, f"{math.degrees(lon):.6f}", f"{math.degrees(lat):.6f}", f"{alt:.1f}"])
