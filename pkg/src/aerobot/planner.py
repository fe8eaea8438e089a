"""Buoyancy-control MDP on a (lon, lat, alt) lattice.

The balloon drifts with a random horizontal wind drawn from the empirical
distribution of the wind cell it occupies, while altitude follows the
commanded action exactly. Values of off-lattice successors are inverse-distance
weighted over the vertices of the enclosing lattice cell, with distances
measured in lattice-index units. A coordinate lying exactly on a lattice plane
collapses that axis of the cell, so commanded altitudes never interpolate
vertically and exact hits take the node value directly.

Node ordering is level-major: ``index = k * n_h + i * n_lat + j`` for
longitude index ``i``, latitude index ``j`` and altitude level ``k``.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.stats import ncx2

from .geo import TWO_PI, VENUS, GeoPoint, PlanetModel, central_angle, destination, displace, great_circle, wrap_lon
from .wind import VelocityDistribution, WindField

# snap interpolation fractions this close to a lattice plane onto it
PLANE_SNAP = 1e-12

# action slots, in tie-break preference order
HOLD, DOWN, UP = 0, 1, 2
TERMINAL = -1


class TransitionBuildError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Lattice:
    lons: np.ndarray
    lats: np.ndarray
    alts: np.ndarray

    def __post_init__(self):
        for name in ("lons", "lats", "alts"):
            a = np.asarray(self.__dict__[name], dtype=float)
            if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
                raise ValueError(f"lattice axis {name} needs >= 2 strictly increasing nodes")
            if not np.allclose(np.diff(a), a[1] - a[0], rtol=1e-9, atol=0):
                raise ValueError(f"lattice axis {name} is not uniform")
            object.__setattr__(self, name, a)
        if not math.isclose(self.dlon * self.lons.size, TWO_PI, rel_tol=1e-9):
            raise ValueError("longitude nodes must tile the full circle")

    @classmethod
    def uniform(cls, n_lon=48, n_lat=48, h_min=47_000.0, h_max=63_000.0, alt_step=1000.0) -> "Lattice":
        n_alt = int(round((h_max - h_min) / alt_step)) + 1
        return cls(
            -math.pi + np.arange(n_lon) * (TWO_PI / n_lon),
            -math.pi / 2 + (np.arange(n_lat) + 0.5) * (math.pi / n_lat),
            np.linspace(h_min, h_max, n_alt),
        )

    @classmethod
    def from_wind(cls, field: WindField) -> "Lattice":
        return cls(field.lons, field.lats, field.alts)

    @property
    def dlon(self) -> float:
        return float(self.lons[1] - self.lons[0])

    @property
    def dlat(self) -> float:
        return float(self.lats[1] - self.lats[0])

    @property
    def dalt(self) -> float:
        return float(self.alts[1] - self.alts[0])

    @property
    def h_min(self) -> float:
        return float(self.alts[0])

    @property
    def h_max(self) -> float:
        return float(self.alts[-1])

    @property
    def n_h(self) -> int:
        return self.lons.size * self.lats.size

    @property
    def shape(self):
        return self.alts.size, self.lons.size, self.lats.size

    @property
    def n_nodes(self) -> int:
        return self.n_h * self.alts.size

    def index(self, i, j, k):
        return (np.asarray(k) * self.lons.size + np.asarray(i)) * self.lats.size + np.asarray(j)

    def unravel(self, idx):
        k, rem = np.divmod(np.asarray(idx), self.n_h)
        i, j = np.divmod(rem, self.lats.size)
        return i, j, k

    def node(self, idx: int) -> GeoPoint:
        i, j, k = self.unravel(idx)
        return GeoPoint(float(self.lons[i]), float(self.lats[j]), float(self.alts[k]))

    def level_of(self, alt) -> np.ndarray:
        """Level index for altitudes on the lattice, -1 otherwise."""
        f = (np.asarray(alt, dtype=float) - self.alts[0]) / self.dalt
        k = np.rint(f).astype(int)
        ok = (np.abs(f - k) < 1e-9) & (k >= 0) & (k < self.alts.size)
        return np.where(ok, k, TERMINAL)

    def horizontal_weights(self, lon, lat):
        """Enclosing-cell vertices and inverse-distance weights, each (m, 4).

        Vertex slots are (i0,j0), (i1,j0), (i0,j1), (i1,j1) as horizontal
        indices ``i * n_lat + j``; unused slots carry weight 0.
        """
        n_lon, n_lat = self.lons.size, self.lats.size
        fi = np.mod(np.asarray(lon, dtype=float) - self.lons[0], TWO_PI) / self.dlon
        fj = np.clip((np.asarray(lat, dtype=float) - self.lats[0]) / self.dlat, 0.0, n_lat - 1)
        i0 = np.floor(fi).astype(np.int64)
        fx = fi - i0
        up = fx > 1.0 - PLANE_SNAP
        i0 = np.where(up, i0 + 1, i0) % n_lon
        fx = np.where(up | (fx < PLANE_SNAP), 0.0, fx)
        j0 = np.minimum(np.floor(fj).astype(np.int64), n_lat - 2)
        fy = fj - j0
        fy = np.where(fy < PLANE_SNAP, 0.0, np.where(fy > 1.0 - PLANE_SNAP, 1.0, fy))
        i1 = (i0 + 1) % n_lon
        j1 = j0 + 1

        verts = np.stack([i0 * n_lat + j0, i1 * n_lat + j0, i0 * n_lat + j1, i1 * n_lat + j1], axis=-1)
        dx = np.stack([fx, 1.0 - fx, fx, 1.0 - fx], axis=-1)
        dy = np.stack([fy, fy, 1.0 - fy, 1.0 - fy], axis=-1)
        dist = np.hypot(dx, dy)
        use = np.ones(dist.shape, dtype=bool)
        # collapsed axes: drop the far plane
        use[..., 1] &= fx > 0
        use[..., 3] &= fx > 0
        use[..., 2] &= fy > 0
        use[..., 3] &= fy > 0
        use[..., 0] &= fy < 1.0
        use[..., 1] &= fy < 1.0
        exact = use & (dist == 0.0)
        has_exact = exact.any(axis=-1, keepdims=True)
        with np.errstate(divide="ignore"):
            w = np.where(use, 1.0 / dist, 0.0)
        w = np.where(has_exact, exact.astype(float), w)
        w /= w.sum(axis=-1, keepdims=True)
        return verts, w


@dataclass(frozen=True)
class PlannerConfig:
    gamma: float = 0.995
    r_eruption: float = 1e3
    r_energy: float = 0.0
    r_altitude: float = -1e6
    visit_radius: float = 50e3
    time_step: float = 3600.0
    tolerance: float = 1e-2
    max_iterations: int = 60
    action_step: float = 1000.0
    clamp_actions: bool = True
    tie_tolerance: float = 1e-9
    # "point": reward at the node location; "cell": averaged over the node's cell
    reward_footprint: str = "cell"
    footprint_samples: int = 256
    location_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not (self.visit_radius > 0 and self.tolerance > 0 and self.time_step > 0 and self.action_step > 0):
            raise ValueError("visit radius, tolerance, time step and action step must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.reward_footprint not in ("point", "cell"):
            raise ValueError("reward_footprint must be 'point' or 'cell'")
        if self.location_sigma < 0 or self.r_energy < 0 or self.tie_tolerance < 0:
            raise ValueError("location_sigma, r_energy and tie_tolerance must be non-negative")


def legal_actions(alt: float, lattice: Lattice, cfg: PlannerConfig = PlannerConfig()) -> list[float]:
    """Distinct commanded altitudes available from ``alt``: hold, climb, descend."""
    step = cfg.action_step
    if cfg.clamp_actions:
        cands = (alt, min(alt + step, lattice.h_max), max(alt - step, lattice.h_min))
    else:
        cands = (alt, alt + step, alt - step)
    return sorted(set(float(c) for c in cands))


def _action_altitudes(lattice: Lattice, cfg: PlannerConfig) -> np.ndarray:
    """(n_alt, 3) commanded altitude per level, in [hold, down, up] slot order."""
    h = lattice.alts
    step = cfg.action_step
    if cfg.clamp_actions:
        return np.stack([h, np.maximum(h - step, lattice.h_min), np.minimum(h + step, lattice.h_max)], axis=1)
    return np.stack([h, h - step, h + step], axis=1)


@dataclass(eq=False)
class TransitionModel:
    lattice: Lattice
    planet: PlanetModel
    time_step: float
    kernel: sp.csr_matrix  # (n_nodes, n_h): horizontal successor weights per node
    source: object = field(repr=False, default=None)

    def distribution(self, idx: int) -> VelocityDistribution:
        i, j, k = self.lattice.unravel(idx)
        if isinstance(self.source, WindField):
            ci, cj, ck = _wind_cells(self.source, self.lattice)
            from .wind import empirical_distribution

            return empirical_distribution(self.source, (int(ci[i]), int(cj[j]), int(ck[k])))
        return self.source(int(i), int(j), int(k))

    def successors(self, idx: int, action: float) -> list[tuple[GeoPoint, float]]:
        """Continuous successor states of node ``idx`` under a commanded altitude."""
        node = self.lattice.node(idx)
        dist = self.distribution(idx)
        lon, lat = displace(node.lon, node.lat, node.alt, dist.atoms[:, 0], dist.atoms[:, 1], self.time_step, self.planet)
        return [(GeoPoint(float(a), float(b), float(action)), float(w)) for a, b, w in zip(lon, lat, dist.weights)]


def _wind_cells(field: WindField, lattice: Lattice):
    """Nearest wind-grid node on each axis for every lattice node coordinate."""
    lon_d = np.abs(wrap_lon(lattice.lons[:, None] - field.lons[None, :]))
    ci = np.argmin(lon_d, axis=1)
    cj = np.argmin(np.abs(lattice.lats[:, None] - field.lats[None, :]), axis=1)
    ck = np.argmin(np.abs(lattice.alts[:, None] - field.alts[None, :]), axis=1)
    return ci, cj, ck


def _accumulate(lattice: Lattice, rows, lon, lat, weight, n_rows):
    verts, w = lattice.horizontal_weights(lon, lat)
    data = (w * weight[:, None]).ravel()
    r = np.repeat(rows, 4)
    c = verts.ravel()
    keep = data > 0
    m = sp.coo_matrix((data[keep], (r[keep], c[keep])), shape=(n_rows, lattice.n_h))
    return m.tocsr()


def build_transitions(source, lattice: Lattice, time_step: float, planet: PlanetModel = VENUS) -> TransitionModel:
    """Compile the stochastic drift of every lattice node into a sparse kernel.

    ``source`` is a WindField (empirical distribution of the nearest wind cell)
    or a callable ``(i, j, k) -> VelocityDistribution``.
    """
    if not time_step > 0:
        raise TransitionBuildError("time step must be positive")
    n_h = lattice.n_h
    blocks = []
    if isinstance(source, WindField):
        lo, hi = source.alt_range
        if lattice.h_min < lo - 1e-6 or lattice.h_max > hi + 1e-6:
            raise TransitionBuildError(f"lattice altitudes [{lattice.h_min}, {lattice.h_max}] m outside wind coverage [{lo}, {hi}] m")
        ci, cj, ck = _wind_cells(source, lattice)
        n_t = source.times.size
        I, J = np.meshgrid(np.arange(lattice.lons.size), np.arange(lattice.lats.size), indexing="ij")
        node_lon = np.broadcast_to(lattice.lons[I], (n_t,) + I.shape).ravel()
        node_lat = np.broadcast_to(lattice.lats[J], (n_t,) + I.shape).ravel()
        rows = np.broadcast_to(np.arange(n_h).reshape(I.shape), (n_t,) + I.shape).ravel()
        weight = np.full(rows.size, 1.0 / n_t)
        for k, h in enumerate(lattice.alts):
            u = source.zonal[:, ci[I], cj[J], ck[k]].astype(np.float64).ravel()
            v = source.meridional[:, ci[I], cj[J], ck[k]].astype(np.float64).ravel()
            lon, lat = displace(node_lon, node_lat, h, u, v, time_step, planet)
            blocks.append(_accumulate(lattice, rows, lon, lat, weight, n_h))
    elif callable(source):
        for k, h in enumerate(lattice.alts):
            rows, lons, lats, ws = [], [], [], []
            for i in range(lattice.lons.size):
                for j in range(lattice.lats.size):
                    dist = source(i, j, k)
                    lon, lat = displace(lattice.lons[i], lattice.lats[j], h, dist.atoms[:, 0], dist.atoms[:, 1], time_step, planet)
                    rows.append(np.full(len(dist), i * lattice.lats.size + j))
                    lons.append(lon)
                    lats.append(lat)
                    ws.append(dist.weights)
            blocks.append(_accumulate(lattice, np.concatenate(rows), np.concatenate(lons), np.concatenate(lats), np.concatenate(ws), n_h))
    else:
        raise TransitionBuildError("source must be a WindField or a distribution callable")
    kernel = sp.vstack(blocks, format="csr")
    kernel.sum_duplicates()
    kernel.sort_indices()
    return TransitionModel(lattice, planet, float(time_step), kernel, source)


# ---------------------------------------------------------------- rewards


def _event_locations(events):
    if events is None:
        return np.empty(0), np.empty(0)
    lons, lats = [], []
    items = events.detections() if hasattr(events, "detections") else events
    for e in items:
        loc = getattr(e, "location", e)
        lons.append(loc.lon)
        lats.append(loc.lat)
    return np.asarray(lons, dtype=float), np.asarray(lats, dtype=float)


def _visit_probability(d, cfg: PlannerConfig):
    """P(event within visit radius) given the distance to its estimated location."""
    if cfg.location_sigma == 0:
        return (d <= cfg.visit_radius).astype(float)
    s = cfg.location_sigma
    return ncx2.cdf((cfg.visit_radius / s) ** 2, 2, (np.asarray(d) / s) ** 2)


def reward(state: GeoPoint, action: float, events, cfg: PlannerConfig = PlannerConfig(), planet: PlanetModel = VENUS) -> float:
    """Energy cost of the altitude change plus expected eruption-visit reward at ``state``."""
    lon, lat = _event_locations(events)
    r = -abs(state.alt - action) * cfg.r_energy
    if lon.size:
        d = great_circle(state.lon, state.lat, lon, lat, planet.radius)
        r += cfg.r_eruption * float(np.sum(_visit_probability(d, cfg)))
    return float(r)


def eruption_rewards(lattice: Lattice, events, cfg: PlannerConfig = PlannerConfig(), planet: PlanetModel = VENUS) -> np.ndarray:
    """Action-independent eruption reward per horizontal node, shape (n_h,)."""
    lon_e, lat_e = _event_locations(events)
    L, J = np.meshgrid(lattice.lons, lattice.lats, indexing="ij")
    L, J = L.ravel(), J.ravel()
    out = np.zeros(lattice.n_h)
    if lon_e.size == 0:
        return out
    reach = cfg.visit_radius + 4.0 * cfg.location_sigma
    if cfg.reward_footprint == "point":
        for le, ae in zip(lon_e, lat_e):
            d = great_circle(L, J, le, ae, planet.radius)
            near = d <= reach
            out[near] += _visit_probability(d[near], cfg)
        return cfg.r_eruption * out

    # cell footprint: P(within visit radius) for a balloon uniform over the node's
    # cell = area(visit disc convolved with location error, inside cell) / area(cell)
    off_d, off_b = _footprint_offsets(cfg)
    cap = TWO_PI * planet.radius**2 * (1.0 - math.cos(cfg.visit_radius / planet.radius))
    lat_lo = np.clip(lattice.lats - lattice.dlat / 2, -math.pi / 2, math.pi / 2)
    lat_hi = np.clip(lattice.lats + lattice.dlat / 2, -math.pi / 2, math.pi / 2)
    cell_area = planet.radius**2 * lattice.dlon * (np.sin(lat_hi) - np.sin(lat_lo))
    n_lat = lattice.lats.size
    for le, ae in zip(lon_e, lat_e):
        slon, slat = destination(le, ae, off_d, off_b, planet.radius)
        i = np.rint(np.mod(slon - lattice.lons[0], TWO_PI) / lattice.dlon).astype(np.int64) % lattice.lons.size
        j = np.clip(np.rint((slat - lattice.lats[0]) / lattice.dlat).astype(np.int64), 0, n_lat - 1)
        hits = np.bincount(i * n_lat + j, minlength=lattice.n_h)
        frac = hits / off_d.size * cap / np.repeat(cell_area[None, :], lattice.lons.size, axis=0).ravel()
        out += np.minimum(frac, 1.0)
    return cfg.r_eruption * out


def _footprint_offsets(cfg: PlannerConfig):
    """Deterministic (distance, bearing) samples covering the visit disc.

    Sunflower pattern for equal-area coverage; with location error each sample
    is jittered by a fixed isotropic Gaussian draw.
    """
    n = cfg.footprint_samples
    k = np.arange(n)
    rho = cfg.visit_radius * np.sqrt((k + 0.5) / n)
    theta = k * math.pi * (3.0 - math.sqrt(5.0))
    x, y = rho * np.sin(theta), rho * np.cos(theta)
    if cfg.location_sigma > 0:
        z = np.random.default_rng(0).standard_normal((2, n))
        x, y = x + cfg.location_sigma * z[0], y + cfg.location_sigma * z[1]
    return np.hypot(x, y), np.arctan2(x, y)


def action_rewards(lattice: Lattice, events, cfg: PlannerConfig = PlannerConfig(), planet: PlanetModel = VENUS) -> np.ndarray:
    """Full reward table, shape (n_nodes, 3) in [hold, down, up] slot order."""
    eru = np.tile(eruption_rewards(lattice, events, cfg, planet), lattice.alts.size)
    acts = _action_altitudes(lattice, cfg)
    energy = -np.abs(acts - lattice.alts[:, None]) * cfg.r_energy
    return eru[:, None] + np.repeat(energy, lattice.n_h, axis=0)


# ---------------------------------------------------------- value iteration


@njit(cache=True)
def _backup(indptr, indices, data, values, dest, rewards, gamma, r_terminal, n_h, q, out):
    """One Jacobi sweep; fills Q-values and ``out`` = max_a Q, returns max |out - values|."""
    n = indptr.size - 1
    res = 0.0
    for s in range(n):
        k = s // n_h
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        l0 = dest[k, 0]
        l1 = dest[k, 1]
        l2 = dest[k, 2]
        b0 = max(l0, 0) * n_h
        b1 = max(l1, 0) * n_h
        b2 = max(l2, 0) * n_h
        for p in range(indptr[s], indptr[s + 1]):
            c = indices[p]
            w = data[p]
            acc0 += w * values[b0 + c]
            acc1 += w * values[b1 + c]
            acc2 += w * values[b2 + c]
        q0 = rewards[s, 0] + gamma * (acc0 if l0 >= 0 else r_terminal)
        q1 = rewards[s, 1] + gamma * (acc1 if l1 >= 0 else r_terminal)
        q2 = rewards[s, 2] + gamma * (acc2 if l2 >= 0 else r_terminal)
        q[s, 0] = q0
        q[s, 1] = q1
        q[s, 2] = q2
        best = max(q0, max(q1, q2))
        out[s] = best
        res = max(res, abs(best - values[s]))
    return res


def greedy(q: np.ndarray, tie_tolerance: float):
    """Max over action slots and the preferred slot among near-ties."""
    best = q.max(axis=1)
    thresh = best - tie_tolerance * np.maximum(1.0, np.abs(best))
    slot = np.argmax(q >= thresh[:, None], axis=1)
    return best, slot


@dataclass(frozen=True, eq=False)
class GuidancePolicy:
    lattice: Lattice
    values: np.ndarray
    commands: np.ndarray
    event_hash: str = ""
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    residuals: tuple = ()

    def value_grid(self):
        """Values as an (n_alt, n_lon, n_lat) array."""
        return self.values.reshape(self.lattice.shape)

    def command_grid(self):
        return self.commands.reshape(self.lattice.shape)


def event_hash(events) -> str:
    if events is None:
        return hashlib.sha256(b"").hexdigest()
    keys = events.key() if hasattr(events, "key") else tuple(sorted(str(getattr(e, "event_id", getattr(e, "id", e))) for e in events))
    return hashlib.sha256("\n".join(keys).encode()).hexdigest()


def value_iteration(transitions: TransitionModel, rewards, cfg: PlannerConfig = PlannerConfig(), initial=None, event_key: str = "") -> GuidancePolicy:
    """Jacobi value iteration with interpolated successor values.

    ``rewards`` is either (n_nodes,) action-independent or (n_nodes, 3) per
    [hold, down, up] slot. Stops at ``tolerance`` or ``max_iterations``; the
    latter is reported through ``converged``/``residual`` rather than raised.
    """
    lat = transitions.lattice
    n = lat.n_nodes
    r = np.asarray(rewards, dtype=float)
    if r.shape == (n,):
        r = np.repeat(r[:, None], 3, axis=1)
    if r.shape != (n, 3):
        raise ValueError(f"rewards must have shape ({n},) or ({n}, 3)")
    r = np.ascontiguousarray(r)
    acts = _action_altitudes(lat, cfg)
    dest = np.ascontiguousarray(lat.level_of(acts).astype(np.int64))
    outside = (acts < lat.h_min - 1e-9) | (acts > lat.h_max + 1e-9)
    if np.any((dest == TERMINAL) & ~outside):
        raise TransitionBuildError("commanded altitudes must land on lattice levels")
    K = transitions.kernel
    indptr, indices, data = K.indptr.astype(np.int64), K.indices.astype(np.int64), K.data

    v = np.zeros(n) if initial is None else np.array(initial, dtype=float)
    q = np.empty((n, 3))
    v_new = np.empty(n)
    residuals = []
    converged = False
    for _ in range(cfg.max_iterations):
        res = _backup(indptr, indices, data, v, dest, r, cfg.gamma, cfg.r_altitude, lat.n_h, q, v_new)
        residuals.append(res)
        v, v_new = v_new, v
        if res < cfg.tolerance:
            converged = True
            break
    _backup(indptr, indices, data, v, dest, r, cfg.gamma, cfg.r_altitude, lat.n_h, q, v_new)
    _, slot = greedy(q, cfg.tie_tolerance)
    commands = acts[np.arange(n) // lat.n_h, slot]
    return GuidancePolicy(lat, v, commands, event_key, len(residuals), residuals[-1], converged, tuple(residuals))


def plan(transitions: TransitionModel, events, cfg: PlannerConfig = PlannerConfig(), initial=None) -> GuidancePolicy:
    """Rewards for an event set followed by value iteration, optionally warm-started."""
    r = action_rewards(transitions.lattice, events, cfg, transitions.planet)
    return value_iteration(transitions, r, cfg, initial=initial, event_key=event_hash(events))


# ---------------------------------------------------------------- lookup


def nearest_nodes(lattice: Lattice, lon, lat, alt, planet: PlanetModel = VENUS) -> np.ndarray:
    """Nearest lattice node (surface geodesic + altitude offset); ties to lowest index."""
    lon = np.atleast_1d(np.asarray(lon, dtype=float))
    lat = np.atleast_1d(np.asarray(lat, dtype=float))
    alt = np.atleast_1d(np.asarray(alt, dtype=float))
    n_lon, n_lat = lattice.lons.size, lattice.lats.size
    fk = np.clip((alt - lattice.alts[0]) / lattice.dalt, 0, lattice.alts.size - 1)
    k0 = np.minimum(np.floor(fk).astype(int), lattice.alts.size - 2)
    dk0 = np.abs(alt - lattice.alts[k0])
    dk1 = np.abs(alt - lattice.alts[k0 + 1])
    k = np.where(dk1 < dk0, k0 + 1, k0)

    fi = np.mod(lon - lattice.lons[0], TWO_PI) / lattice.dlon
    i0 = np.floor(fi).astype(int)
    ci = np.stack([(i0 - 1) % n_lon, i0 % n_lon, (i0 + 1) % n_lon, (i0 + 2) % n_lon], axis=-1)
    j0 = np.floor((lat - lattice.lats[0]) / lattice.dlat).astype(int)
    cj = np.clip(np.stack([j0 - 1, j0, j0 + 1, j0 + 2], axis=-1), 0, n_lat - 1)
    h = (ci[:, :, None] * n_lat + cj[:, None, :]).reshape(len(lon), -1)
    d = central_angle(lattice.lons[h // n_lat], lattice.lats[h % n_lat], lon[:, None], lat[:, None])
    # lowest horizontal index among exact ties
    tied = d == d.min(axis=1, keepdims=True)
    best = np.where(tied, h, np.iinfo(np.int64).max).min(axis=1)
    return k * lattice.n_h + best


def policy_lookup(policy: GuidancePolicy, state: GeoPoint, planet: PlanetModel = VENUS) -> float:
    """Commanded altitude of the lattice node nearest to ``state``."""
    idx = nearest_nodes(policy.lattice, state.lon, state.lat, state.alt, planet)[0]
    return float(policy.commands[idx])


# ------------------------------------------------------------- snapshots

_POLICY_MAGIC = b"VPOL"
_POLICY_HEADER = struct.Struct("<4sI3IIdd32s")


def write_policy(policy: GuidancePolicy, path) -> None:
    lat = policy.lattice
    digest = bytes.fromhex(policy.event_hash) if policy.event_hash else bytes(32)
    with open(path, "wb") as fh:
        fh.write(_POLICY_HEADER.pack(_POLICY_MAGIC, 1, lat.lons.size, lat.lats.size, lat.alts.size,
                                     policy.iterations, policy.residual, float(policy.converged), digest))
        for a in (lat.lons, lat.lats, lat.alts, policy.values, policy.commands):
            fh.write(np.asarray(a, dtype="<f8").tobytes())


def read_policy(path) -> GuidancePolicy:
    data = Path(path).read_bytes()
    magic, version, n_lon, n_lat, n_alt, iters, residual, conv, digest = _POLICY_HEADER.unpack_from(data)
    if magic != _POLICY_MAGIC or version != 1:
        raise ValueError("not a policy snapshot")
    off = _POLICY_HEADER.size
    arrays = []
    for n in (n_lon, n_lat, n_alt, n_lon * n_lat * n_alt, n_lon * n_lat * n_alt):
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).copy())
        off += 8 * n
    if off != len(data):
        raise ValueError("policy snapshot has trailing or missing bytes")
    lattice = Lattice(*arrays[:3])
    h = digest.hex() if any(digest) else ""
    return GuidancePolicy(lattice, arrays[3], arrays[4], h, iters, residual, bool(conv))


def write_policy_csv(policy: GuidancePolicy, path) -> None:
    """Plot-ready map rows: lon_deg, lat_deg, alt_m, value, command_m."""
    lat = policy.lattice
    k, i, j = np.meshgrid(np.arange(lat.alts.size), np.arange(lat.lons.size), np.arange(lat.lats.size), indexing="ij")
    table = np.column_stack([np.degrees(lat.lons[i.ravel()]), np.degrees(lat.lats[j.ravel()]), lat.alts[k.ravel()], policy.values, policy.commands])
    np.savetxt(path, table, delimiter=",", header="lon_deg,lat_deg,alt_m,value,command_m", comments="", fmt="%.10g")
