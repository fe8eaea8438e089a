"""Independent reference implementations used by the test suite.

These deliberately avoid importing the package's numerics so that agreement
is meaningful: plain Python loops over dicts and ``math`` only.
"""

import math

import numpy as np

VENUS_RADIUS = 6_051_800.0


def drift(lon, lat, alt, u, v, dt, radius=VENUS_RADIUS):
    """Closed-form one-step displacement of a balloon in a (u, v) wind."""
    r = radius + alt
    return lon + u * dt / (r * math.cos(lat)), lat + v * dt / r


def wrap(lon):
    return (lon + math.pi) % (2 * math.pi) - math.pi


def great_circle(lon1, lat1, lon2, lat2, radius=VENUS_RADIUS):
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * radius * math.asin(min(1.0, math.sqrt(h)))


def idw_weights(lons, lats, lon, lat):
    """Four-vertex inverse-distance weights in lattice index units.

    Returns {(i, j): weight}. An exact vertex hit takes all the weight.
    """
    n_lon, n_lat = len(lons), len(lats)
    dlon = 2 * math.pi / n_lon
    dlat = lats[1] - lats[0]
    fi = ((lon - lons[0]) % (2 * math.pi)) / dlon
    fj = min(max((lat - lats[0]) / dlat, 0.0), n_lat - 1)
    i0 = int(math.floor(fi))
    j0 = min(int(math.floor(fj)), n_lat - 2)
    fx, fy = fi - i0, fj - j0
    corners = {
        (i0 % n_lon, j0): math.hypot(fx, fy),
        ((i0 + 1) % n_lon, j0): math.hypot(1 - fx, fy),
        (i0 % n_lon, j0 + 1): math.hypot(fx, 1 - fy),
        ((i0 + 1) % n_lon, j0 + 1): math.hypot(1 - fx, 1 - fy),
    }
    for c, d in corners.items():
        if d == 0.0:
            return {c: 1.0}
    total = sum(1.0 / d for d in corners.values())
    return {c: (1.0 / d) / total for c, d in corners.items()}


def random_mdp(seed, n=4, alts=(50_000.0, 51_000.0), dt=3600.0):
    """Small lattice with 1-3 atom wind distributions per node and one event.

    Winds are equatorward in latitude so successors never leave the lattice's
    latitude span, and never exactly zero so no interpolation axis collapses.
    """
    rng = np.random.default_rng(seed)
    lons = [-math.pi + i * 2 * math.pi / n for i in range(n)]
    lats = [-math.pi / 2 + (j + 0.5) * math.pi / n for j in range(n)]
    winds = {}
    for k in range(len(alts)):
        for i in range(n):
            for j in range(n):
                m = int(rng.integers(1, 4))
                u = rng.uniform(20, 150, m) * rng.choice([-1, 1], m)
                v = -math.copysign(1.0, lats[j]) * rng.uniform(1, 10, m)
                w = rng.dirichlet(np.ones(m))
                winds[i, j, k] = [(float(a), float(b), float(c)) for a, b, c in zip(u, v, w)]
    ei, ej = int(rng.integers(n)), int(rng.integers(n))
    # within 50 km of one node, far from all others
    event = (lons[ei] + rng.uniform(-1, 1) * 1e-3, lats[ej] + rng.uniform(-1, 1) * 1e-3)
    return {"lons": lons, "lats": lats, "alts": list(alts), "winds": winds, "event": event, "dt": dt}


def finite_horizon_dp(mdp, gamma, horizon=200, r_eruption=1e3, visit_radius=50e3, action_step=1000.0, tie=1e-9):
    """Backward induction over ``horizon`` steps.

    Returns (values, commands) keyed by (i, j, k). Preference among equal
    actions is hold, then descend, then climb.
    """
    lons, lats, alts, winds = mdp["lons"], mdp["lats"], mdp["alts"], mdp["winds"]
    n_lon, n_lat, n_alt = len(lons), len(lats), len(alts)
    nodes = [(i, j, k) for k in range(n_alt) for i in range(n_lon) for j in range(n_lat)]
    elon, elat = mdp["event"]

    def level(h):
        for k, a in enumerate(alts):
            if abs(a - h) < 1e-6:
                return k
        return None

    actions = {}
    for k, h in enumerate(alts):
        opts = [h, max(h - action_step, alts[0]), min(h + action_step, alts[-1])]
        actions[k] = [level(x) for x in opts]

    reward = {nd: (r_eruption if great_circle(lons[nd[0]], lats[nd[1]], elon, elat) <= visit_radius else 0.0) for nd in nodes}
    succ = {}
    for (i, j, k) in nodes:
        mix = {}
        for u, v, w in winds[i, j, k]:
            lon2, lat2 = drift(lons[i], lats[j], alts[k], u, v, mdp["dt"])
            for c, lam in idw_weights(lons, lats, wrap(lon2), lat2).items():
                mix[c] = mix.get(c, 0.0) + w * lam
        succ[i, j, k] = mix

    V = {nd: 0.0 for nd in nodes}
    Q = {}
    for _ in range(horizon):
        Q = {}
        for nd in nodes:
            i, j, k = nd
            Q[nd] = [
                reward[nd] + gamma * sum(p * V[c[0], c[1], ka] for c, p in succ[nd].items()) for ka in actions[k]
            ]
        V = {nd: max(q) for nd, q in Q.items()}

    commands = {}
    for nd, q in Q.items():
        best = max(q)
        thresh = best - tie * max(1.0, abs(best))
        slot = next(s for s, x in enumerate(q) if x >= thresh)
        commands[nd] = alts[actions[nd[2]][slot]]
    return V, commands
