import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerobot.geo import GeoPoint
from aerobot.wind import (
    OutOfEnvelopeError,
    SynthesisConfig,
    VelocityDistribution,
    WindConfigError,
    WindField,
    WindFileError,
    empirical_distribution,
    load_wind_field,
    sample_wind,
    synthesize_wind_field,
    write_wind_csv,
    write_wind_field,
)

SMALL = SynthesisConfig(n_lon=8, n_lat=6, n_alt=4, time_step=6 * 3600.0, horizon=5 * 86400.0)


def tiny_field(zonal=None, meridional=None):
    times = np.array([0.0, 3600.0])
    lons = np.array([-math.pi, 0.0])
    lats = np.array([-0.5, 0.5])
    alts = np.array([50e3, 60e3])
    shape = (2, 2, 2, 2)
    z = np.arange(16, dtype=np.float32).reshape(shape) if zonal is None else zonal
    m = -np.arange(16, dtype=np.float32).reshape(shape) if meridional is None else meridional
    return WindField(times, lons, lats, alts, z, m)


@pytest.fixture(scope="module")
def small_field():
    return synthesize_wind_field(SMALL, seed=11)


def test_minimal_round_trip(tmp_path):
    f = tiny_field()
    write_wind_field(f, tmp_path / "w.vwnd")
    g = load_wind_field(tmp_path / "w.vwnd")
    assert np.array_equal(g.zonal, f.zonal) and np.array_equal(g.meridional, f.meridional)
    for name in ("times", "lons", "lats", "alts"):
        assert np.array_equal(getattr(g, name), getattr(f, name))


def test_synthetic_round_trip_bit_identical(tmp_path, small_field):
    write_wind_field(small_field, tmp_path / "w.vwnd")
    g = load_wind_field(tmp_path / "w.vwnd")
    assert g.zonal.tobytes() == small_field.zonal.tobytes()
    assert g.meridional.tobytes() == small_field.meridional.tobytes()
    write_wind_csv(small_field, tmp_path / "w.csv")
    h = load_wind_field(tmp_path / "w.csv")
    assert h.zonal.tobytes() == small_field.zonal.tobytes()
    np.testing.assert_allclose(h.lons, small_field.lons, rtol=0, atol=1e-12)


def test_nan_sample_names_index(tmp_path):
    z = np.zeros((2, 2, 2, 2), dtype=np.float32)
    z[1, 0, 1, 0] = np.nan
    with pytest.raises(WindFileError, match=r"\(1, 0, 1, 0\)"):
        tiny_field(zonal=z)


def test_malformed_files(tmp_path):
    (tmp_path / "bad.vwnd").write_bytes(b"VWND\x01\x00\x00\x00garbage")
    with pytest.raises(WindFileError):
        load_wind_field(tmp_path / "bad.vwnd")
    with pytest.raises(WindFileError):
        WindField(np.array([0.0, 0.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                  np.zeros((2, 2, 2, 2)), np.zeros((2, 2, 2, 2)))
    (tmp_path / "bad.csv").write_text("t_s,lon_deg\n0,1\n")
    with pytest.raises(WindFileError):
        load_wind_field(tmp_path / "bad.csv")


def test_sample_on_node_and_uniform():
    f = tiny_field()
    u, v = sample_wind(f, 3600.0, GeoPoint(0.0, 0.5, 60e3))
    assert u == f.zonal[1, 1, 1, 1] and v == f.meridional[1, 1, 1, 1]
    c = np.full((2, 2, 2, 2), 7.5, dtype=np.float32)
    g = tiny_field(c, c)
    rng = np.random.default_rng(0)
    for _ in range(20):
        u, v = sample_wind(g, rng.uniform(0, 1e5), GeoPoint(rng.uniform(-3, 3), rng.uniform(-1.5, 1.5), rng.uniform(50e3, 60e3)))
        assert u == pytest.approx(7.5) and v == pytest.approx(7.5)


def test_linear_midpoint():
    z = np.full((2, 2, 2, 2), 10.0, dtype=np.float32)
    z[:, 1] = 20.0
    f = tiny_field(z, np.zeros_like(z))
    u, _ = sample_wind(f, 0.0, GeoPoint(-math.pi / 2, 0.0, 55e3))
    assert u == pytest.approx(15.0, abs=1e-12)


def test_out_of_envelope():
    f = tiny_field()
    with pytest.raises(OutOfEnvelopeError):
        f.sample(0.0, 0.0, 0.0, 61e3)
    with pytest.raises(OutOfEnvelopeError):
        f.sample(0.0, 0.0, 0.0, 49e3)


def test_empirical_distribution_examples():
    f = tiny_field(np.full((2, 2, 2, 2), 3.0, np.float32), np.zeros((2, 2, 2, 2), np.float32))
    d = empirical_distribution(f, (0, 0, 0))
    assert len(d) == 1 and d.weights[0] == 1.0
    d = empirical_distribution(tiny_field(), (1, 0, 1))
    assert len(d) == 2 and np.allclose(d.weights, 0.5)


def test_empirical_distribution_counting_oracle():
    n_t = 10
    series = [(1.0, 0.0)] * 5 + [(2.0, 1.0)] * 3 + [(-1.0, 4.0)] * 2
    order = np.random.default_rng(2).permutation(n_t)
    z = np.zeros((n_t, 2, 2, 2), np.float32)
    m = np.zeros_like(z)
    for k, idx in enumerate(order):
        z[k, 0, 0, 0], m[k, 0, 0, 0] = series[idx]
    f = WindField(np.arange(n_t) * 3600.0, np.array([-math.pi, 0.0]), np.array([-0.5, 0.5]), np.array([50e3, 60e3]), z, m)
    d = empirical_distribution(f, (0, 0, 0))
    got = {tuple(a): w for a, w in zip(d.atoms, d.weights)}
    assert got == pytest.approx({(1.0, 0.0): 0.5, (2.0, 1.0): 0.3, (-1.0, 4.0): 0.2})


def test_distribution_validation():
    with pytest.raises(ValueError):
        VelocityDistribution(np.zeros((2, 2)), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        VelocityDistribution(np.zeros((0, 2)), np.zeros(0))


def test_distributions_normalized_and_atoms_from_series(small_field):
    n_t, n_lon, n_lat, n_alt = small_field.shape
    for i in range(n_lon):
        for j in range(n_lat):
            for k in range(n_alt):
                d = empirical_distribution(small_field, (i, j, k))
                assert abs(d.weights.sum() - 1.0) <= 1e-12
                series = set(zip(small_field.zonal[:, i, j, k].astype(float), small_field.meridional[:, i, j, k].astype(float)))
                assert {tuple(a) for a in d.atoms} <= series


def test_synthesis_noise_free_equals_mean():
    cfg = SynthesisConfig(n_lon=6, n_lat=4, n_alt=3, time_step=86400.0, horizon=4 * 86400.0, noise_zonal=0.0, noise_meridional=0.0)
    f = synthesize_wind_field(cfg, seed=1)
    _, lons, lats, alts = cfg.axes()
    L, J, A = np.meshgrid(lons, lats, alts, indexing="ij")
    mu, mv = cfg.mean_wind(L, J, A)
    assert np.allclose(f.zonal, mu[None].astype(np.float32)) and np.allclose(f.meridional, mv[None].astype(np.float32))


def test_synthesis_determinism_and_seed_sensitivity():
    a = synthesize_wind_field(SMALL, seed=5)
    b = synthesize_wind_field(SMALL, seed=5)
    c = synthesize_wind_field(SMALL, seed=6)
    assert np.array_equal(a.zonal, b.zonal) and np.array_equal(a.meridional, b.meridional)
    assert not np.array_equal(a.zonal, c.zonal)


def test_synthesis_degenerate_grid():
    with pytest.raises(WindConfigError):
        SynthesisConfig(n_lon=1)


def test_zonal_speed_varies_with_altitude(small_field):
    col = small_field.zonal.mean(axis=(0, 1, 2))
    assert col[-1] < col[0] < 0
    mer = small_field.meridional.mean(axis=(0, 1, 2))
    assert mer[0] < 0 < mer[-1]


def test_time_mean_matches_profile(small_field):
    n_t = small_field.shape[0]
    _, lons, lats, alts = SMALL.axes()
    L, J, A = np.meshgrid(lons, lats, alts, indexing="ij")
    mu, _ = SMALL.mean_wind(L, J, A)
    sigma = small_field.zonal.std(axis=0)
    dev = np.abs(small_field.zonal.mean(axis=0) - mu)
    assert np.all(dev <= 3 * sigma / math.sqrt(n_t) + 1e-4)


field_pts = st.tuples(
    st.floats(0, 4 * 86400.0), st.floats(-math.pi, math.pi), st.floats(-1.5, 1.5), st.floats(47e3, 63e3)
)


@settings(max_examples=1000, deadline=None)
@given(field_pts, st.sampled_from(["lon", "lat", "alt", "t"]))
def test_continuity_across_grid_planes(small_field, pt, axis):
    t, lon, lat, alt = pt
    f = small_field
    idx = {"lon": 1, "lat": 2, "alt": 3, "t": 0}[axis]
    grid = {"lon": f.lons, "lat": f.lats, "alt": f.alts, "t": f.times}[axis]
    q = [t, lon, lat, alt]
    plane = grid[len(grid) // 2]
    lo, hi = list(q), list(q)
    # tightest one-sided approach representable in float64
    lo[idx] = np.nextafter(plane, -np.inf)
    hi[idx] = np.nextafter(plane, np.inf)
    a = np.array(f.sample(*lo))
    b = np.array(f.sample(*hi))
    assert np.all(np.abs(a - b) <= 1e-9)


@settings(max_examples=1000, deadline=None)
@given(field_pts)
def test_longitude_periodicity(small_field, pt):
    t, _, lat, alt = pt
    a = np.array(small_field.sample(t, -math.pi, lat, alt))
    b = np.array(small_field.sample(t, math.pi, lat, alt))
    assert np.all(np.abs(a - b) <= 1e-9)


@settings(max_examples=1000, deadline=None)
@given(st.floats(1e-9, 1.0, exclude_max=True), field_pts)
def test_time_rollover(small_field, frac, pt):
    _, lon, lat, alt = pt
    f = small_field
    eps = frac * (f.times[1] - f.times[0])
    a = np.array(f.sample(f.times[-1] + eps, lon, lat, alt))
    b = np.array(f.sample(f.times[0] + eps, lon, lat, alt))
    assert np.all(np.abs(a - b) <= 1e-9)
