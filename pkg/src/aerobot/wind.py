"""Gridded time-varying horizontal winds.

Binary file layout (all little-endian)::

    magic      4 bytes  b"VWND"
    version    uint32   1
    lengths    4 x uint32  n_t, n_lon, n_lat, n_alt
    axes       float64  times [s], lons [rad], lats [rad], alts [m]
    zonal      float32  n_t*n_lon*n_lat*n_alt, (t, lon, lat, alt) row-major
    meridional float32  same shape

The CSV debug format has one row per sample with columns
``t_s,lon_deg,lat_deg,alt_m,zonal_ms,meridional_ms``.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .geo import TWO_PI, GeoPoint

MAGIC = b"VWND"
VERSION = 1
_HEADER = struct.Struct("<4sI4I")
CSV_COLUMNS = ("t_s", "lon_deg", "lat_deg", "alt_m", "zonal_ms", "meridional_ms")


class WindFileError(ValueError):
    pass


class OutOfEnvelopeError(ValueError):
    pass


class WindConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WindField:
    times: np.ndarray
    lons: np.ndarray
    lats: np.ndarray
    alts: np.ndarray
    zonal: np.ndarray
    meridional: np.ndarray

    def __post_init__(self):
        for name in ("times", "lons", "lats", "alts"):
            axis = np.ascontiguousarray(self.__dict__[name], dtype=np.float64)
            if axis.ndim != 1 or axis.size < 2:
                raise WindFileError(f"axis {name} needs at least 2 values")
            if not np.all(np.isfinite(axis)) or np.any(np.diff(axis) <= 0):
                raise WindFileError(f"axis {name} is not strictly increasing")
            axis.setflags(write=False)
            object.__setattr__(self, name, axis)
        if self.lons[-1] - self.lons[0] >= TWO_PI:
            raise WindFileError("longitude axis spans a full turn or more")
        shape = (self.times.size, self.lons.size, self.lats.size, self.alts.size)
        for name in ("zonal", "meridional"):
            arr = np.asarray(self.__dict__[name])
            if arr.dtype != np.float32:
                arr = arr.astype(np.float32)
            if arr.shape != shape:
                raise WindFileError(f"{name} array has shape {arr.shape}, expected {shape}")
            bad = np.argwhere(~np.isfinite(arr))
            if bad.size:
                raise WindFileError(f"non-finite {name} wind at index (t, lon, lat, alt) = {tuple(int(i) for i in bad[0])}")
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return self.zonal.shape

    @property
    def period(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def alt_range(self) -> tuple[float, float]:
        return float(self.alts[0]), float(self.alts[-1])

    def wrap_time(self, t):
        """Times past the last sample roll over to the first; [t0, tF] is kept as is."""
        t = np.asarray(t, dtype=float)
        t0, tf = self.times[0], self.times[-1]
        return np.where((t >= t0) & (t <= tf), t, t0 + np.mod(t - t0, self.period))

    def sample(self, t, lon, lat, alt):
        """Multilinear interpolation; returns (zonal, meridional) arrays."""
        lon, lat, alt = np.broadcast_arrays(
            np.asarray(lon, dtype=float), np.asarray(lat, dtype=float), np.asarray(alt, dtype=float)
        )
        lo, hi = self.alt_range
        if np.any(alt < lo) or np.any(alt > hi):
            raise OutOfEnvelopeError(f"altitude outside wind coverage [{lo}, {hi}] m")
        t = np.broadcast_to(self.wrap_time(t), lon.shape)

        u, v = _interp4(
            self.times, self.lons, self.lats, self.alts, self.zonal, self.meridional,
            np.ascontiguousarray(t.ravel()), np.ascontiguousarray(lon.ravel()),
            np.ascontiguousarray(lat.ravel()), np.ascontiguousarray(alt.ravel()),
        )
        return u.reshape(lon.shape), v.reshape(lon.shape)


@njit(cache=True)
def _locate(axis, x):
    n = axis.size
    if x <= axis[0]:
        return 0, 0.0
    if x >= axis[n - 1]:
        return n - 2, 1.0
    i = np.searchsorted(axis, x, side="right") - 1
    return i, (x - axis[i]) / (axis[i + 1] - axis[i])


@njit(cache=True)
def _interp4(times, lons, lats, alts, zonal, merid, t, lon, lat, alt):
    n_lon = lons.size
    span = lons[0] + TWO_PI
    u = np.empty(t.size)
    v = np.empty(t.size)
    for p in range(t.size):
        ti, tw = _locate(times, t[p])
        ji, jw = _locate(lats, lat[p])
        ai, aw = _locate(alts, alt[p])
        x = lons[0] + (lon[p] - lons[0]) % TWO_PI
        if x >= lons[n_lon - 1]:
            li = n_lon - 1
            lw = (x - lons[li]) / (span - lons[li])
        else:
            li, lw = _locate(lons, x)
        l1 = (li + 1) % n_lon
        su = 0.0
        sv = 0.0
        for dt in range(2):
            wt = tw if dt else 1.0 - tw
            for dl in range(2):
                wl = lw if dl else 1.0 - lw
                ll = l1 if dl else li
                for dj in range(2):
                    wj = jw if dj else 1.0 - jw
                    for da in range(2):
                        w = wt * wl * wj * (aw if da else 1.0 - aw)
                        if w != 0.0:
                            su += w * zonal[ti + dt, ll, ji + dj, ai + da]
                            sv += w * merid[ti + dt, ll, ji + dj, ai + da]
        u[p] = su
        v[p] = sv
    return u, v


def sample_wind(field: WindField, t: float, p: GeoPoint) -> tuple[float, float]:
    u, v = field.sample(t, p.lon, p.lat, p.alt)
    return float(u), float(v)


@dataclass(frozen=True, eq=False)
class VelocityDistribution:
    atoms: np.ndarray  # (m, 2) zonal, meridional
    weights: np.ndarray  # (m,)
    cell: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.atoms.ndim != 2 or self.atoms.shape[1] != 2 or self.atoms.shape[0] < 1:
            raise ValueError("atoms must have shape (m, 2) with m >= 1")
        if self.weights.shape != (self.atoms.shape[0],) or np.any(self.weights < 0):
            raise ValueError("weights must be non-negative, one per atom")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    def __len__(self):
        return self.atoms.shape[0]


def empirical_distribution(field: WindField, cell: tuple[int, int, int]) -> VelocityDistribution:
    """Temporal distribution of the wind vector at one grid node.

    Every time step carries weight 1/n_t; identical vectors are merged.
    """
    i, j, k = cell
    series = np.stack([field.zonal[:, i, j, k], field.meridional[:, i, j, k]], axis=1).astype(np.float64)
    atoms, counts = np.unique(series, axis=0, return_counts=True)
    return VelocityDistribution(atoms, counts / counts.sum(), (int(i), int(j), int(k)))


@dataclass(frozen=True)
class SynthesisConfig:
    n_lon: int = 48
    n_lat: int = 48
    n_alt: int = 17
    alt_min: float = 47_000.0
    alt_max: float = 63_000.0
    time_step: float = 6 * 3600.0
    horizon: float = 117 * 86400.0
    # westward (negative) super-rotation, linear in altitude, scaled by cos(lat)
    zonal_bottom: float = -50.0
    zonal_top: float = -100.0
    # meridional flow reverses sign mid-envelope: southward low, northward high
    meridional_amplitude: float = 10.0
    noise_zonal: float = 8.0
    noise_meridional: float = 4.0
    correlation_time: float = 2 * 86400.0
    lon_waves: int = 3
    lat_modes: int = 3
    alt_modes: int = 3

    def __post_init__(self):
        if min(self.n_lon, self.n_lat, self.n_alt) < 2 or self.n_time < 2:
            raise WindConfigError("every grid axis needs at least 2 points")
        if self.alt_max <= self.alt_min or self.time_step <= 0:
            raise WindConfigError("degenerate altitude or time axis")
        if self.noise_zonal < 0 or self.noise_meridional < 0 or self.correlation_time <= 0:
            raise WindConfigError("noise amplitudes must be >= 0 and correlation time > 0")

    @property
    def n_time(self) -> int:
        return int(round(self.horizon / self.time_step))

    def axes(self):
        times = np.arange(self.n_time) * self.time_step
        lons = -math.pi + np.arange(self.n_lon) * (TWO_PI / self.n_lon)
        lats = -math.pi / 2 + (np.arange(self.n_lat) + 0.5) * (math.pi / self.n_lat)
        alts = np.linspace(self.alt_min, self.alt_max, self.n_alt)
        return times, lons, lats, alts

    def mean_wind(self, lon, lat, alt):
        """Climatological (time-mean) wind of the synthetic field."""
        lon, lat, alt = np.broadcast_arrays(lon, lat, alt)
        s = (alt - self.alt_min) / (self.alt_max - self.alt_min)
        c = np.cos(lat)
        u = (self.zonal_bottom + (self.zonal_top - self.zonal_bottom) * s) * c
        v = self.meridional_amplitude * (2.0 * s - 1.0) * c
        return u, v


def _spatial_basis(cfg: SynthesisConfig, lons, lats, alts) -> np.ndarray:
    lon_f = [np.ones_like(lons)]
    for m in range(1, cfg.lon_waves + 1):
        lon_f += [np.cos(m * lons), np.sin(m * lons)]
    mu = np.sin(lats)
    lat_f = [np.cos(lats) * np.polynomial.legendre.Legendre.basis(l)(mu) for l in range(cfg.lat_modes)]
    z = np.linspace(-1.0, 1.0, alts.size)
    alt_f = [np.polynomial.legendre.Legendre.basis(l)(z) for l in range(cfg.alt_modes)]
    basis = []
    for fl in lon_f:
        for fj in lat_f:
            for fa in alt_f:
                b = fl[:, None, None] * fj[None, :, None] * fa[None, None, :]
                basis.append(b / np.sqrt(np.mean(b**2)))
    return np.stack(basis).reshape(len(basis), -1)


def _ar1_coefficients(rng: np.random.Generator, n_t: int, n_modes: int, rho: float) -> np.ndarray:
    eps = rng.standard_normal((n_t, n_modes))
    out = np.empty_like(eps)
    out[0] = eps[0]
    scale = math.sqrt(1.0 - rho * rho)
    for k in range(1, n_t):
        out[k] = rho * out[k - 1] + scale * eps[k]
    # anomalies about the climatology: zero temporal mean per mode
    return out - out.mean(axis=0)


def synthesize_wind_field(params: SynthesisConfig = SynthesisConfig(), seed: int = 0) -> WindField:
    """Super-rotating, altitude-sheared mean flow plus smooth AR(1) perturbations."""
    times, lons, lats, alts = params.axes()
    L, J, A = np.meshgrid(lons, lats, alts, indexing="ij")
    mu, mv = params.mean_wind(L, J, A)
    shape = (times.size, lons.size, lats.size, alts.size)
    zonal = np.broadcast_to(mu, shape).astype(np.float64)
    merid = np.broadcast_to(mv, shape).astype(np.float64)

    if params.noise_zonal > 0 or params.noise_meridional > 0:
        rng = np.random.default_rng(seed)
        basis = _spatial_basis(params, lons, lats, alts)
        n_modes = basis.shape[0]
        rho = math.exp(-params.time_step / params.correlation_time)
        for arr, sigma in ((zonal, params.noise_zonal), (merid, params.noise_meridional)):
            coeff = _ar1_coefficients(rng, times.size, n_modes, rho)
            if sigma > 0:
                arr += (sigma / math.sqrt(n_modes)) * (coeff @ basis).reshape(shape)
    return WindField(times, lons, lats, alts, zonal.astype(np.float32), merid.astype(np.float32))


def write_wind_field(field: WindField, path) -> None:
    n_t, n_lon, n_lat, n_alt = field.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n_t, n_lon, n_lat, n_alt))
        for axis in (field.times, field.lons, field.lats, field.alts):
            fh.write(axis.astype("<f8").tobytes())
        fh.write(field.zonal.astype("<f4").tobytes())
        fh.write(field.meridional.astype("<f4").tobytes())


def write_wind_csv(field: WindField, path) -> None:
    T, L, J, A = np.meshgrid(field.times, np.degrees(field.lons), np.degrees(field.lats), field.alts, indexing="ij")
    table = np.column_stack(
        [T.ravel(), L.ravel(), J.ravel(), A.ravel(), field.zonal.ravel().astype(np.float64), field.meridional.ravel().astype(np.float64)]
    )
    np.savetxt(path, table, delimiter=",", header=",".join(CSV_COLUMNS), comments="", fmt="%.17g")


def _read_binary(data: bytes) -> WindField:
    if len(data) < _HEADER.size:
        raise WindFileError("file too short for header")
    magic, version, n_t, n_lon, n_lat, n_alt = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise WindFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WindFileError(f"unsupported version {version}")
    n_axes = n_t + n_lon + n_lat + n_alt
    n_vals = n_t * n_lon * n_lat * n_alt
    expected = _HEADER.size + 8 * n_axes + 2 * 4 * n_vals
    if len(data) != expected:
        raise WindFileError(f"file has {len(data)} bytes, header implies {expected}")
    off = _HEADER.size
    axes = []
    for n in (n_t, n_lon, n_lat, n_alt):
        axes.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64))
        off += 8 * n
    shape = (n_t, n_lon, n_lat, n_alt)
    zonal = np.frombuffer(data, dtype="<f4", count=n_vals, offset=off).reshape(shape)
    merid = np.frombuffer(data, dtype="<f4", count=n_vals, offset=off + 4 * n_vals).reshape(shape)
    return WindField(*axes, zonal.astype(np.float32), merid.astype(np.float32))


def _read_csv(text: str) -> WindField:
    lines = text.splitlines()
    if not lines or tuple(c.strip() for c in lines[0].split(",")) != CSV_COLUMNS:
        raise WindFileError(f"CSV header must be {','.join(CSV_COLUMNS)}")
    try:
        table = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise WindFileError(f"unparseable CSV: {exc}") from exc
    if table.shape[1] != len(CSV_COLUMNS):
        raise WindFileError("CSV rows must have 6 columns")
    bad = np.argwhere(~np.isfinite(table))
    if bad.size:
        row, col = bad[0]
        raise WindFileError(f"non-finite {CSV_COLUMNS[col]} at line {row + 2}")
    axes, idx = [], []
    for c in range(4):
        vals, inv = np.unique(table[:, c], return_inverse=True)
        axes.append(vals)
        idx.append(inv)
    shape = tuple(a.size for a in axes)
    if table.shape[0] != math.prod(shape):
        raise WindFileError(f"CSV has {table.shape[0]} rows, grid needs {math.prod(shape)}")
    flat = np.ravel_multi_index(tuple(idx), shape)
    if np.unique(flat).size != flat.size:
        raise WindFileError("CSV has duplicate grid samples")
    zonal = np.empty(math.prod(shape), dtype=np.float32)
    merid = np.empty_like(zonal)
    zonal[flat] = table[:, 4]
    merid[flat] = table[:, 5]
    return WindField(axes[0], np.radians(axes[1]), np.radians(axes[2]), axes[3], zonal.reshape(shape), merid.reshape(shape))


def load_wind_field(source) -> WindField:
    """Load a binary (magic-tagged) or CSV wind file."""
    data = Path(source).read_bytes()
    if data[:4] == MAGIC:
        return _read_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WindFileError("not a wind file: bad magic and not UTF-8 CSV") from exc
    return _read_csv(text)
