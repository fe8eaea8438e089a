"""Campaign configuration schema (JSON or YAML) and its mapping onto engine types."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .comms import HOUR, GroundSchedule, LinkModel
from .engine import Mode, TrialConfig
from .events import DAY, DEFAULT_VEI_PROBS, NOMINAL_SITE_RATE, EruptionModel
from .geo import ORBITS, CircularOrbit
from .planner import PlannerConfig
from .wind import SynthesisConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OrbitSpec(_Strict):
    altitude_km: float = Field(gt=0)
    inclination_deg: float = 0.0
    raan_deg: float = 0.0
    retrograde: bool = False

    def build(self) -> CircularOrbit:
        return CircularOrbit(self.altitude_km * 1e3, math.radians(self.inclination_deg), math.radians(self.raan_deg), 0.0, self.retrograde)


OrbitChoice = Union[Literal["vamos", "veritas"], OrbitSpec]


class PlannerSpec(_Strict):
    gamma: float = Field(0.995, gt=0, lt=1)
    r_eruption: float = 1e3
    r_energy: float = Field(0.0, ge=0)
    r_altitude: float = -1e6
    visit_radius_m: float = Field(50e3, gt=0)
    tolerance: float = Field(1e-2, gt=0)
    max_iterations: int = Field(PlannerConfig.max_iterations, ge=1)
    reward_footprint: Literal["cell", "point"] = "cell"
    location_sigma_m: float = Field(0.0, ge=0)

    def build(self, time_step: float) -> PlannerConfig:
        return PlannerConfig(
            gamma=self.gamma, r_eruption=self.r_eruption, r_energy=self.r_energy, r_altitude=self.r_altitude,
            visit_radius=self.visit_radius_m, time_step=time_step, tolerance=self.tolerance,
            max_iterations=self.max_iterations, reward_footprint=self.reward_footprint, location_sigma=self.location_sigma_m,
        )


class EruptionSpec(_Strict):
    vei_probs: tuple[float, float, float, float, float, float, float] = DEFAULT_VEI_PROBS
    duration_median_days: float = Field(1.0, gt=0)
    duration_growth: float = Field(3.0, gt=0)
    duration_sigma_log: float = Field(1.5, ge=0)
    site_rate_per_day: float = Field(NOMINAL_SITE_RATE * DAY, ge=0)
    backfill_days: float = Field(100.0, ge=0)

    @field_validator("vei_probs")
    @classmethod
    def _normalized(cls, v):
        if any(p < 0 for p in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("must be 7 non-negative values summing to 1")
        return v

    def build(self) -> EruptionModel:
        return EruptionModel(
            vei_probs=tuple(self.vei_probs), duration_median_vei2=self.duration_median_days * DAY,
            duration_growth=self.duration_growth, duration_sigma_log=self.duration_sigma_log,
            site_rate=self.site_rate_per_day / DAY, backfill=self.backfill_days * DAY,
        )


class LinkSpec(_Strict):
    balloon_range_m: float = Field(200e3, gt=0)
    min_elevation_deg: float = Field(30.0, ge=0, le=90)

    def build(self) -> LinkModel:
        return LinkModel(balloon_range=self.balloon_range_m, min_elevation=math.radians(self.min_elevation_deg))


class TrialSpec(_Strict):
    n_balloons: int = Field(3, ge=1)
    horizon_days: float = Field(60.0, ge=0)
    time_step_s: float = Field(3600.0, gt=0)
    orbit: OrbitChoice = "vamos"
    mode: Mode = Mode.AUTONOMOUS
    radius_multiplier: float = Field(1.0, gt=0)
    rate_multiplier: float = Field(1.0, ge=0)
    initial_altitude_m: float = 55e3
    contact_hours: tuple[float, float] = (8.0, 20.0)
    uplink_latency_h: float = Field(0.0, ge=0)
    count_visits_per_step: bool = False
    warm_start: bool = True
    planner: PlannerSpec = PlannerSpec()
    eruption: EruptionSpec = EruptionSpec()
    links: LinkSpec = LinkSpec()

    @field_validator("contact_hours")
    @classmethod
    def _contacts(cls, v):
        if v[0] == v[1] or not all(0 <= h < 24 for h in v):
            raise ValueError("two distinct contact hours within [0, 24)")
        return v

    def build(self, seed: int = 0) -> TrialConfig:
        orbit = ORBITS[self.orbit] if isinstance(self.orbit, str) else self.orbit.build()
        return TrialConfig(
            seed=seed, n_balloons=self.n_balloons, horizon=self.horizon_days * DAY, time_step=self.time_step_s,
            orbit=orbit, mode=self.mode, radius_multiplier=self.radius_multiplier, rate_multiplier=self.rate_multiplier,
            eruption=self.eruption.build(), planner=self.planner.build(self.time_step_s), links=self.links.build(),
            contacts=GroundSchedule(tuple(h * HOUR for h in self.contact_hours), self.uplink_latency_h * HOUR),
            initial_altitude=self.initial_altitude_m, count_visits_per_step=self.count_visits_per_step,
            warm_start=self.warm_start,
        )


class WindSpec(_Strict):
    path: Optional[str] = None
    seed: int = 2022
    n_lon: int = Field(SynthesisConfig.n_lon, ge=2)
    n_lat: int = Field(SynthesisConfig.n_lat, ge=2)
    time_step_h: float = Field(SynthesisConfig.time_step / HOUR, gt=0)
    horizon_days: float = Field(SynthesisConfig.horizon / DAY, gt=0)

    def synthesis(self) -> SynthesisConfig:
        return SynthesisConfig(n_lon=self.n_lon, n_lat=self.n_lat, time_step=self.time_step_h * HOUR, horizon=self.horizon_days * DAY)


class SweepSpec(_Strict):
    modes: Optional[list[Mode]] = None
    orbits: Optional[list[OrbitChoice]] = None
    radius_multipliers: Optional[list[float]] = None
    rate_multipliers: Optional[list[float]] = None
    fleet_sizes: Optional[list[int]] = None

    @model_validator(mode="after")
    def _nonempty(self):
        for name in ("modes", "orbits", "radius_multipliers", "rate_multipliers", "fleet_sizes"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ValueError(f"sweep axis {name} is empty")
        if self.fleet_sizes and min(self.fleet_sizes) < 1:
            raise ValueError("fleet sizes must be >= 1")
        if self.radius_multipliers and min(self.radius_multipliers) <= 0:
            raise ValueError("radius multipliers must be positive")
        if self.rate_multipliers and min(self.rate_multipliers) < 0:
            raise ValueError("rate multipliers must be non-negative")
        return self


@dataclass(frozen=True)
class Cell:
    name: str
    trial: TrialSpec


def _fmt(x: float) -> str:
    return f"{x:g}"


class CampaignSpec(_Strict):
    base: TrialSpec = TrialSpec()
    sweep: SweepSpec = SweepSpec()
    n_trials: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    out: str = "results"
    wind: WindSpec = WindSpec()
    catalog: Optional[str] = None

    def cells(self) -> list[Cell]:
        """Cartesian product of the sweep axes; unset axes take the base value."""
        b, s = self.base, self.sweep
        axes = (
            s.modes or [b.mode],
            s.orbits or [b.orbit],
            s.radius_multipliers or [b.radius_multiplier],
            s.rate_multipliers or [b.rate_multiplier],
            s.fleet_sizes or [b.n_balloons],
        )
        out = []
        for mode, orbit, rad, rate, n in itertools.product(*axes):
            orbit_name = orbit if isinstance(orbit, str) else f"orbit{_fmt(orbit.altitude_km)}km"
            name = f"{Mode(mode).value}_{orbit_name}_r{_fmt(rad)}_q{_fmt(rate)}_n{n}"
            trial = b.model_copy(update=dict(mode=mode, orbit=orbit, radius_multiplier=rad, rate_multiplier=rate, n_balloons=n))
            out.append(Cell(name, trial))
        return out


def _diagnostics(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "\n".join(lines)


def load_spec(data: dict | None) -> CampaignSpec:
    try:
        return CampaignSpec.model_validate(data or {})
    except ValidationError as err:
        raise ConfigError(_diagnostics(err)) from None


def parse_config(path) -> CampaignSpec:
    """Read a JSON or YAML campaign file; an empty file yields the nominal defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" and text.strip() else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as err:
        raise ConfigError(f"{path}: {err}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return load_spec(data)


def dump_spec(spec: CampaignSpec) -> str:
    return json.dumps(spec.model_dump(mode="json"), indent=1, sort_keys=True)
