"""Deterministic synthetic fleet of residential load profiles.

Each meter gets a two-bump day shape (a broad midday bump and an evening
bump, both Gaussian in local hour) on top of a base load, with day-to-day
lognormal variation, a weekend uplift, a small annual cycle (winter high)
and white noise. Reactive power follows from a per-meter power factor.
Everything a meter draws comes from ``substream(seed, "synthgen", meter_id)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import InputError
from .seeding import substream
from .series import SECONDS_PER_DAY, Channel, MeterSeries, SeriesKey, TimeGrid

DEFAULT_START = int(datetime(2023, 1, 1, tzinfo=timezone.utc).timestamp())


@dataclass(frozen=True)
class FleetConfig:
    n_meters: int = 43
    days: int = 365
    step_seconds: int = 1800
    seed: int = 0
    start_epoch: int | None = None  # None: local midnight of 2023-01-01
    tz_offset_minutes: int = 0
    base_load_kw: float = 0.25
    day_peak_kw: float = 1.2
    evening_peak_kw: float = 1.5
    noise_std_kw: float = 0.03
    weekend_scale: float = 1.15
    pf_range: tuple[float, float] = (0.92, 0.98)
    day_center_hour: float = 11.0
    day_width_hours: float = 3.0
    evening_center_hour: float = 18.5
    evening_width_hours: float = 2.5
    daily_variability: float = 0.2  # sigma of the lognormal day factor
    annual_amplitude: float = 0.10
    meter_scale_range: tuple[float, float] = (0.6, 1.6)

    def __post_init__(self):
        if self.n_meters < 1 or self.days < 1:
            raise InputError("n_meters and days must be >= 1")
        if self.step_seconds <= 0 or SECONDS_PER_DAY % self.step_seconds:
            raise InputError(f"step_seconds must divide a day, got {self.step_seconds}")
        lo, hi = self.pf_range
        if not (0.7 < lo <= hi <= 1.0):
            raise InputError(f"pf_range must lie within (0.7, 1.0], got {self.pf_range}")
        if self.base_load_kw < 0 or self.noise_std_kw < 0:
            raise InputError("base_load_kw and noise_std_kw must be nonnegative")
        object.__setattr__(self, "pf_range", (float(lo), float(hi)))
        object.__setattr__(
            self, "meter_scale_range", tuple(float(v) for v in self.meter_scale_range)
        )

    @property
    def start(self) -> int:
        if self.start_epoch is not None:
            return int(self.start_epoch)
        return DEFAULT_START - 60 * self.tz_offset_minutes

    @property
    def samples_per_day(self) -> int:
        return SECONDS_PER_DAY // self.step_seconds

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pf_range"] = list(self.pf_range)
        d["meter_scale_range"] = list(self.meter_scale_range)
        return d


def meter_ids(n: int) -> list[str]:
    width = max(3, len(str(n)))
    return [f"M{i + 1:0{width}d}" for i in range(n)]


def _bump(hour: np.ndarray, center: float, width: float) -> np.ndarray:
    d = (hour - center + 12.0) % 24.0 - 12.0
    return np.exp(-0.5 * (d / width) ** 2)


def generate_meter(cfg: FleetConfig, meter_id: str) -> tuple[MeterSeries, MeterSeries]:
    rng = substream(cfg.seed, "synthgen", meter_id)
    n = cfg.days * cfg.samples_per_day
    grid = TimeGrid(cfg.start, cfg.step_seconds, n)
    local = grid.timestamps() + 60 * cfg.tz_offset_minutes
    hour = (local % SECONDS_PER_DAY) / 3600.0
    day = np.floor_divide(local, SECONDS_PER_DAY)
    day = day - day[0]
    weekday = (np.floor_divide(local, SECONDS_PER_DAY) + 3) % 7  # 1970-01-01 was a Thursday

    scale = rng.uniform(*cfg.meter_scale_range)
    base = cfg.base_load_kw * scale * rng.uniform(0.8, 1.2)
    day_amp = cfg.day_peak_kw * scale * rng.uniform(0.8, 1.2)
    eve_amp = cfg.evening_peak_kw * scale * rng.uniform(0.8, 1.2)
    day_center = cfg.day_center_hour + rng.normal(0.0, 0.5)
    eve_center = cfg.evening_center_hour + rng.normal(0.0, 0.5)
    pf = rng.uniform(*cfg.pf_range)
    day_factor = np.exp(rng.normal(0.0, cfg.daily_variability, cfg.days))[day]
    noise = rng.normal(0.0, cfg.noise_std_kw * scale, n)

    weekend = np.where(weekday >= 5, cfg.weekend_scale, 1.0)
    annual = 1.0 + cfg.annual_amplitude * np.cos(2.0 * np.pi * day / 365.25)
    shape = day_amp * _bump(hour, day_center, cfg.day_width_hours) + eve_amp * _bump(
        hour, eve_center, cfg.evening_width_hours
    )
    p = np.maximum((base + shape * weekend * day_factor) * annual + noise, 0.0)
    q = p * np.tan(np.arccos(pf))
    return (
        MeterSeries(meter_id, Channel.P_kW, grid, p, cfg.tz_offset_minutes),
        MeterSeries(meter_id, Channel.Q_kvar, grid, q, cfg.tz_offset_minutes),
    )


def generate(cfg: FleetConfig = FleetConfig()) -> dict[SeriesKey, MeterSeries]:
    """P and Q series for every meter, keyed by ``(meter_id, channel)``."""
    out: dict[SeriesKey, MeterSeries] = {}
    for mid in meter_ids(cfg.n_meters):
        p, q = generate_meter(cfg, mid)
        out[p.key] = p
        out[q.key] = q
    return out
