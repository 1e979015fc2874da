"""Synthetic anomaly injection.

Two seeded processes contaminate a clean series:

* point anomalies: every timestep independently receives an additive spike
  ``L = spike_sigmas * std(series)`` with probability ``p``;
* contextual anomalies: every night-hour timestep (local 23:00-07:00)
  independently receives the series' mean daily peak with probability ``p``.

Each meter-channel draws from its own substream keyed on
``(process, meter_id, channel)``, so results do not depend on which other
series are processed alongside it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError
from .seeding import substream
from .series import Channel, LabelMask, MeterSeries, SeriesKey, compute_stats, mean_daily_peak, night_mask

DEFAULT_CHANNELS = (Channel.P_kW, Channel.Q_kvar)


def _check_probability(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise InputError(f"probability must lie in [0, 1], got {p}")


@dataclass(frozen=True)
class PointAnomalyConfig:
    p: float = 0.02
    spike_sigmas: float = 6.0
    sign_mode: str = "positive"  # or "symmetric": +L / -L with equal odds
    seed: int = 0

    def __post_init__(self):
        _check_probability(self.p)
        if not self.spike_sigmas > 0:
            raise InputError(f"spike_sigmas must be positive, got {self.spike_sigmas}")
        if self.sign_mode not in ("positive", "symmetric"):
            raise InputError(f"sign_mode must be 'positive' or 'symmetric', got {self.sign_mode!r}")


@dataclass(frozen=True)
class ContextualAnomalyConfig:
    p: float = 0.05
    seed: int = 0
    mode: str = "add"  # "replace" overwrites the night value with the peak

    def __post_init__(self):
        _check_probability(self.p)
        if self.mode not in ("add", "replace"):
            raise InputError(f"mode must be 'add' or 'replace', got {self.mode!r}")


def spike_magnitude(series: MeterSeries, spike_sigmas: float) -> float:
    sigma = compute_stats(series).std
    if sigma == 0.0:
        raise InputError(
            f"{series.meter_id}/{series.channel.value}: constant series, spike size undefined"
        )
    magnitude = spike_sigmas * sigma
    if np.any(series.values + magnitude == series.values):
        raise InputError(
            f"{series.meter_id}/{series.channel.value}: spike {magnitude:.3g} is below the "
            "resolution of the values"
        )
    return magnitude


def inject_point(series: MeterSeries, cfg: PointAnomalyConfig) -> tuple[MeterSeries, LabelMask]:
    magnitude = spike_magnitude(series, cfg.spike_sigmas)
    rng = substream(cfg.seed, "point", series.meter_id, series.channel.value)
    n = len(series)
    hit = rng.random(n) < cfg.p
    spikes = np.full(n, magnitude)
    if cfg.sign_mode == "symmetric":
        spikes[rng.random(n) < 0.5] *= -1.0
    values = series.values.copy()
    values[hit] += spikes[hit]
    return series.with_values(values), LabelMask(series.grid, hit)


def inject_contextual(series: MeterSeries, cfg: ContextualAnomalyConfig) -> tuple[MeterSeries, LabelMask]:
    mu = mean_daily_peak(series)
    if mu is None:
        raise InputError(
            f"{series.meter_id}/{series.channel.value}: shorter than one complete day, "
            "mean daily peak undefined"
        )
    night = night_mask(series)
    if cfg.mode == "add" and np.any(series.values[night] + mu == series.values[night]):
        raise InputError(
            f"{series.meter_id}/{series.channel.value}: mean daily peak {mu:.3g} is below the "
            "resolution of the night values"
        )
    rng = substream(cfg.seed, "contextual", series.meter_id, series.channel.value)
    # draws cover every slot so the stream does not depend on the night window
    hit = (rng.random(len(series)) < cfg.p) & night
    values = series.values.copy()
    if cfg.mode == "add":
        values[hit] += mu
    else:
        values[hit] = mu
    return series.with_values(values), LabelMask(series.grid, hit)


def _inject_set(series_set, channels, fn, cfg):
    channels = {Channel(c) for c in channels}
    out_series: dict[SeriesKey, MeterSeries] = {}
    masks: dict[SeriesKey, LabelMask] = {}
    for key, s in series_set.items():
        if s.channel in channels:
            out_series[key], masks[key] = fn(s, cfg)
        else:
            out_series[key] = s
            masks[key] = LabelMask.empty(s.grid)
    return out_series, masks


def inject_point_set(
    series_set: Mapping[SeriesKey, MeterSeries],
    cfg: PointAnomalyConfig,
    channels: Iterable[Channel | str] = DEFAULT_CHANNELS,
) -> tuple[dict[SeriesKey, MeterSeries], dict[SeriesKey, LabelMask]]:
    """Contaminate every series whose channel is in ``channels``.

    Series on other channels pass through with an all-false mask.
    """
    return _inject_set(series_set, channels, inject_point, cfg)


def inject_contextual_set(
    series_set: Mapping[SeriesKey, MeterSeries],
    cfg: ContextualAnomalyConfig,
    channels: Iterable[Channel | str] = DEFAULT_CHANNELS,
) -> tuple[dict[SeriesKey, MeterSeries], dict[SeriesKey, LabelMask]]:
    return _inject_set(series_set, channels, inject_contextual, cfg)
