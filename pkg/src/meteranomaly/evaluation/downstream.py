"""Downstream impact of anomalies on a data-driven voltage predictor.

No network model is available, so voltage is synthesised from the clean
fleet with a linearised voltage-drop surrogate::

    V_m(t) = 1 - a_P * sum_j P_j(t) - a_Q * sum_j Q_j(t)
               - b_P * P_m(t) - b_Q * Q_m(t) + eta_m(t)

(a: shared feeder, b: the meter's own service cable, eta: seeded Gaussian
noise from ``substream(seed, "voltage", meter_id)``). For each dataset
variant an ordinary-least-squares model maps every meter's (P, Q) plus an
intercept to each meter's voltage. The first 80 % of the timeline trains,
the last 20 % tests; the target is always the clean-derived voltage, so
only the features differ between variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import InputError
from ..seeding import substream
from ..series import Channel, MeterSeries, SeriesKey, TimeGrid


@dataclass(frozen=True)
class VoltageProxy:
    feeder_p: float = 2.5e-4  # p.u. per kW of total fleet load
    feeder_q: float = 1.5e-4  # p.u. per kvar
    service_p: float = 1.5e-3  # p.u. per kW of the meter's own load
    service_q: float = 1.0e-3
    noise_std: float = 2.0e-4
    train_fraction: float = 0.8


@dataclass
class DownstreamResult:
    mae: float
    mse: float
    worst_mae: float
    worst_meter: str
    per_meter_mae: dict[str, float] = field(default_factory=dict)
    n_test: int = 0

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "mse": self.mse,
            "worst_mae": self.worst_mae,
            "worst_meter": self.worst_meter,
            "n_test": self.n_test,
            "per_meter_mae": dict(self.per_meter_mae),
        }


def _meters(series_set: Mapping[SeriesKey, MeterSeries]) -> list[str]:
    meters = sorted({k[0] for k in series_set})
    for m in meters:
        for ch in (Channel.P_kW, Channel.Q_kvar):
            if (m, ch) not in series_set:
                raise InputError(f"meter {m} lacks channel {ch.value}")
    return meters


def _common_grid(series_set: Mapping[SeriesKey, MeterSeries]) -> TimeGrid:
    grids = {s.grid for s in series_set.values()}
    if len(grids) != 1:
        raise InputError("all series must share one grid")
    return grids.pop()


def synthetic_voltage(
    clean: Mapping[SeriesKey, MeterSeries], proxy: VoltageProxy = VoltageProxy(), seed: int = 0
) -> dict[str, np.ndarray]:
    meters = _meters(clean)
    _common_grid(clean)
    p = {m: clean[(m, Channel.P_kW)].values for m in meters}
    q = {m: clean[(m, Channel.Q_kvar)].values for m in meters}
    total_p = np.sum([p[m] for m in meters], axis=0)
    total_q = np.sum([q[m] for m in meters], axis=0)
    shared = 1.0 - proxy.feeder_p * total_p - proxy.feeder_q * total_q
    out = {}
    for m in meters:
        eta = substream(seed, "voltage", m).normal(0.0, proxy.noise_std, total_p.shape[0])
        out[m] = shared - proxy.service_p * p[m] - proxy.service_q * q[m] + eta
    return out


def design_matrix(series_set: Mapping[SeriesKey, MeterSeries], meters: list[str]) -> np.ndarray:
    cols = []
    for m in meters:
        cols.append(series_set[(m, Channel.P_kW)].values)
        cols.append(series_set[(m, Channel.Q_kvar)].values)
    cols.append(np.ones_like(cols[0]))
    return np.column_stack(cols)


def fit_predict(
    variant: Mapping[SeriesKey, MeterSeries],
    target: Mapping[str, np.ndarray],
    train_fraction: float = 0.8,
) -> tuple[np.ndarray, np.ndarray, int]:
    """OLS fit on the chronological training split; returns (predictions, truth, split index)."""
    meters = sorted(target)
    x = design_matrix(variant, meters)
    y = np.column_stack([target[m] for m in meters])
    split = int(round(train_fraction * x.shape[0]))
    if not 0 < split < x.shape[0]:
        raise InputError(f"train fraction {train_fraction} leaves an empty split")
    coef, *_ = np.linalg.lstsq(x[:split], y[:split], rcond=None)
    return x[split:] @ coef, y[split:], split


def evaluate_variant(
    variant: Mapping[SeriesKey, MeterSeries], target: Mapping[str, np.ndarray], proxy: VoltageProxy
) -> DownstreamResult:
    pred, truth, _ = fit_predict(variant, target, proxy.train_fraction)
    err = pred - truth
    meters = sorted(target)
    per_meter = {m: float(np.mean(np.abs(err[:, i]))) for i, m in enumerate(meters)}
    worst = max(meters, key=lambda m: (per_meter[m], m))
    return DownstreamResult(
        mae=float(np.mean(np.abs(err))),
        mse=float(np.mean(err**2)),
        worst_mae=per_meter[worst],
        worst_meter=worst,
        per_meter_mae=per_meter,
        n_test=int(err.shape[0]),
    )


def downstream_impact(
    dataset_variants: Mapping[str, Mapping[SeriesKey, MeterSeries]],
    seed: int = 0,
    proxy: VoltageProxy = VoltageProxy(),
    clean_label: str = "clean",
) -> dict[str, DownstreamResult]:
    """Test-split MAE/MSE of the voltage predictor trained on each variant.

    The voltage target is derived from ``dataset_variants[clean_label]``.
    Each variant is evaluated independently, so results do not depend on
    the order of the mapping.
    """
    if clean_label not in dataset_variants:
        raise InputError(f"variants must include {clean_label!r}")
    clean = dataset_variants[clean_label]
    grid = _common_grid(clean)
    meters = _meters(clean)
    for label, variant in dataset_variants.items():
        if _common_grid(variant) != grid or _meters(variant) != meters:
            raise InputError(f"variant {label!r} does not share the clean grid and meters")
    target = synthetic_voltage(clean, proxy, seed)
    return {label: evaluate_variant(v, target, proxy) for label, v in dataset_variants.items()}
