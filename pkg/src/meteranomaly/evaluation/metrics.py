"""Detection metrics and smoothing quality."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from ..errors import InputError
from ..series import LabelMask, MeterSeries, SeriesKey, complete_days


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise InputError("confusion counts must be nonnegative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def _flags(m) -> np.ndarray:
    return m.flags if isinstance(m, LabelMask) else np.asarray(m, dtype=bool)


def confusion(truth, predicted) -> ConfusionCounts:
    t = _flags(truth)
    p = _flags(predicted)
    if t.shape != p.shape:
        raise InputError(f"mask lengths differ: {t.shape[0]} vs {p.shape[0]}")
    tp = int(np.count_nonzero(t & p))
    fp = int(np.count_nonzero(~t & p))
    fn = int(np.count_nonzero(t & ~p))
    return ConfusionCounts(tp, fp, fn, t.shape[0] - tp - fp - fn)


def _ratio(a: int, b: int) -> float:
    return a / b if b else 0.0


def f1(counts: ConfusionCounts) -> PRF:
    """Precision, recall and their harmonic mean; every 0/0 is taken as 0."""
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    denom = precision + recall
    return PRF(precision, recall, 2.0 * precision * recall / denom if denom else 0.0)


def pooled_confusion(
    truth: Mapping[SeriesKey, LabelMask], predicted: Mapping[SeriesKey, LabelMask], keys=None
) -> ConfusionCounts:
    """Micro-average: counts summed over every series in ``keys`` (default: all truth keys)."""
    total = ConfusionCounts()
    for k in keys if keys is not None else truth:
        if k not in predicted:
            raise InputError(f"no predicted mask for {k[0]}/{k[1]}")
        total = total + confusion(truth[k], predicted[k])
    return total


# ----------------------------------------------------------------------------
# smoothing quality


class SmoothingQuality(NamedTuple):
    night_rms_reduction: float | None
    peak_amplitude_error: float | None
    # sums kept so several series can be pooled
    residual_ss: float
    contamination_ss: float
    n_flagged: int


def _check_aligned(*items) -> None:
    grids = {x.grid for x in items}
    if len(grids) != 1:
        raise InputError("series and mask grids differ")


def _unflagged_day_peaks(clean: MeterSeries, smoothed: MeterSeries, flags: np.ndarray):
    days = [g for g in complete_days(clean) if not flags[g].any()]
    if not days:
        return None, None
    c = np.array([clean.values[g].max() for g in days])
    s = np.array([smoothed.values[g].max() for g in days])
    return c, s


def smoothing_quality(
    clean: MeterSeries, contaminated: MeterSeries, smoothed: MeterSeries, truth: LabelMask
) -> SmoothingQuality:
    """How much of the injected deviation survives smoothing, and how much the day peaks move.

    ``night_rms_reduction = 1 - RMS(smoothed - clean) / RMS(contaminated - clean)``
    over the flagged samples. ``peak_amplitude_error`` compares the mean daily
    peak of the smoothed and clean series over complete days with no flagged
    sample. Either is ``None`` when undefined.
    """
    _check_aligned(clean, contaminated, smoothed, truth)
    f = truth.flags
    residual_ss = float(np.sum((smoothed.values[f] - clean.values[f]) ** 2))
    contamination_ss = float(np.sum((contaminated.values[f] - clean.values[f]) ** 2))
    n = int(f.sum())
    reduction = 1.0 - math.sqrt(residual_ss / contamination_ss) if contamination_ss > 0 else None
    c, s = _unflagged_day_peaks(clean, smoothed, f)
    peak_err = None
    if c is not None and c.mean() != 0:
        peak_err = abs(s.mean() - c.mean()) / c.mean()
    return SmoothingQuality(reduction, peak_err, residual_ss, contamination_ss, n)


def pooled_smoothing_quality(qualities) -> dict:
    """Fleet summary: pooled RMS reduction, mean and worst per-series peak error."""
    qualities = list(qualities)
    res = sum(q.residual_ss for q in qualities)
    con = sum(q.contamination_ss for q in qualities)
    peaks = [q.peak_amplitude_error for q in qualities if q.peak_amplitude_error is not None]
    return {
        "night_rms_reduction": 1.0 - math.sqrt(res / con) if con > 0 else None,
        "peak_amplitude_error": float(np.mean(peaks)) if peaks else None,
        "worst_peak_amplitude_error": float(np.max(peaks)) if peaks else None,
        "n_flagged": sum(q.n_flagged for q in qualities),
    }

