"""Value-based outlier baselines: interquartile-range fences and Grubbs' test."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from ..errors import InputError
from ..series import LabelMask, MeterSeries, quartiles


def iqr_fences(values: np.ndarray, k: float = 1.5) -> tuple[float, float]:
    q1, _, q3 = quartiles(values)
    spread = q3 - q1
    return q1 - k * spread, q3 + k * spread


def iqr_detect(series: MeterSeries, k: float = 1.5) -> LabelMask:
    """Flag values outside the closed interval ``[q1 - k*IQR, q3 + k*IQR]``."""
    if not k > 0:
        raise InputError(f"k must be positive, got {k}")
    if len(series) < 4:
        raise InputError(f"IQR detection needs at least 4 samples, got {len(series)}")
    lo, hi = iqr_fences(series.values, k)
    v = series.values
    return LabelMask(series.grid, (v < lo) | (v > hi))


def grubbs_critical_value(n: int, alpha: float) -> float:
    """Two-sided Grubbs critical value.

    G_crit = (n - 1) / sqrt(n) * sqrt(t^2 / (n - 2 + t^2)),
    with t the upper alpha / (2n) quantile of Student's t on n - 2 degrees
    of freedom.
    """
    t = stats.t.isf(alpha / (2.0 * n), n - 2)
    return (n - 1) / math.sqrt(n) * math.sqrt(t * t / (n - 2 + t * t))


def grubbs_detect(series: MeterSeries, alpha_sig: float = 0.05, max_iters: int | None = None) -> LabelMask:
    """Iterative two-sided Grubbs test.

    Each round computes ``G = max|x - mean| / s`` (sample standard deviation)
    over the remaining values; if ``G`` exceeds the critical value the
    extreme value is flagged and removed. Stops at the first insignificant
    round, after ``max_iters`` rounds (default: a tenth of the series), when
    fewer than 7 values remain, or when the remaining values are constant.
    """
    n = len(series)
    if n < 7:
        raise InputError(f"Grubbs test needs at least 7 samples, got {n}")
    if not 0.0 < alpha_sig < 1.0:
        raise InputError(f"alpha_sig must lie in (0, 1), got {alpha_sig}")
    if max_iters is None:
        max_iters = max(1, n // 10)
    values = series.values.astype(np.float64)
    active = np.ones(n, dtype=bool)
    flags = np.zeros(n, dtype=bool)
    for _ in range(max_iters):
        m = int(active.sum())
        if m < 7:
            break
        rest = values[active]
        sd = rest.std(ddof=1)
        if sd == 0.0:
            break
        dev = np.abs(rest - rest.mean())
        j = int(np.argmax(dev))
        if dev[j] / sd <= grubbs_critical_value(m, alpha_sig):
            break
        idx = np.flatnonzero(active)[j]
        flags[idx] = True
        active[idx] = False
    return LabelMask(series.grid, flags)
