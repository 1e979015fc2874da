from .baselines import grubbs_critical_value, grubbs_detect, iqr_detect, iqr_fences
from .downstream import DownstreamResult, VoltageProxy, downstream_impact, synthetic_voltage
from .metrics import (
    PRF,
    ConfusionCounts,
    SmoothingQuality,
    confusion,
    f1,
    pooled_confusion,
    pooled_smoothing_quality,
    smoothing_quality,
)
from .report import EvalReport, table1

__all__ = [
    "PRF",
    "ConfusionCounts",
    "DownstreamResult",
    "EvalReport",
    "SmoothingQuality",
    "VoltageProxy",
    "confusion",
    "downstream_impact",
    "f1",
    "grubbs_critical_value",
    "grubbs_detect",
    "iqr_detect",
    "iqr_fences",
    "pooled_confusion",
    "pooled_smoothing_quality",
    "smoothing_quality",
    "synthetic_voltage",
    "table1",
]
