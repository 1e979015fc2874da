"""Anomaly injection, detection and mitigation for smart-meter time series."""

__version__ = "0.1.0"

from .errors import InputError, InvariantViolation, MeterAnomalyError  # noqa: E402
from .series import Channel, LabelMask, MeterSeries, TimeGrid, load_csv, write_csv  # noqa: E402

__all__ = [
    "Channel",
    "InputError",
    "InvariantViolation",
    "LabelMask",
    "MeterAnomalyError",
    "MeterSeries",
    "TimeGrid",
    "__version__",
    "load_csv",
    "write_csv",
]
