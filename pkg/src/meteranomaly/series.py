"""Time-series data model, CSV ingestion and descriptive statistics.

A :class:`MeterSeries` is one channel of one meter sampled on a uniform
:class:`TimeGrid`. Collections of series are plain dicts keyed by
``(meter_id, Channel)`` and kept in sorted key order.

CSV schema (header required)::

    timestamp_utc,meter_id,channel,value
    2023-01-01T00:00:00Z,M001,P,0.412
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError

SECONDS_PER_DAY = 86_400
NIGHT_START_HOUR = 23
NIGHT_END_HOUR = 7

CSV_HEADER = ("timestamp_utc", "meter_id", "channel", "value")
MASK_HEADER = ("timestamp_utc", "meter_id", "channel", "is_anomaly")


class Channel(str, Enum):
    """Measured quantity; the value is the CSV channel code."""

    P_kW = "P"
    Q_kvar = "Q"
    V_pu = "V"

    @classmethod
    def parse(cls, code: str) -> "Channel":
        try:
            return cls(code.strip().upper())
        except ValueError:
            raise InputError(f"unknown channel {code!r}; expected one of P, Q, V") from None


class GapPolicy(str, Enum):
    REJECT = "reject"
    LINEAR_INTERPOLATE = "linear_interpolate"
    FORWARD_FILL = "forward_fill"


SeriesKey = tuple[str, Channel]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    start_epoch: int
    step_seconds: int = 1800
    n_samples: int = 1

    def __post_init__(self):
        if int(self.step_seconds) <= 0:
            raise InputError(f"step_seconds must be positive, got {self.step_seconds}")
        if int(self.n_samples) < 1:
            raise InputError(f"n_samples must be >= 1, got {self.n_samples}")
        object.__setattr__(self, "start_epoch", int(self.start_epoch))
        object.__setattr__(self, "step_seconds", int(self.step_seconds))
        object.__setattr__(self, "n_samples", int(self.n_samples))

    def timestamps(self) -> np.ndarray:
        return self.start_epoch + self.step_seconds * np.arange(self.n_samples, dtype=np.int64)

    def timestamp(self, i: int) -> int:
        return self.start_epoch + i * self.step_seconds

    @property
    def samples_per_day(self) -> float:
        return SECONDS_PER_DAY / self.step_seconds


@dataclass(frozen=True, eq=False)
class MeterSeries:
    meter_id: str
    channel: Channel
    grid: TimeGrid
    values: np.ndarray
    tz_offset_minutes: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != self.grid.n_samples:
            raise InputError(
                f"{self.meter_id}/{self.channel.value}: {values.shape} values for "
                f"{self.grid.n_samples} grid samples"
            )
        if not np.all(np.isfinite(values)):
            raise InputError(f"{self.meter_id}/{self.channel.value}: non-finite values")
        object.__setattr__(self, "channel", Channel(self.channel))
        object.__setattr__(self, "values", _readonly(values))

    @property
    def key(self) -> SeriesKey:
        return (self.meter_id, self.channel)

    def __len__(self) -> int:
        return self.grid.n_samples

    def with_values(self, values: np.ndarray) -> "MeterSeries":
        return MeterSeries(self.meter_id, self.channel, self.grid, values, self.tz_offset_minutes)


@dataclass(frozen=True, eq=False)
class LabelMask:
    grid: TimeGrid
    flags: np.ndarray

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool)
        if flags.ndim != 1 or flags.shape[0] != self.grid.n_samples:
            raise InputError(f"mask of shape {flags.shape} does not match grid of {self.grid.n_samples}")
        object.__setattr__(self, "flags", _readonly(flags))

    @classmethod
    def empty(cls, grid: TimeGrid) -> "LabelMask":
        return cls(grid, np.zeros(grid.n_samples, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def __len__(self) -> int:
        return self.grid.n_samples


@dataclass(frozen=True)
class SeriesStats:
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    mean_daily_peak: float | None = field(default=None)


# ----------------------------------------------------------------------------
# statistics


def quantile(values: np.ndarray, q: float) -> float:
    """Quantile by linear interpolation between closest ranks.

    Position ``h = (n - 1) * q`` in the sorted sample; the result interpolates
    between ``x[floor(h)]`` and ``x[floor(h) + 1]``.
    """
    return float(np.quantile(np.asarray(values, dtype=np.float64), q, method="linear"))


def quartiles(values: np.ndarray) -> tuple[float, float, float]:
    q1, med, q3 = np.quantile(np.asarray(values, dtype=np.float64), [0.25, 0.5, 0.75], method="linear")
    return float(q1), float(med), float(q3)


def local_day_index(timestamps: np.ndarray, tz_offset_minutes: int) -> np.ndarray:
    return np.floor_divide(np.asarray(timestamps, dtype=np.int64) + 60 * int(tz_offset_minutes), SECONDS_PER_DAY)


def complete_days(series: MeterSeries) -> list[np.ndarray]:
    """Index arrays of every complete local day covered by ``series``.

    A day is complete when all of its grid slots are present. Grids whose
    step does not divide a day have no complete days.
    """
    step = series.grid.step_seconds
    if SECONDS_PER_DAY % step:
        return []
    per_day = SECONDS_PER_DAY // step
    days = local_day_index(series.grid.timestamps(), series.tz_offset_minutes)
    # days are contiguous and nondecreasing on a uniform grid
    boundaries = np.flatnonzero(np.diff(days)) + 1
    groups = np.split(np.arange(len(days)), boundaries)
    return [g for g in groups if g.size == per_day]


def daily_peaks(series: MeterSeries, values: np.ndarray | None = None) -> np.ndarray:
    v = series.values if values is None else np.asarray(values)
    days = complete_days(series)
    return np.array([v[g].max() for g in days], dtype=np.float64)


def mean_daily_peak(series: MeterSeries) -> float | None:
    peaks = daily_peaks(series)
    return float(peaks.mean()) if peaks.size else None


def compute_stats(series: MeterSeries) -> SeriesStats:
    v = series.values
    q1, med, q3 = quartiles(v)
    constant = bool(np.all(v == v[0]))  # np.std leaves rounding residue here
    return SeriesStats(
        mean=float(v[0]) if constant else float(v.mean()),
        std=0.0 if constant else float(v.std()),
        median=med,
        q1=q1,
        q3=q3,
        mean_daily_peak=mean_daily_peak(series),
    )


# ----------------------------------------------------------------------------
# night hours


def is_night_hour(timestamp: int, tz_offset_minutes: int = 0) -> bool:
    """True when the local wall-clock hour falls in [23:00, 07:00)."""
    hour = ((int(timestamp) + 60 * int(tz_offset_minutes)) // 3600) % 24
    return hour >= NIGHT_START_HOUR or hour < NIGHT_END_HOUR


def night_mask(series: MeterSeries) -> np.ndarray:
    local = series.grid.timestamps() + 60 * series.tz_offset_minutes
    hour = np.floor_divide(local, 3600) % 24
    return (hour >= NIGHT_START_HOUR) | (hour < NIGHT_END_HOUR)


# ----------------------------------------------------------------------------
# CSV I/O


def parse_timestamp(text: str) -> int:
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def atomic_write_text(path: str | os.PathLike, lines: Iterable[str]) -> None:
    """Write ``lines`` to ``path`` through a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            for line in lines:
                fh.write(line)
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Rows:
    """Raw per-series rows collected while reading a CSV."""

    def __init__(self):
        self.times: list[int] = []
        self.values: list[float] = []
        self.lines: list[int] = []


def _read_rows(path: Path, header: tuple[str, ...], value_parser) -> dict[SeriesKey, _Rows]:
    if not path.exists():
        raise InputError(f"{path}: file not found")
    rows: dict[SeriesKey, _Rows] = defaultdict(_Rows)
    ts_cache: dict[str, int] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if tuple(c.strip() for c in first) != header:
            raise InputError(f"{path}:1: header must be {','.join(header)}, got {','.join(first)}")
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise InputError(f"{path}:{line_no}: expected {len(header)} fields, got {len(rec)}")
            ts_text, meter_id, channel, raw = rec
            try:
                ts = ts_cache[ts_text]
            except KeyError:
                try:
                    ts = ts_cache[ts_text] = parse_timestamp(ts_text)
                except ValueError:
                    raise InputError(f"{path}:{line_no}: bad timestamp {ts_text!r}") from None
            try:
                value = value_parser(raw)
            except ValueError:
                raise InputError(f"{path}:{line_no}: bad value {raw!r}") from None
            meter_id = meter_id.strip()
            if not meter_id:
                raise InputError(f"{path}:{line_no}: empty meter_id")
            try:
                ch = Channel.parse(channel)
            except InputError as exc:
                raise InputError(f"{path}:{line_no}: {exc}") from None
            r = rows[(meter_id, ch)]
            r.times.append(ts)
            r.values.append(value)
            r.lines.append(line_no)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def _grid_from_rows(path: Path, key: SeriesKey, r: _Rows, default_step: int) -> tuple[TimeGrid, np.ndarray]:
    """Validate ordering/step of one series; return its grid and slot indices."""
    times = np.asarray(r.times, dtype=np.int64)
    diffs = np.diff(times)
    bad = np.flatnonzero(diffs <= 0)
    if bad.size:
        i = int(bad[0]) + 1
        kind = "duplicate" if diffs[bad[0]] == 0 else "non-monotone"
        raise InputError(f"{path}:{r.lines[i]}: {kind} timestamp for {key[0]}/{key[1].value}")
    step = int(diffs.min()) if diffs.size else int(default_step)
    off = np.flatnonzero(diffs % step)
    if off.size:
        i = int(off[0]) + 1
        raise InputError(f"{path}:{r.lines[i]}: mixed step sizes for {key[0]}/{key[1].value} (step {step}s)")
    slots = (times - times[0]) // step
    grid = TimeGrid(int(times[0]), step, int(slots[-1]) + 1)
    return grid, slots


def load_csv(
    path: str | os.PathLike,
    gap_policy: GapPolicy | str = GapPolicy.REJECT,
    tz_offset_minutes: int = 0,
    default_step: int = 1800,
) -> dict[SeriesKey, MeterSeries]:
    """Read a long-format CSV into one :class:`MeterSeries` per meter-channel.

    Missing grid slots are resolved by ``gap_policy``: ``reject`` raises,
    ``linear_interpolate`` fills from the neighbouring samples and
    ``forward_fill`` repeats the last observed value. ``default_step`` is
    only used for series with a single row.
    """
    path = Path(path)
    policy = GapPolicy(gap_policy)
    raw = _read_rows(path, CSV_HEADER, float)
    out: dict[SeriesKey, MeterSeries] = {}
    for key in sorted(raw, key=lambda k: (k[0], k[1].value)):
        r = raw[key]
        grid, slots = _grid_from_rows(path, key, r, default_step)
        observed = np.asarray(r.values, dtype=np.float64)
        if not np.all(np.isfinite(observed)):
            i = int(np.flatnonzero(~np.isfinite(observed))[0])
            raise InputError(f"{path}:{r.lines[i]}: non-finite value")
        if slots.size == grid.n_samples:
            values = observed
        elif policy is GapPolicy.REJECT:
            i = int(np.flatnonzero(np.diff(slots) > 1)[0]) + 1
            raise InputError(f"{path}:{r.lines[i]}: gap before this row for {key[0]}/{key[1].value}")
        elif policy is GapPolicy.LINEAR_INTERPOLATE:
            values = np.interp(np.arange(grid.n_samples), slots, observed)
            values[slots] = observed
        else:
            fill_from = np.searchsorted(slots, np.arange(grid.n_samples), side="right") - 1
            values = observed[fill_from]
        out[key] = MeterSeries(key[0], key[1], grid, values, tz_offset_minutes)
    return out


def write_csv(series_set: Mapping[SeriesKey, MeterSeries], path: str | os.PathLike) -> None:
    """Write series in key order; values use the shortest round-trip repr."""

    def lines():
        yield ",".join(CSV_HEADER) + "\n"
        stamp_cache: dict[int, str] = {}
        for key in sorted(series_set, key=lambda k: (k[0], Channel(k[1]).value)):
            s = series_set[key]
            code = s.channel.value
            for ts, v in zip(s.grid.timestamps().tolist(), s.values.tolist()):
                stamp = stamp_cache.get(ts)
                if stamp is None:
                    stamp = stamp_cache[ts] = format_timestamp(ts)
                yield f"{stamp},{s.meter_id},{code},{v!r}\n"

    atomic_write_text(path, lines())


def write_mask_csv(
    masks: Mapping[SeriesKey, LabelMask], path: str | os.PathLike
) -> None:
    def lines():
        yield ",".join(MASK_HEADER) + "\n"
        for key in sorted(masks, key=lambda k: (k[0], Channel(k[1]).value)):
            m = masks[key]
            code = Channel(key[1]).value
            for ts, f in zip(m.grid.timestamps().tolist(), m.flags.tolist()):
                yield f"{format_timestamp(ts)},{key[0]},{code},{int(f)}\n"

    atomic_write_text(path, lines())


def _parse_flag(raw: str) -> int:
    v = int(raw)
    if v not in (0, 1):
        raise ValueError(raw)
    return v


def load_mask_csv(path: str | os.PathLike) -> dict[SeriesKey, LabelMask]:
    """Read a mask sidecar; every series must be gap-free."""
    path = Path(path)
    raw = _read_rows(path, MASK_HEADER, _parse_flag)
    out: dict[SeriesKey, LabelMask] = {}
    for key in sorted(raw, key=lambda k: (k[0], k[1].value)):
        r = raw[key]
        grid, slots = _grid_from_rows(path, key, r, 1800)
        if slots.size != grid.n_samples:
            raise InputError(f"{path}: mask for {key[0]}/{key[1].value} has gaps")
        out[key] = LabelMask(grid, np.asarray(r.values, dtype=bool))
    return out


def series_keys_by_meter(series_set: Mapping[SeriesKey, MeterSeries]) -> dict[str, list[SeriesKey]]:
    by_meter: dict[str, list[SeriesKey]] = defaultdict(list)
    for key in series_set:
        by_meter[key[0]].append(key)
    return dict(by_meter)


def ceil_fraction(alpha: float, n: int) -> int:
    """``ceil(alpha * n)`` with float representation error rounded away."""
    return int(math.ceil(round(alpha * n, 9)))
