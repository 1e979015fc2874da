"""Run configuration shared by all CLI commands.

Every :class:`RunConfig` field is a config-file key and a command-line flag
(``cutoff_cycles_per_day`` <-> ``--cutoff-cycles-per-day``). Precedence is
defaults < config file < flags.

Config files are INI with a single ``[run]`` section::

    [run]
    seed = 7
    n_meters = 10
    channels = P,Q

A run manifest (JSON written by any command) is accepted as a config file
too; its ``config`` object is used, which replays the run.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InputError
from .evaluation import VoltageProxy
from .iforest import DetectorConfig
from .injector import ContextualAnomalyConfig, PointAnomalyConfig
from .series import Channel
from .spectral import LowPassSpec
from .synthgen import FleetConfig

COMMON = "common"
IO = "io"


def _opt(default, group: str, help: str, **kw):
    return field(default=default, metadata={"group": group, "help": help, **kw})


@dataclass
class RunConfig:
    # common
    seed: int = _opt(0, COMMON, "master seed for every random substream")
    tz_offset_minutes: int = _opt(0, COMMON, "fixed local-time offset from UTC used for day and night-hour logic")
    workers: int = _opt(1, COMMON, "worker threads; results are identical for any value", manifest=False)
    # io (never written into manifests)
    out_dir: str = _opt("out", IO, "output directory")
    input: str = _opt("", IO, "input series CSV")
    truth: str = _opt("", IO, "ground-truth mask CSV")
    predicted: str = _opt("", IO, "predicted mask CSV")
    scores: str = _opt("", IO, "score CSV written by detect")
    clean: str = _opt("", IO, "clean series CSV")
    contaminated: str = _opt("", IO, "contaminated series CSV")
    smoothed: str = _opt("", IO, "smoothed series CSV")
    variants: str = _opt("", IO, "downstream variants as label=path,label=path (must include clean)")
    # ingestion
    gap_policy: str = _opt("reject", "ingest", "missing-timestamp policy", choices=("reject", "linear_interpolate", "forward_fill"))
    # generate
    n_meters: int = _opt(43, "generate", "number of meters")
    days: int = _opt(365, "generate", "days of data")
    step_seconds: int = _opt(1800, "generate", "sampling step")
    base_load_kw: float = _opt(0.25, "generate", "nominal base load")
    day_peak_kw: float = _opt(1.2, "generate", "nominal midday bump height")
    evening_peak_kw: float = _opt(1.5, "generate", "nominal evening bump height")
    noise_std_kw: float = _opt(0.03, "generate", "white-noise standard deviation (scaled per meter)")
    weekend_scale: float = _opt(1.15, "generate", "weekend multiplier on the day shape")
    pf_min: float = _opt(0.92, "generate", "lowest power factor")
    pf_max: float = _opt(0.98, "generate", "highest power factor")
    annual_amplitude: float = _opt(0.10, "generate", "relative annual modulation")
    # inject
    mode: str = _opt("point", "inject", "anomaly process", choices=("point", "contextual"))
    channels: str = _opt("P,Q", "inject", "channels to contaminate, detect and smooth")
    point_p: float = _opt(0.02, "inject", "point-anomaly probability per timestep")
    spike_sigmas: float = _opt(6.0, "inject", "spike height in standard deviations")
    sign_mode: str = _opt("positive", "inject", "spike sign", choices=("positive", "symmetric"))
    contextual_p: float = _opt(0.05, "inject", "contextual-anomaly probability per night timestep")
    contextual_mode: str = _opt("add", "inject", "add the mean daily peak or replace with it", choices=("add", "replace"))
    # detect
    n_trees: int = _opt(100, "detect", "isolation trees per forest")
    subsample_size: int = _opt(256, "detect", "rows per tree (clamped to the series length)")
    contamination: float = _opt(0.01, "detect", "fraction of rows flagged")
    layout: str = _opt("per_channel", "detect", "one forest per channel, or one per meter on (P, Q)", choices=("per_channel", "joint"))
    baseline: str = _opt("", "detect", "extra baseline detectors, comma separated (iqr, grubbs)")
    dump_forests: bool = _opt(False, "detect", "write forests.json")
    # smooth
    cutoff_mode: str = _opt("cycles_per_day", "smooth", "cutoff rule", choices=("cycles_per_day", "cutoff_index", "energy_retention"))
    cutoff_cycles_per_day: float = _opt(8.0, "smooth", "highest kept frequency in cycles per day")
    cutoff_index: int = _opt(0, "smooth", "highest kept folded bin index")
    energy_retention: float = _opt(0.95, "smooth", "fraction of spectral energy to keep")
    dump_spectrum: bool = _opt(False, "smooth", "write spectra/<meter>_<channel>.csv")
    # evaluate
    iqr_k: float = _opt(1.5, "evaluate", "IQR fence multiplier")
    grubbs_alpha: float = _opt(0.05, "evaluate", "Grubbs significance level")
    grubbs_max_iters: int = _opt(0, "evaluate", "Grubbs rounds (0: a tenth of the series)")
    plot_days: int = _opt(7, "evaluate", "days shown in time-series plots")

    # ------------------------------------------------------------------
    @classmethod
    def field_map(cls) -> dict[str, dataclasses.Field]:
        return {f.name: f for f in fields(cls)}

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def manifest_config(self) -> dict:
        """Every setting that can change an output, in field order (paths and thread count excluded)."""
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.metadata["group"] != IO and f.metadata.get("manifest", True)
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.manifest_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # typed views -------------------------------------------------------
    def channel_list(self) -> tuple[Channel, ...]:
        return tuple(Channel.parse(c) for c in self.channels.split(",") if c.strip())

    def fleet(self) -> FleetConfig:
        return FleetConfig(
            n_meters=self.n_meters,
            days=self.days,
            step_seconds=self.step_seconds,
            seed=self.seed,
            tz_offset_minutes=self.tz_offset_minutes,
            base_load_kw=self.base_load_kw,
            day_peak_kw=self.day_peak_kw,
            evening_peak_kw=self.evening_peak_kw,
            noise_std_kw=self.noise_std_kw,
            weekend_scale=self.weekend_scale,
            pf_range=(self.pf_min, self.pf_max),
            annual_amplitude=self.annual_amplitude,
        )

    def point(self) -> PointAnomalyConfig:
        return PointAnomalyConfig(self.point_p, self.spike_sigmas, self.sign_mode, self.seed)

    def contextual(self) -> ContextualAnomalyConfig:
        return ContextualAnomalyConfig(self.contextual_p, self.seed, self.contextual_mode)

    def detector(self) -> DetectorConfig:
        return DetectorConfig(
            self.n_trees, self.subsample_size, self.contamination, self.seed, self.layout, self.channel_list()
        )

    def lowpass(self) -> LowPassSpec:
        if self.cutoff_mode == "cutoff_index":
            return LowPassSpec.by_index(self.cutoff_index)
        if self.cutoff_mode == "energy_retention":
            return LowPassSpec.by_energy(self.energy_retention)
        return LowPassSpec.by_cycles_per_day(self.cutoff_cycles_per_day)

    def baselines(self) -> list[str]:
        names = [b.strip().lower() for b in self.baseline.split(",") if b.strip()]
        for b in names:
            if b not in ("iqr", "grubbs"):
                raise InputError(f"unknown baseline {b!r}; expected iqr or grubbs")
        return names

    def variant_paths(self) -> list[tuple[str, str]]:
        out = []
        for item in self.variants.split(","):
            if not item.strip():
                continue
            label, sep, path = item.partition("=")
            if not sep or not label.strip() or not path.strip():
                raise InputError(f"variant {item!r} must look like label=path")
            out.append((label.strip(), path.strip()))
        return out

    def proxy(self) -> VoltageProxy:
        return VoltageProxy()


def coerce(name: str, raw) -> object:
    f = RunConfig.field_map().get(name)
    if f is None:
        raise InputError(f"unknown config key {name!r}")
    typ = f.type if isinstance(f.type, str) else f.type.__name__
    try:
        if typ == "bool":
            if isinstance(raw, bool):
                value = raw
            elif str(raw).strip().lower() in ("1", "true", "yes", "on"):
                value = True
            elif str(raw).strip().lower() in ("0", "false", "no", "off", ""):
                value = False
            else:
                raise ValueError(raw)
        elif typ == "int":
            value = int(raw)
        elif typ == "float":
            value = float(raw)
        else:
            value = str(raw).strip()
    except (TypeError, ValueError):
        raise InputError(f"config key {name!r}: cannot read {raw!r} as {typ}") from None
    choices = f.metadata.get("choices")
    if choices and value not in choices:
        raise InputError(f"config key {name!r} must be one of {', '.join(choices)}, got {value!r}")
    return value


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file {path} not found")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        raw = data.get("config", data)
    else:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise InputError(f"{path}: {exc}") from None
        if not parser.has_section("run"):
            raise InputError(f"{path}: missing [run] section")
        raw = dict(parser.items("run"))
    return {k: coerce(k, v) for k, v in raw.items()}


def resolve(file_values: dict, flag_values: dict) -> RunConfig:
    values = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    return RunConfig(**{k: coerce(k, v) for k, v in values.items()})
