"""Command-line pipeline driver.

Subcommands: generate | inject | detect | smooth | evaluate | pipeline.
Every command writes ``manifest_<command>.json`` with the resolved settings
(paths excluded), their hash, input checksums and the produced files.

Exit status: 0 success, 2 input error (bad flags, config or files),
3 invariant violation, 4 output could not be written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, plots
from .casestudies import DOWNSTREAM_ORDER
from .config import RunConfig, read_config_file, resolve
from .errors import InputError, InvariantViolation
from .evaluation import (
    EvalReport,
    grubbs_detect,
    iqr_detect,
    pooled_confusion,
    pooled_smoothing_quality,
    smoothing_quality,
)
from .evaluation.downstream import downstream_impact, fit_predict, synthetic_voltage
from .iforest import detect as run_detection
from .injector import inject_contextual_set, inject_point_set, spike_magnitude
from .series import (
    NIGHT_END_HOUR,
    NIGHT_START_HOUR,
    Channel,
    atomic_write_text,
    format_timestamp,
    load_csv,
    load_mask_csv,
    mean_daily_peak,
    write_csv,
    write_mask_csv,
)
from .spectral import SPECTRUM_HEADER, forward, smooth_set, spectrum_rows
from .synthgen import generate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVARIANT = 3
EXIT_OUTPUT = 4

COMMANDS = ("generate", "inject", "detect", "smooth", "evaluate", "pipeline")
# which config groups each command exposes as flags
_GROUPS = {
    "generate": {"generate"},
    "inject": {"ingest", "inject"},
    "detect": {"ingest", "detect", "inject", "evaluate"},
    "smooth": {"ingest", "smooth", "inject"},
    "evaluate": {"ingest", "evaluate", "detect"},
    "pipeline": {"ingest", "generate", "inject", "detect", "smooth", "evaluate"},
}
_IO_FLAGS = {
    "generate": ("out_dir",),
    "inject": ("out_dir", "input"),
    "detect": ("out_dir", "input"),
    "smooth": ("out_dir", "input"),
    "evaluate": ("out_dir", "truth", "predicted", "scores", "clean", "contaminated", "smoothed", "variants"),
    "pipeline": ("out_dir",),
}


def _key(k) -> str:
    return f"{k[0]}/{Channel(k[1]).value}"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, command: str, inputs: dict[str, str], outputs: list[Path], details: dict) -> Path:
    out_dir = Path(cfg.out_dir)
    manifest = {
        "command": command,
        "artifact_version": __version__,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.manifest_config(),
        "inputs": {
            role: {"name": Path(p).name, "sha256": _sha256(Path(p))} for role, p in sorted(inputs.items())
        },
        "outputs": [str(p.relative_to(out_dir)) for p in outputs],
        "details": details,
    }
    path = out_dir / f"manifest_{command}.json"
    atomic_write_text(path, [json.dumps(manifest, indent=2) + "\n"])
    return path


def _require(cfg: RunConfig, name: str) -> str:
    value = getattr(cfg, name)
    if not value:
        raise InputError(f"--{name.replace('_', '-')} is required")
    return value


def _load(cfg: RunConfig, path: str):
    return load_csv(path, cfg.gap_policy, cfg.tz_offset_minutes)


# ----------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig) -> dict[str, Path]:
    """Write a synthetic clean fleet to clean.csv."""
    out_dir = Path(cfg.out_dir)
    fleet = cfg.fleet()
    series = generate(fleet)
    clean = out_dir / "clean.csv"
    write_csv(series, clean)
    n_rows = sum(len(s) for s in series.values())
    write_manifest(cfg, "generate", {}, [clean], {"fleet": fleet.to_dict(), "data_rows": n_rows})
    return {"clean": clean}


def cmd_inject(cfg: RunConfig, mode: str | None = None) -> dict[str, Path]:
    """Contaminate a series CSV with point or contextual anomalies and write the truth mask."""
    mode = mode or cfg.mode
    src = _require(cfg, "input")
    series = _load(cfg, src)
    channels = cfg.channel_list()
    targets = [k for k in series if k[1] in channels]
    if mode == "point":
        pcfg = cfg.point()
        out, masks = inject_point_set(series, pcfg, channels)
        details = {
            "mode": "point",
            "p": pcfg.p,
            "spike_sigmas": pcfg.spike_sigmas,
            "L": f"{pcfg.spike_sigmas:g}*sigma",
            "sign_mode": pcfg.sign_mode,
            "spike_magnitude": {_key(k): spike_magnitude(series[k], pcfg.spike_sigmas) for k in targets},
        }
    elif mode == "contextual":
        ccfg = cfg.contextual()
        out, masks = inject_contextual_set(series, ccfg, channels)
        details = {
            "mode": "contextual",
            "p": ccfg.p,
            "window": f"{NIGHT_START_HOUR:02d}:00-{NIGHT_END_HOUR:02d}:00",
            "value_mode": ccfg.mode,
            "mean_daily_peak": {_key(k): mean_daily_peak(series[k]) for k in targets},
        }
    else:
        raise InputError(f"unknown mode {mode!r}")
    details["channels"] = [c.value for c in channels]
    details["flagged"] = {_key(k): masks[k].count for k in targets}
    out_dir = Path(cfg.out_dir)
    data_path = out_dir / f"contaminated_{mode}.csv"
    mask_path = out_dir / f"mask_{mode}.csv"
    write_csv(out, data_path)
    write_mask_csv(masks, mask_path)
    write_manifest(cfg.replace(mode=mode), f"inject_{mode}", {"input": src}, [data_path, mask_path], details)
    return {"contaminated": data_path, "mask": mask_path}


def _write_scores(det, series, path: Path) -> None:
    def lines():
        yield "timestamp_utc,meter_id,channel,score,flagged\n"
        for k in det.scores:
            res = det.scores[k]
            ts = series[k].grid.timestamps().tolist()
            for t, s, f in zip(ts, res.scores.tolist(), res.flagged.tolist()):
                yield f"{format_timestamp(t)},{k[0]},{Channel(k[1]).value},{s!r},{int(f)}\n"

    atomic_write_text(path, lines())


def cmd_detect(cfg: RunConfig) -> dict[str, Path]:
    """Score and flag rows with Isolation Forests, then median-impute the flagged samples."""
    src = _require(cfg, "input")
    series = _load(cfg, src)
    dcfg = cfg.detector()
    det = run_detection(series, dcfg, workers=cfg.workers, keep_forests=cfg.dump_forests)
    out_dir = Path(cfg.out_dir)
    paths = {
        "mask": out_dir / "detected_mask.csv",
        "imputed": out_dir / "imputed.csv",
        "scores": out_dir / "scores.csv",
    }
    write_mask_csv(det.masks, paths["mask"])
    write_csv(det.imputed, paths["imputed"])
    _write_scores(det, series, paths["scores"])
    details = {
        "n_trees": dcfg.n_trees,
        "subsample_size": dcfg.subsample_size,
        "contamination": dcfg.contamination,
        "layout": dcfg.layout,
        "flagged": {_key(k): int(r.n_flagged) for k, r in det.scores.items()},
        "threshold": {_key(k): r.threshold for k, r in det.scores.items()},
    }
    targets = list(det.scores)
    for name in cfg.baselines():
        if name == "iqr":
            masks = {k: iqr_detect(series[k], cfg.iqr_k) for k in targets}
        else:
            masks = {
                k: grubbs_detect(series[k], cfg.grubbs_alpha, cfg.grubbs_max_iters or None) for k in targets
            }
        paths[f"{name}_mask"] = out_dir / f"{name}_mask.csv"
        write_mask_csv(masks, paths[f"{name}_mask"])
        details[f"{name}_flagged"] = {_key(k): m.count for k, m in masks.items()}
    if cfg.dump_forests:
        paths["forests"] = out_dir / "forests.json"
        blob = [{"series": [_key(k) for k in g], **f.to_dict()} for g, f in det.forests.items()]
        atomic_write_text(paths["forests"], [json.dumps(blob, separators=(",", ":")) + "\n"])
    write_manifest(cfg, "detect", {"input": src}, list(paths.values()), details)
    return paths


def cmd_smooth(cfg: RunConfig) -> dict[str, Path]:
    """Low-pass filter every series in the frequency domain."""
    src = _require(cfg, "input")
    series = _load(cfg, src)
    spec = cfg.lowpass()
    channels = set(cfg.channel_list())
    smoothed, cutoffs = smooth_set(series, spec, channels)
    out_dir = Path(cfg.out_dir)
    paths = {"smoothed": out_dir / "smoothed.csv"}
    write_csv(smoothed, paths["smoothed"])
    if cfg.dump_spectrum:
        for k in cutoffs:
            s = series[k]
            spectrum = forward(s.values)
            path = out_dir / "spectra" / f"{k[0]}_{Channel(k[1]).value}.csv"
            rows = spectrum_rows(spectrum, s.grid.samples_per_day)
            atomic_write_text(
                path,
                [",".join(SPECTRUM_HEADER) + "\n"] + [",".join(repr(v) for v in r) + "\n" for r in rows],
            )
            paths[f"spectrum:{_key(k)}"] = path
    details = {"lowpass": spec.describe(), "cutoff_index": {_key(k): kc for k, kc in cutoffs.items()}}
    write_manifest(cfg, "smooth", {"input": src}, list(paths.values()), details)
    return paths


def _read_scores(path: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    import csv

    rows: dict[str, tuple[list, list]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp_utc", "meter_id", "channel", "score", "flagged"]:
            raise InputError(f"{path}: not a score file")
        for rec in reader:
            s, f = rows.setdefault(f"{rec[1]}/{rec[2]}", ([], []))
            s.append(float(rec[3]))
            f.append(rec[4] == "1")
    return {k: (np.asarray(s), np.asarray(f)) for k, (s, f) in rows.items()}


def cmd_evaluate(cfg: RunConfig) -> dict[str, Path]:
    """Score masks, smoothing and downstream prediction error; write a report and plots."""
    out_dir = Path(cfg.out_dir)
    plot_dir = out_dir / "plots"
    report = EvalReport(meta={"artifact_version": __version__, "seed": cfg.seed})
    inputs: dict[str, str] = {}
    outputs: list[Path] = []
    did_something = False

    truth = contaminated = None
    if cfg.truth:
        inputs["truth"] = cfg.truth
        truth = load_mask_csv(cfg.truth)
    if cfg.contaminated:
        inputs["contaminated"] = cfg.contaminated
        contaminated = _load(cfg, cfg.contaminated)

    if cfg.predicted:
        if truth is None:
            raise InputError("--predicted needs --truth")
        inputs["predicted"] = cfg.predicted
        predicted = load_mask_csv(cfg.predicted)
        keys = [k for k in truth if k[1] in cfg.channel_list()]
        report.add_detection("iforest", pooled_confusion(truth, predicted, keys))
        did_something = True

    if contaminated is not None and truth is not None:
        keys = [k for k in truth if k in contaminated and k[1] in cfg.channel_list()]
        for name in cfg.baselines() or ["iqr"]:
            if name == "iqr":
                masks = {k: iqr_detect(contaminated[k], cfg.iqr_k) for k in keys}
            else:
                masks = {k: grubbs_detect(contaminated[k], cfg.grubbs_alpha, cfg.grubbs_max_iters or None) for k in keys}
            report.add_detection(name, pooled_confusion(truth, masks, keys))
        did_something = True

    clean = None
    if cfg.clean:
        inputs["clean"] = cfg.clean
        clean = _load(cfg, cfg.clean)

    if cfg.smoothed:
        if clean is None or contaminated is None or truth is None:
            raise InputError("--smoothed needs --clean, --contaminated and --truth")
        inputs["smoothed"] = cfg.smoothed
        smoothed = _load(cfg, cfg.smoothed)
        keys = [k for k in truth if k[1] in cfg.channel_list()]
        report.smoothing = pooled_smoothing_quality(
            smoothing_quality(clean[k], contaminated[k], smoothed[k], truth[k]) for k in keys
        )
        did_something = True
        k0 = keys[0]
        n = min(len(clean[k0]), int(cfg.plot_days * clean[k0].grid.samples_per_day))
        hours = np.arange(n) * clean[k0].grid.step_seconds / 3600.0
        path = plot_dir / "smoothing_overlay.svg"
        plots.overlay(
            path,
            hours,
            [("contaminated", contaminated[k0].values[:n]), ("clean", clean[k0].values[:n]), ("smoothed", smoothed[k0].values[:n])],
            markers=truth[k0].flags[:n],
            title=f"FFT smoothing, {_key(k0)}",
        )
        outputs.append(path)

    if contaminated is not None and truth is not None and cfg.predicted and clean is not None:
        k0 = next(k for k in truth if k[1] in cfg.channel_list())
        n = min(len(clean[k0]), int(cfg.plot_days * clean[k0].grid.samples_per_day))
        hours = np.arange(n) * clean[k0].grid.step_seconds / 3600.0
        path = plot_dir / "detection_overlay.svg"
        plots.overlay(
            path,
            hours,
            [("contaminated", contaminated[k0].values[:n]), ("clean", clean[k0].values[:n])],
            markers=truth[k0].flags[:n],
            title=f"Point anomalies, {_key(k0)}",
        )
        outputs.append(path)

    if cfg.scores:
        inputs["scores"] = cfg.scores
        scores = _read_scores(cfg.scores)
        name = sorted(scores)[0]
        s, f = scores[name]
        threshold = float(s[f].min()) if f.any() else None
        path = plot_dir / "scores.svg"
        plots.score_scatter(path, s, threshold, title=f"Isolation Forest scores, {name}")
        outputs.append(path)

    variants = cfg.variant_paths()
    if variants:
        labels = [label for label, _ in variants]
        if "clean" not in labels:
            raise InputError("--variants must include a 'clean' entry")
        data = {}
        for label, path in variants:
            inputs[f"variant:{label}"] = path
            data[label] = _load(cfg, path)
        proxy = cfg.proxy()
        report.downstream = downstream_impact(data, seed=cfg.seed, proxy=proxy)
        report.downstream_order = labels
        did_something = True
        # prediction overlay for the worst meter of the last mitigated case
        focus = next((lab for lab in reversed(labels) if lab not in ("clean", "unmitigated")), labels[-1])
        target = synthetic_voltage(data["clean"], proxy, cfg.seed)
        pred, truth_v, split = fit_predict(data[focus], target, proxy.train_fraction)
        meters = sorted(target)
        worst = report.downstream[focus].worst_meter
        i = meters.index(worst)
        any_series = next(iter(data["clean"].values()))
        n = min(pred.shape[0], int(cfg.plot_days * any_series.grid.samples_per_day))
        hours = (split + np.arange(n)) * any_series.grid.step_seconds / 3600.0
        path = plot_dir / "prediction_overlay.svg"
        plots.overlay(
            path,
            hours,
            [("measured V", truth_v[:n, i]), (f"predicted V ({focus})", pred[:n, i])],
            title=f"Voltage prediction, worst meter {worst}",
            ylabel="V [p.u.]",
        )
        outputs.append(path)

    if not did_something:
        raise InputError("nothing to evaluate: supply --truth with --predicted/--contaminated, --smoothed, or --variants")

    json_path = out_dir / "report.json"
    txt_path = out_dir / "report.txt"
    atomic_write_text(json_path, [report.to_json()])
    atomic_write_text(txt_path, [report.text_table()])
    outputs = [json_path, txt_path] + outputs
    write_manifest(cfg, "evaluate", inputs, outputs, {"report": "report.json"})
    return {"report": json_path, "table": txt_path}


def cmd_pipeline(cfg: RunConfig) -> dict[str, Path]:
    """generate -> inject -> detect / smooth -> evaluate, each in its own subdirectory."""
    root = Path(cfg.out_dir)
    gen = cmd_generate(cfg.replace(out_dir=str(root / "generate")))
    clean = str(gen["clean"])

    cs1_dir = str(root / "cs1")
    cs1 = cmd_inject(cfg.replace(out_dir=cs1_dir, input=clean), "point")
    det = cmd_detect(cfg.replace(out_dir=cs1_dir, input=str(cs1["contaminated"])))

    cs2_dir = str(root / "cs2")
    cs2 = cmd_inject(cfg.replace(out_dir=cs2_dir, input=clean), "contextual")
    sm = cmd_smooth(cfg.replace(out_dir=cs2_dir, input=str(cs2["contaminated"])))

    unmit = cmd_inject(
        cfg.replace(out_dir=str(root / "unmitigated"), input=str(cs1["contaminated"])), "contextual"
    )

    ev1 = cmd_evaluate(
        cfg.replace(
            out_dir=str(root / "evaluate_cs1"),
            truth=str(cs1["mask"]),
            predicted=str(det["mask"]),
            scores=str(det["scores"]),
            contaminated=str(cs1["contaminated"]),
            clean=clean,
        )
    )
    ev2 = cmd_evaluate(
        cfg.replace(
            out_dir=str(root / "evaluate_cs2"),
            truth=str(cs2["mask"]),
            contaminated=str(cs2["contaminated"]),
            smoothed=str(sm["smoothed"]),
            clean=clean,
        )
    )
    variant_files = {
        "clean": clean,
        "CS1": str(det["imputed"]),
        "CS2": str(sm["smoothed"]),
        "unmitigated": str(unmit["contaminated"]),
    }
    ev3 = cmd_evaluate(
        cfg.replace(
            out_dir=str(root / "evaluate_downstream"),
            variants=",".join(f"{lab}={variant_files[lab]}" for lab in DOWNSTREAM_ORDER),
        )
    )

    summary = {
        "cs1": json.loads(Path(ev1["report"]).read_text()),
        "cs2": json.loads(Path(ev2["report"]).read_text()),
        "downstream": json.loads(Path(ev3["report"]).read_text()),
    }
    summary_path = root / "summary.json"
    atomic_write_text(summary_path, [json.dumps(summary, indent=2) + "\n"])
    text = "\n".join(
        [
            "CS1: point anomalies / Isolation Forest",
            Path(ev1["table"]).read_text(),
            "CS2: contextual anomalies / FFT low-pass",
            Path(ev2["table"]).read_text(),
            "Downstream voltage prediction (per unit)",
            Path(ev3["table"]).read_text(),
        ]
    )
    txt_path = root / "summary.txt"
    atomic_write_text(txt_path, [text])
    write_manifest(cfg, "pipeline", {}, [summary_path, txt_path], {"stages": ["generate", "inject_point", "detect", "inject_contextual", "smooth", "evaluate"]})
    return {"summary": summary_path, "table": txt_path}


_HANDLERS = {
    "generate": cmd_generate,
    "inject": cmd_inject,
    "detect": cmd_detect,
    "smooth": cmd_smooth,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


# ----------------------------------------------------------------------------
# argument parsing


def _add_field_flag(parser: argparse.ArgumentParser, f) -> None:
    flag = "--" + f.name.replace("_", "-")
    kwargs = {"dest": f.name, "default": None, "help": f.metadata["help"]}
    typ = f.type if isinstance(f.type, str) else f.type.__name__
    if typ == "bool":
        parser.add_argument(flag, action=argparse.BooleanOptionalAction, **kwargs)
        return
    kwargs["type"] = {"int": int, "float": float}.get(typ, str)
    if f.metadata.get("choices"):
        kwargs["choices"] = f.metadata["choices"]
    parser.add_argument(flag, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meteranomaly",
        description="Inject, detect and smooth anomalies in smart-meter series.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmap = RunConfig.field_map()
    for name in COMMANDS:
        p = sub.add_parser(name, help=(_HANDLERS[name].__doc__ or "").split("\n")[0] or None)
        p.add_argument("--config", help="INI config file or a run manifest (JSON) to replay")
        for f in fields(RunConfig):
            group = f.metadata["group"]
            if group == "common" or group in _GROUPS[name]:
                _add_field_flag(p, f)
        for io_name in _IO_FLAGS[name]:
            _add_field_flag(p, fmap[io_name])
    return parser


def parse_config(argv: list[str] | None = None) -> tuple[str, RunConfig]:
    args = build_parser().parse_args(argv)
    file_values = read_config_file(args.config) if args.config else {}
    flag_values = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    return args.command, resolve(file_values, flag_values)


def main(argv: list[str] | None = None) -> int:
    try:
        command, cfg = parse_config(argv)
        result = _HANDLERS[command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    for role, path in result.items():
        print(f"{role}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
