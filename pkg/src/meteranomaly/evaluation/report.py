"""Evaluation report: JSON structure and a plain-text table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .downstream import DownstreamResult
from .metrics import ConfusionCounts, f1

REPORT_FORMAT = "meteranomaly.eval_report"
REPORT_VERSION = 1


def detection_entry(counts: ConfusionCounts) -> dict:
    prf = f1(counts)
    return {"counts": counts.as_dict(), "precision": prf.precision, "recall": prf.recall, "f1": prf.f1}


@dataclass
class EvalReport:
    """Evaluation results.

    ``detection`` maps a method name (``"iforest"``, ``"iqr"``, ...) to its
    pooled counts and scores; ``smoothing`` holds the fleet smoothing
    metrics; ``downstream`` maps a case label to its test errors.
    """

    detection: dict[str, dict] = field(default_factory=dict)
    smoothing: dict | None = None
    downstream: dict[str, DownstreamResult] = field(default_factory=dict)
    downstream_order: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add_detection(self, name: str, counts: ConfusionCounts) -> None:
        self.detection[name] = detection_entry(counts)

    def to_dict(self) -> dict:
        order = self.downstream_order or list(self.downstream)
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "meta": self.meta,
            "detection": self.detection,
            "smoothing": self.smoothing,
            "downstream": [{"case": label, **self.downstream[label].to_dict()} for label in order],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def text_table(self) -> str:
        lines = []
        if self.detection:
            lines.append(f"{'Detector':<16}{'TP':>8}{'FP':>8}{'FN':>8}{'Precision':>11}{'Recall':>9}{'F1':>9}")
            for name, d in self.detection.items():
                c = d["counts"]
                lines.append(
                    f"{name:<16}{c['tp']:>8}{c['fp']:>8}{c['fn']:>8}"
                    f"{d['precision']:>11.4f}{d['recall']:>9.4f}{d['f1']:>9.4f}"
                )
            lines.append("")
        if self.smoothing:
            s = self.smoothing
            lines.append("Smoothing")
            for key in ("night_rms_reduction", "peak_amplitude_error", "worst_peak_amplitude_error"):
                v = s.get(key)
                lines.append(f"  {key:<28}{'n/a' if v is None else f'{v:.4f}'}")
            lines.append("")
        if self.downstream:
            lines.append(table1(self.downstream, self.downstream_order or list(self.downstream)))
        return "\n".join(lines).rstrip() + "\n"


def table1(results: dict[str, DownstreamResult], order: list[str]) -> str:
    """Downstream errors in per unit: case, total MAE, total MSE, worst-case MAE."""
    header = f"{'Case study':<24}{'Total MAE':>14}{'Total MSE':>14}{'Worst case MAE':>16}"
    rows = [header, "-" * len(header)]
    for label in order:
        r = results[label]
        rows.append(f"{label:<24}{r.mae:>14.4e}{r.mse:>14.4e}{r.worst_mae:>16.4e}")
    return "\n".join(rows)
