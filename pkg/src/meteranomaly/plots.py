"""Static SVG figures.

Output is byte-stable: the SVG hash salt is fixed and the date metadata is
dropped, so equal inputs give identical files.
"""

from __future__ import annotations

import io
import os
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .series import atomic_write_text  # noqa: E402

_RC = {"svg.hashsalt": "meteranomaly", "svg.fonttype": "path", "figure.dpi": 72}


def _save(fig, path: str | os.PathLike) -> None:
    buf = io.StringIO()
    with matplotlib.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_text(Path(path), [buf.getvalue()])


def overlay(
    path,
    hours: np.ndarray,
    curves: Sequence[tuple[str, np.ndarray]],
    markers: np.ndarray | None = None,
    title: str = "",
    ylabel: str = "P [kW]",
) -> None:
    """Time-series overlay; ``markers`` (bool) highlights anomalous samples of the first curve."""
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(9, 3.5))
        for label, y in curves:
            ax.plot(hours, y, lw=0.9, label=label)
        if markers is not None and markers.any():
            ax.scatter(hours[markers], curves[0][1][markers], s=12, c="red", zorder=3, label="anomaly")
        ax.set_xlabel("hours from start")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
    _save(fig, path)


def score_scatter(path, scores: np.ndarray, threshold: float | None, title: str = "") -> None:
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(9, 3.5))
        idx = np.arange(scores.shape[0])
        above = scores >= threshold if threshold is not None else np.zeros(scores.shape, bool)
        ax.scatter(idx[~above], scores[~above], s=2, c="tab:blue", label="normal")
        ax.scatter(idx[above], scores[above], s=4, c="tab:red", label="flagged")
        if threshold is not None:
            ax.axhline(threshold, color="k", lw=0.8, ls="--", label=f"threshold {threshold:.3f}")
        ax.set_xlabel("sample")
        ax.set_ylabel("anomaly score")
        ax.set_title(title)
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
    _save(fig, path)
