"""Isolation Forest built from scratch.

Tree growth consumes its generator in a fixed order, which the tests replay
with an independent implementation:

1. ``rng.choice(n_rows, size=psi, replace=False)`` picks the subsample;
2. nodes are grown in preorder (left subtree before right). A node becomes
   external when it holds one row, when its depth equals the height limit,
   or when all of its rows are identical. Otherwise it draws
   ``varying[rng.integers(len(varying))]`` for the split feature (``varying``
   = features that are not constant at the node, in ascending order) and
   ``rng.uniform(lo, hi)`` for the split value, redrawing until
   ``lo < split < hi``. Rows with ``x[f] < split`` go left. When ``lo``
   and ``hi`` are adjacent doubles no value lies strictly between them;
   the split is then ``hi`` and no value is drawn. When ``hi - lo``
   overflows, the value is ``lo * (1 - u) + hi * u`` with ``u = rng.random()``.

Tree ``t`` draws from ``substream(seed, "iforest", *stream_key, t)``; the
substreams exist before any work is scheduled, so the forest is identical
for any number of worker threads.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .seeding import substream
from .series import Channel, LabelMask, MeterSeries, SeriesKey, ceil_fraction, quartiles

FOREST_FORMAT = "meteranomaly.isolation_forest"
FOREST_FORMAT_VERSION = 1


def _harmonic_terms(n: int) -> list[float]:
    # each 1/i as its double q plus the exact residual 1/i - q, so that fsum
    # rounds only the final total
    terms = []
    for i in range(1, n + 1):
        q = 1.0 / i
        a, b = q.as_integer_ratio()
        terms.append(q)
        terms.append((b - i * a) / (b * i))
    return terms


@lru_cache(maxsize=None)
def harmonic(n: int) -> float:
    """H(n) = 1 + 1/2 + ... + 1/n, correctly rounded."""
    return math.fsum(_harmonic_terms(n))


@lru_cache(maxsize=None)
def avg_path_norm(n: int) -> float:
    """Average unsuccessful-search path length ``c(n)`` of a BST with n keys.

    c(1) = 0, c(2) = 1 and c(n) = 2 H(n-1) - 2 (n-1)/n otherwise. The last
    form equals 2 H(n) - 2, which is summed and rounded in one step.
    """
    if n < 1:
        raise InputError(f"c(n) needs n >= 1, got {n}")
    if n == 1:
        return 0.0
    if n == 2:
        return 1.0
    return math.fsum([2.0 * t for t in _harmonic_terms(n)] + [-2.0])


@dataclass(frozen=True, eq=False)
class IsoTree:
    """One isolation tree as preorder node arrays.

    ``feature[i] == -1`` marks an external node; ``size`` counts the training
    rows that reached each node and ``depth`` is its edge distance from the
    root.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_external(self) -> int:
        return int(self.is_leaf.sum())

    @property
    def n_internal(self) -> int:
        return self.n_nodes - self.n_external

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def same_structure(self, other: "IsoTree") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name), equal_nan=True)
            for name in ("feature", "threshold", "left", "right", "size", "depth")
        )

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if math.isnan(v) else v for v in self.threshold.tolist()],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "size": self.size.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsoTree":
        feature = np.asarray(d["feature"], dtype=np.int64)
        left = np.asarray(d["left"], dtype=np.int64)
        right = np.asarray(d["right"], dtype=np.int64)
        depth = np.zeros(feature.shape[0], dtype=np.int64)
        for i in range(feature.shape[0]):  # preorder: parents precede children
            if feature[i] >= 0:
                depth[left[i]] = depth[right[i]] = depth[i] + 1
        threshold = np.array([np.nan if v is None else v for v in d["threshold"]], dtype=np.float64)
        return cls(feature, threshold, left, right, np.asarray(d["size"], dtype=np.int64), depth)


def _draw_split(rng: np.random.Generator, lo: float, hi: float) -> float:
    lo, hi = float(lo), float(hi)
    if math.isfinite(hi - lo):
        return rng.uniform(lo, hi)
    # the span overflows; interpolate instead (one double drawn either way)
    u = rng.random()
    return lo * (1.0 - u) + hi * u


def grow_tree(sample: np.ndarray, rng: np.random.Generator, height_limit: int) -> IsoTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    size: list[int] = []
    depth: list[int] = []

    def grow(rows: np.ndarray, d: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        size.append(rows.shape[0])
        depth.append(d)
        if rows.shape[0] <= 1 or d >= height_limit:
            return node
        lo = rows.min(axis=0)
        hi = rows.max(axis=0)
        varying = np.flatnonzero(hi > lo)
        if varying.size == 0:
            return node
        f = int(varying[rng.integers(varying.size)])
        if np.nextafter(lo[f], hi[f]) == hi[f]:
            # adjacent doubles: nothing lies strictly between, hi still separates
            split = hi[f]
        else:
            split = _draw_split(rng, lo[f], hi[f])
            while not lo[f] < split < hi[f]:
                split = _draw_split(rng, lo[f], hi[f])
        goes_left = rows[:, f] < split
        feature[node] = f
        threshold[node] = float(split)
        left[node] = grow(rows[goes_left], d + 1)
        right[node] = grow(rows[~goes_left], d + 1)
        return node

    grow(sample, 0)
    return IsoTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(size, dtype=np.int64),
        np.asarray(depth, dtype=np.int64),
    )


@dataclass(frozen=True, eq=False)
class IsolationForest:
    trees: tuple[IsoTree, ...]
    n_trees: int
    subsample_size: int
    height_limit: int
    seed: int
    feature_names: tuple[str, ...] = ()
    stream_key: tuple = ()

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "format": FOREST_FORMAT,
            "version": FOREST_FORMAT_VERSION,
            "n_trees": self.n_trees,
            "subsample_size": self.subsample_size,
            "height_limit": self.height_limit,
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "stream_key": [str(k) for k in self.stream_key],
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "IsolationForest":
        if d.get("format") != FOREST_FORMAT:
            raise InputError(f"not a serialized forest: format={d.get('format')!r}")
        if d.get("version") != FOREST_FORMAT_VERSION:
            raise InputError(f"unsupported forest version {d.get('version')!r}")
        trees = tuple(IsoTree.from_dict(t) for t in d["trees"])
        return cls(
            trees,
            int(d["n_trees"]),
            int(d["subsample_size"]),
            int(d["height_limit"]),
            int(d["seed"]),
            tuple(d["feature_names"]),
            tuple(d.get("stream_key", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "IsolationForest":
        return cls.from_dict(json.loads(text))


def _as_matrix(data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InputError(f"data must be a 1-D or 2-D array, got shape {x.shape}")
    return x


def fit(
    data,
    n_trees: int = 100,
    subsample_size: int = 256,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    stream_key: tuple = (),
    workers: int = 1,
) -> IsolationForest:
    """Grow ``n_trees`` isolation trees on subsamples of ``data`` (rows).

    ``subsample_size`` is clamped to the number of rows.
    """
    x = _as_matrix(data)
    n, d = x.shape
    if n < 2:
        raise InputError(f"need at least 2 rows to fit, got {n}")
    if d < 1:
        raise InputError("need at least one feature")
    if not np.all(np.isfinite(x)):
        raise InputError("data contains non-finite values")
    if n_trees < 1 or subsample_size < 2:
        raise InputError("n_trees must be >= 1 and subsample_size >= 2")
    psi = min(int(subsample_size), n)
    height_limit = int(math.ceil(math.log2(psi)))
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(d))
    if len(names) != d:
        raise InputError(f"{len(names)} feature names for {d} features")

    def build(t: int) -> IsoTree:
        rng = substream(seed, "iforest", *stream_key, t)
        rows = rng.choice(n, size=psi, replace=False)
        return grow_tree(x[rows], rng, height_limit)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = tuple(pool.map(build, range(n_trees)))
    else:
        trees = tuple(build(t) for t in range(n_trees))
    return IsolationForest(trees, int(n_trees), psi, height_limit, int(seed), names, tuple(stream_key))


def path_length(x, tree: IsoTree) -> float:
    """Edges from the root to the external node reached by ``x``, plus ``c(size)`` there."""
    x = np.asarray(x, dtype=np.float64).ravel()
    node = 0
    while tree.feature[node] >= 0:
        f = tree.feature[node]
        node = tree.left[node] if x[f] < tree.threshold[node] else tree.right[node]
    return float(tree.depth[node]) + avg_path_norm(int(tree.size[node]))


def tree_path_lengths(tree: IsoTree, x: np.ndarray) -> np.ndarray:
    """Vectorised :func:`path_length` over the rows of ``x``."""
    rows = np.arange(x.shape[0])
    node = np.zeros(x.shape[0], dtype=np.int64)
    for _ in range(tree.max_depth):
        feat = tree.feature[node]
        internal = feat >= 0
        if not internal.any():
            break
        go_left = x[rows, np.where(internal, feat, 0)] < tree.threshold[node]
        node = np.where(internal, np.where(go_left, tree.left[node], tree.right[node]), node)
    adjust = np.array([avg_path_norm(int(s)) for s in tree.size], dtype=np.float64)
    return tree.depth[node].astype(np.float64) + adjust[node]


@dataclass(frozen=True, eq=False)
class ScoreResult:
    """Per-row anomaly scores; higher means more anomalous.

    ``threshold``, ``flagged`` and ``contamination`` are set by
    :func:`threshold_and_flag`.
    """

    scores: np.ndarray
    mean_path_length: np.ndarray
    threshold: float | None = None
    flagged: np.ndarray | None = None
    contamination: float | None = None

    @property
    def n_flagged(self) -> int:
        return 0 if self.flagged is None else int(self.flagged.sum())


def anomaly_score(mean_path: np.ndarray | float, n: int) -> np.ndarray:
    """``2 ** (-E[h(x)] / c(n))``."""
    return np.power(2.0, -np.asarray(mean_path, dtype=np.float64) / avg_path_norm(n))


def score(forest: IsolationForest, data) -> ScoreResult:
    x = _as_matrix(data)
    if x.shape[1] != forest.n_features:
        raise InputError(f"forest has {forest.n_features} features, data has {x.shape[1]}")
    total = np.zeros(x.shape[0], dtype=np.float64)
    for tree in forest.trees:
        total += tree_path_lengths(tree, x)
    mean_path = total / len(forest.trees)
    return ScoreResult(anomaly_score(mean_path, forest.subsample_size), mean_path)


def threshold_and_flag(result: ScoreResult, contamination: float) -> ScoreResult:
    """Flag exactly ``ceil(contamination * N)`` rows with the highest scores.

    Equal scores are ranked by ascending row index.
    """
    if not 0.0 < contamination < 1.0:
        raise InputError(f"contamination must lie in (0, 1), got {contamination}")
    n = result.scores.shape[0]
    k = ceil_fraction(contamination, n)
    order = np.argsort(-result.scores, kind="stable")
    flagged = np.zeros(n, dtype=bool)
    flagged[order[:k]] = True
    threshold = float(result.scores[order[k - 1]])
    return ScoreResult(result.scores, result.mean_path_length, threshold, flagged, contamination)


def impute_median(
    series_set: Mapping[SeriesKey, MeterSeries], masks: Mapping[SeriesKey, LabelMask]
) -> dict[SeriesKey, MeterSeries]:
    """Replace flagged samples by the median of their own (pre-imputation) column."""
    out: dict[SeriesKey, MeterSeries] = {}
    for key, s in series_set.items():
        mask = masks.get(key)
        if mask is None or not mask.flags.any():
            out[key] = s
            continue
        if mask.grid != s.grid:
            raise InputError(f"mask grid does not match series {key[0]}/{Channel(key[1]).value}")
        values = s.values.copy()
        values[mask.flags] = quartiles(s.values)[1]
        out[key] = s.with_values(values)
    return out


# ----------------------------------------------------------------------------
# series-level detection


@dataclass(frozen=True)
class DetectorConfig:
    """Settings for detection over a fleet.

    ``layout="per_channel"`` fits one univariate forest per meter-channel;
    ``"joint"`` fits one forest per meter on the rows ``(P(t), Q(t))`` and
    applies each flagged row to every channel.
    """

    n_trees: int = 100
    subsample_size: int = 256
    contamination: float = 0.01
    seed: int = 0
    layout: str = "per_channel"
    channels: tuple[Channel, ...] = (Channel.P_kW, Channel.Q_kvar)

    def __post_init__(self):
        if self.layout not in ("per_channel", "joint"):
            raise InputError(f"layout must be 'per_channel' or 'joint', got {self.layout!r}")
        if not 0.0 < self.contamination < 1.0:
            raise InputError(f"contamination must lie in (0, 1), got {self.contamination}")
        object.__setattr__(self, "channels", tuple(Channel(c) for c in self.channels))


@dataclass
class Detection:
    scores: dict[SeriesKey, ScoreResult] = field(default_factory=dict)
    masks: dict[SeriesKey, LabelMask] = field(default_factory=dict)
    imputed: dict[SeriesKey, MeterSeries] = field(default_factory=dict)
    forests: dict[tuple, IsolationForest] = field(default_factory=dict)


def _groups(series_set: Mapping[SeriesKey, MeterSeries], cfg: DetectorConfig) -> list[tuple[SeriesKey, ...]]:
    keys = [k for k in series_set if Channel(k[1]) in cfg.channels]
    if cfg.layout == "per_channel":
        return [(k,) for k in keys]
    by_meter: dict[str, list[SeriesKey]] = {}
    for k in keys:
        by_meter.setdefault(k[0], []).append(k)
    groups = []
    for meter, ks in by_meter.items():
        ks.sort(key=lambda k: cfg.channels.index(Channel(k[1])))
        grids = {series_set[k].grid for k in ks}
        if len(grids) != 1:
            raise InputError(f"meter {meter}: channels do not share a grid")
        groups.append(tuple(ks))
    return groups


def detect(
    series_set: Mapping[SeriesKey, MeterSeries],
    cfg: DetectorConfig,
    workers: int = 1,
    keep_forests: bool = False,
) -> Detection:
    """Fit, score, threshold and median-impute every selected series."""
    groups = _groups(series_set, cfg)

    def run(group: tuple[SeriesKey, ...]):
        x = np.column_stack([series_set[k].values for k in group])
        stream = (group[0][0],) + tuple(Channel(k[1]).value for k in group)
        forest = fit(
            x,
            cfg.n_trees,
            cfg.subsample_size,
            cfg.seed,
            feature_names=[Channel(k[1]).value for k in group],
            stream_key=stream,
        )
        return forest, threshold_and_flag(score(forest, x), cfg.contamination)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, groups))
    else:
        results = [run(g) for g in groups]

    det = Detection()
    for group, (forest, res) in zip(groups, results):
        for k in group:
            det.scores[k] = res
            det.masks[k] = LabelMask(series_set[k].grid, res.flagged)
        if keep_forests:
            det.forests[group] = forest
    for k, s in series_set.items():
        det.masks.setdefault(k, LabelMask.empty(s.grid))
    det.imputed = impute_median(series_set, det.masks)
    return det
