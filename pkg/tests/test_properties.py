"""Randomised invariants, 1000 examples each."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_series
from meteranomaly.errors import InputError
from meteranomaly.evaluation import ConfusionCounts, f1, iqr_detect, iqr_fences
from meteranomaly.iforest import ScoreResult, anomaly_score, avg_path_norm, fit, score, threshold_and_flag
from meteranomaly.injector import ContextualAnomalyConfig, PointAnomalyConfig, inject_contextual, inject_point
from meteranomaly.series import compute_stats, night_mask
from meteranomaly.spectral import forward, inverse, lowpass_index

PROPERTY = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**63 - 1)


# every reachable mean path length is at least 1: a root split adds one edge,
# and a root leaf holds psi >= 2 rows, adding c(psi) >= 1
path_lengths = st.floats(1.0, 1e3)


@PROPERTY
@given(path_lengths, path_lengths, st.integers(2, 100_000))
def test_score_bounds_and_monotone(h1, h2, n):
    s1, s2 = anomaly_score(h1, n), anomaly_score(h2, n)
    assert 0.0 < s1 < 1.0
    if h1 < h2:
        assert s1 >= s2
        if (h2 - h1) / avg_path_norm(n) > 1e-12:
            assert s1 > s2


@PROPERTY
@given(arrays(np.float64, st.integers(2, 24), elements=finite), seeds)
def test_fitted_scores_in_open_interval(x, seed):
    res = score(fit(x, n_trees=4, seed=seed), x)
    assert np.all(res.scores > 0.0) and np.all(res.scores < 1.0)
    assert np.all(res.mean_path_length >= 0.0)


@PROPERTY
@given(
    arrays(np.float64, st.integers(1, 400), elements=st.sampled_from([0.1, 0.2, 0.3, 0.5, 0.7, 0.9])),
    st.floats(1e-4, 0.9999),
)
def test_flag_count_exact(scores, alpha):
    r = threshold_and_flag(ScoreResult(scores, np.zeros_like(scores)), alpha)
    k = math.ceil(round(alpha * scores.shape[0], 9))
    assert r.n_flagged == k
    assert scores[r.flagged].min() >= (scores[~r.flagged].max() if k < scores.shape[0] else -np.inf)
    # ties at the threshold resolve to the lowest indices
    at = np.flatnonzero(scores == r.threshold)
    chosen = r.flagged[at]
    assert np.all(np.diff(chosen.astype(int)) <= 0)


@PROPERTY
@given(
    arrays(np.float64, st.integers(2, 300), elements=st.floats(-1e3, 1e3)),
    st.floats(0.0, 1.0),
    st.floats(0.5, 10.0),
    st.sampled_from(["positive", "symmetric"]),
    seeds,
)
def test_point_mask_soundness(x, p, k, sign_mode, seed):
    s = make_series(x)
    try:
        out, mask = inject_point(s, PointAnomalyConfig(p, k, sign_mode, seed))
    except InputError:
        # constant series, or a spike too small to register on these values
        sigma = compute_stats(s).std
        assert sigma == 0.0 or np.any(s.values + k * sigma == s.values)
        return
    changed = out.values != s.values
    assert np.array_equal(changed, mask.flags)
    again, mask2 = inject_point(s, PointAnomalyConfig(p, k, sign_mode, seed))
    assert np.array_equal(again.values, out.values) and np.array_equal(mask2.flags, mask.flags)


@PROPERTY
@given(
    arrays(np.float64, st.integers(1, 4).map(lambda d: 48 * d), elements=st.floats(0.0, 50.0)),
    st.floats(0.0, 1.0),
    seeds,
    st.integers(-720, 720),
)
def test_contextual_mask_soundness(x, p, seed, tz):
    s = make_series(x, tz=tz)
    try:
        out, mask = inject_contextual(s, ContextualAnomalyConfig(p, seed))
    except InputError:
        # no complete local day, or a peak too small to register at night
        mu = compute_stats(s).mean_daily_peak
        night = night_mask(s)
        assert mu is None or np.any(s.values[night] + mu == s.values[night])
        return
    assert np.array_equal(out.values != s.values, mask.flags)
    assert not (mask.flags & ~night_mask(s)).any()


@PROPERTY
@given(arrays(np.float64, st.integers(1, 600), elements=finite), st.data())
def test_lowpass_preserves_hermitian_symmetry(x, data):
    spec = forward(x)
    kc = data.draw(st.integers(0, spec.n // 2))
    filtered = lowpass_index(spec, kc)
    assert filtered.is_conjugate_symmetric(0.0)
    assert np.all(filtered.bins[filtered.folded_index() > kc] == 0.0)


@PROPERTY
@given(arrays(np.float64, st.integers(1, 600), elements=finite), st.data())
def test_brick_wall_idempotent(x, data):
    n = x.shape[0]
    kc = data.draw(st.integers(0, n // 2))
    once = inverse(lowpass_index(forward(x), kc))
    twice = inverse(lowpass_index(forward(once), kc))
    scale = max(np.max(np.abs(once)), np.max(np.abs(x)) * 1e-12, 1e-300)
    assert np.max(np.abs(twice - once)) <= 1e-9 * scale


@PROPERTY
@given(arrays(np.float64, st.integers(1, 700), elements=finite))
def test_round_trip_and_parseval_any_length(x):
    spec = forward(x)
    scale = max(np.max(np.abs(x)), 1e-300)
    assert np.max(np.abs(inverse(spec) - x)) <= 1e-9 * scale
    energy = np.sum(x**2)
    assert abs(energy - np.sum(np.abs(spec.bins) ** 2) / x.shape[0]) <= 1e-9 * max(energy, 1e-300)


counts = st.integers(0, 10**6)


@PROPERTY
@given(counts, counts, counts, counts)
def test_f1_bounds_and_symmetry(tp, fp, fn, tn):
    prf = f1(ConfusionCounts(tp, fp, fn, tn))
    for v in prf:
        assert 0.0 <= v <= 1.0
    assert prf.f1 <= max(prf.precision, prf.recall) + 1e-15
    swapped = f1(ConfusionCounts(tp, fn, fp, tn))
    assert swapped.f1 == prf.f1
    assert (swapped.precision, swapped.recall) == (prf.recall, prf.precision)
    if tp == 0:
        assert prf.f1 == 0.0


@PROPERTY
@given(
    arrays(np.int64, st.integers(4, 200), elements=st.integers(-1000, 1000)),
    st.integers(-6, 6),
    st.integers(-10**6, 10**6),
)
def test_iqr_equivariance_exact(x, log2a, b):
    # dyadic scale and integer shift keep every quantile and fence exact
    base = iqr_detect(make_series(x.astype(float)))
    moved = iqr_detect(make_series(x.astype(float) * 2.0**log2a + b))
    assert np.array_equal(base.flags, moved.flags)


@PROPERTY
@given(
    arrays(np.float64, st.integers(4, 200), elements=st.floats(-1e3, 1e3)),
    st.floats(1e-3, 1e3),
    st.floats(-1e4, 1e4),
)
def test_iqr_equivariance_general(x, a, b):
    lo, hi = iqr_fences(x)
    y = a * x + b
    base = iqr_detect(make_series(x)).flags
    moved = iqr_detect(make_series(y)).flags
    # ignore samples within rounding distance of a fence
    tol = 1e-9 * (np.max(np.abs(x)) + abs(b) / a + 1.0)
    clear = (np.abs(x - lo) > tol) & (np.abs(x - hi) > tol)
    assert np.array_equal(base[clear], moved[clear])


@PROPERTY
@given(arrays(np.float64, st.integers(1, 200), elements=finite))
def test_stats_orderings(x):
    st_ = compute_stats(make_series(x))
    assert st_.q1 <= st_.median <= st_.q3
    assert st_.std >= 0.0
