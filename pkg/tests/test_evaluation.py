import json

import numpy as np
import pytest

from conftest import make_series
from meteranomaly.errors import InputError
from meteranomaly.evaluation import (
    ConfusionCounts,
    EvalReport,
    VoltageProxy,
    confusion,
    downstream_impact,
    f1,
    grubbs_critical_value,
    grubbs_detect,
    iqr_detect,
    iqr_fences,
    pooled_confusion,
    pooled_smoothing_quality,
    smoothing_quality,
    synthetic_voltage,
    table1,
)
from meteranomaly.series import LabelMask
from meteranomaly.synthgen import FleetConfig, generate


def _mask(bits):
    bits = np.asarray(bits, dtype=bool)
    return LabelMask(make_series(np.zeros(bits.shape[0])).grid, bits)


def test_confusion_examples():
    assert confusion(_mask([0] * 5), _mask([0] * 5)) == ConfusionCounts(0, 0, 0, 5)
    assert confusion(_mask([1] * 5), _mask([0] * 5)) == ConfusionCounts(0, 0, 5, 0)
    assert confusion(_mask([1, 0, 1, 0]), _mask([1, 1, 0, 0])) == ConfusionCounts(1, 1, 1, 1)


def test_confusion_length_mismatch():
    with pytest.raises(InputError):
        confusion(_mask([1, 0]), _mask([1, 0, 0]))


def test_f1_examples():
    assert f1(ConfusionCounts(1, 1, 1, 0)) == (0.5, 0.5, 0.5)
    assert f1(ConfusionCounts(7, 0, 0, 3)).f1 == 1.0
    assert f1(ConfusionCounts(0, 0, 0, 9)) == (0.0, 0.0, 0.0)
    assert f1(ConfusionCounts(0, 4, 4, 0)).f1 == 0.0


def test_f1_operating_point():
    prf = f1(ConfusionCounts(269, 81, 81, 0))
    assert prf.precision == prf.recall == pytest.approx(269 / 350)
    assert prf.f1 == pytest.approx(0.7686, abs=5e-5)


def test_pooled_confusion_is_micro_average():
    truth = {("A", "P"): _mask([1, 0, 0, 1]), ("B", "P"): _mask([0, 0, 1, 1])}
    pred = {("A", "P"): _mask([1, 1, 0, 0]), ("B", "P"): _mask([0, 0, 1, 1])}
    assert pooled_confusion(truth, pred) == ConfusionCounts(3, 1, 1, 3)
    with pytest.raises(InputError):
        pooled_confusion(truth, {("A", "P"): pred[("A", "P")]})


def test_iqr_example_only_outlier():
    s = make_series(list(range(1, 10)) + [100])
    lo, hi = iqr_fences(s.values)
    # q1 = 3.25, q3 = 7.75 by linear interpolation at ranks 2.25 and 6.75
    assert (lo, hi) == (3.25 - 1.5 * 4.5, 7.75 + 1.5 * 4.5)
    assert np.flatnonzero(iqr_detect(s).flags).tolist() == [9]


def test_iqr_constant_and_short():
    assert iqr_detect(make_series(np.full(20, 3.0))).count == 0
    with pytest.raises(InputError):
        iqr_detect(make_series([1.0, 2.0, 3.0]))


@pytest.mark.parametrize("n,expected", [(10, 2.290), (20, 2.709), (50, 3.128), (100, 3.383)])
def test_grubbs_critical_values_match_tables(n, expected):
    assert grubbs_critical_value(n, 0.05) == pytest.approx(expected, abs=1.5e-3)


def test_grubbs_null_few_flags():
    for seed in range(5):
        x = np.random.default_rng(seed).standard_normal(500)
        assert grubbs_detect(make_series(x)).count <= 3


def test_grubbs_extreme_point_first():
    x = np.zeros(30)
    x[::2] = 1.0
    x[7] = 10 * x.std() + 1
    m = grubbs_detect(make_series(x), max_iters=1)
    assert np.flatnonzero(m.flags).tolist() == [7]


def test_grubbs_constant_and_short():
    assert grubbs_detect(make_series(np.full(10, 1.0))).count == 0
    with pytest.raises(InputError):
        grubbs_detect(make_series(np.arange(6.0)))


def _smoothing_case():
    rng = np.random.default_rng(0)
    n = 48 * 4
    clean = make_series(1 + np.sin(np.arange(n) / 7.0) ** 2 + 0.01 * rng.normal(size=n))
    flags = np.zeros(n, dtype=bool)
    flags[[3, 4, 50, 51]] = True
    contaminated = clean.with_values(clean.values + 5.0 * flags)
    return clean, contaminated, LabelMask(clean.grid, flags)


def test_smoothing_quality_perfect_and_noop():
    clean, cont, truth = _smoothing_case()
    q = smoothing_quality(clean, cont, clean, truth)
    assert q.night_rms_reduction == 1.0 and q.peak_amplitude_error == 0.0
    q = smoothing_quality(clean, cont, cont, truth)
    assert q.night_rms_reduction == 0.0
    # flagged days 0 and 1 are excluded from the peak comparison
    assert q.peak_amplitude_error == 0.0


def test_smoothing_quality_empty_mask_absent():
    clean, cont, _ = _smoothing_case()
    q = smoothing_quality(clean, cont, cont, LabelMask.empty(clean.grid))
    assert q.night_rms_reduction is None
    pooled = pooled_smoothing_quality([q])
    assert pooled["night_rms_reduction"] is None


def test_pooled_smoothing_uses_sums():
    clean, cont, truth = _smoothing_case()
    half = clean.with_values(clean.values + 2.5 * truth.flags)
    a = smoothing_quality(clean, cont, half, truth)
    b = smoothing_quality(clean, cont, clean, truth)
    pooled = pooled_smoothing_quality([a, b])
    assert a.night_rms_reduction == pytest.approx(0.5)
    assert pooled["night_rms_reduction"] == pytest.approx(1 - np.sqrt(0.125))


@pytest.fixture(scope="module")
def small_fleet():
    return generate(FleetConfig(n_meters=6, days=60, seed=3))


def test_clean_voltage_range_on_default_fleet():
    v = synthetic_voltage(generate(FleetConfig(seed=2024)), VoltageProxy(), seed=2024)
    allv = np.concatenate(list(v.values()))
    assert 0.94 <= allv.min() < 0.97
    assert 0.99 < allv.max() <= 1.0 + 5 * VoltageProxy().noise_std


def test_downstream_clean_at_noise_floor(small_fleet):
    res = downstream_impact({"clean": small_fleet}, seed=1)
    assert res["clean"].mse == pytest.approx(VoltageProxy().noise_std ** 2, rel=0.25)


def test_downstream_determinism_and_order(small_fleet):
    noisy = {
        k: s.with_values(s.values + np.random.default_rng(0).gamma(1.0, size=len(s)) * 0.5)
        for k, s in small_fleet.items()
    }
    a = downstream_impact({"clean": small_fleet, "noisy": noisy, "copy": small_fleet}, seed=4)
    b = downstream_impact({"copy": small_fleet, "noisy": noisy, "clean": small_fleet}, seed=4)
    for label in a:
        assert a[label].to_dict() == b[label].to_dict()
    assert a["copy"].to_dict() == a["clean"].to_dict()
    assert a["noisy"].mse > a["clean"].mse


def test_downstream_errors(small_fleet):
    with pytest.raises(InputError):
        downstream_impact({"x": small_fleet})
    short = generate(FleetConfig(n_meters=6, days=30, seed=3))
    with pytest.raises(InputError):
        downstream_impact({"clean": small_fleet, "short": short})


def test_report_json_and_table(small_fleet):
    report = EvalReport()
    report.add_detection("perfect", ConfusionCounts(10, 0, 0, 90))
    res = downstream_impact({"clean": small_fleet, "again": small_fleet}, seed=0)
    order = ["clean", "again"]
    report.downstream = res
    report.downstream_order = order
    d = json.loads(report.to_json())
    assert d["detection"]["perfect"]["f1"] == 1.0
    assert [row["case"] for row in d["downstream"]] == order
    table = table1(res, ["again", "clean"]).splitlines()
    assert "Total MAE" in table[0] and "Worst case MAE" in table[0]
    assert [line.split()[0] for line in table[2:]] == ["again", "clean"]
    assert "perfect" in report.text_table()
