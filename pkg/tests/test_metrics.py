import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from statsmodels.stats.proportion import proportion_confint

from anchorlstm.exceptions import EvaluationError, InputError
from anchorlstm.metrics import (
    REPORT_KEYS,
    coverage_test,
    evaluate,
    mae,
    mean_width,
    r2_ev,
    report_dict,
    report_json,
    report_text,
    rmse,
    standardized_variance,
    wilson_interval,
)
from anchorlstm.uncertainty import summarize_quantile, summarize_t


def brute(y, yh):
    n = len(y)
    err = [a - b for a, b in zip(y, yh)]
    mse = sum(e * e for e in err) / n
    ybar = sum(y) / n
    var_y = sum((a - ybar) ** 2 for a in y) / n
    ebar = sum(err) / n
    var_e = sum((e - ebar) ** 2 for e in err) / n
    return math.sqrt(mse), sum(abs(e) for e in err) / n, 1 - mse / var_y, 1 - var_e / var_y


def test_point_metric_examples():
    assert rmse([1, 2], [1, 2]) == 0.0 == mae([1, 2], [1, 2])
    assert rmse([0, 0], [1, -1]) == 1.0 == mae([0, 0], [1, -1])
    assert mae([0, 0, 0], [0, 0, 3]) == 1.0
    assert rmse([0, 0, 0], [0, 0, 3]) == pytest.approx(math.sqrt(3))


def test_point_metric_errors():
    with pytest.raises(InputError):
        rmse([1, 2], [1])
    with pytest.raises(InputError):
        mae([], [])


def test_r2_ev_examples():
    y = np.array([1.0, 3.0, 2.0, 6.0])
    assert r2_ev(y, y) == (1.0, 1.0)
    r2, ev = r2_ev(y, np.full(4, y.mean()))
    assert r2 == pytest.approx(0.0, abs=1e-15) and ev == pytest.approx(0.0, abs=1e-15)
    r2, ev = r2_ev(y, y + 0.7)
    assert ev == pytest.approx(1.0) and r2 < 1.0
    with pytest.raises(EvaluationError):
        r2_ev([2.0, 2.0], [1.0, 3.0])


def test_metrics_against_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 50))
        y, yh = rng.normal(size=n), rng.normal(size=n)
        got = (rmse(y, yh), mae(y, yh), *r2_ev(y, yh))
        for a, b in zip(got, brute(list(y), list(yh))):
            assert abs(a - b) <= 1e-12 * max(1.0, abs(b))
        assert got[0] >= got[1]


@settings(max_examples=100, deadline=None)
@given(
    y=arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)),
    e=arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)),
)
def test_rmse_dominates_mae(y, e):
    assert rmse(y, y + e) >= mae(y, y + e) * (1 - 1e-12)


def test_wilson_closed_form_and_statsmodels():
    lo, hi = wilson_interval(90, 100)
    assert lo == pytest.approx(0.825, abs=1e-3) and hi == pytest.approx(0.944, abs=1e-3)
    ref = proportion_confint(90, 100, alpha=0.05, method="wilson")
    assert (lo, hi) == pytest.approx(ref, abs=1e-12)


def test_wilson_bounds_back_solved_from_width():
    p, lo_ref, hi_ref = 0.898, 0.889, 0.907
    z = 1.959963984540054
    n = round(z * z * p * (1 - p) / ((hi_ref - lo_ref) / 2) ** 2)
    lo, hi = wilson_interval(round(p * n), n)
    assert abs(lo - lo_ref) <= 0.002 and abs(hi - hi_ref) <= 0.002


def test_all_covered():
    res = coverage_test(np.arange(10.0), np.arange(10.0) - 1, np.arange(10.0) + 1)
    assert res.coverage == 1.0 and res.high == 1.0
    assert res.low < 1.0


def test_coverage_rejects_malformed_intervals():
    with pytest.raises(InputError):
        coverage_test([0.0, 1.0], [0.0, 2.0], [1.0, 1.5])


def test_coverage_boundary_inclusive_and_verdict():
    y = np.array([0.0, 1.0, 5.0])
    res = coverage_test(y, np.zeros(3), np.ones(3), nominal=0.9)
    assert res.coverage == pytest.approx(2 / 3)
    assert res.calibrated == (res.low <= 0.9 <= res.high)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 5000), frac=st.floats(0, 1), conf=st.floats(0.5, 0.999))
def test_wilson_bounds_contain_p(n, frac, conf):
    k = int(round(frac * n))
    lo, hi = wilson_interval(k, n, conf)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_coverage_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=50)
    lo = rng.normal(size=50) - 1
    hi = lo + rng.uniform(0, 3, 50)
    perm = rng.permutation(50)
    a = coverage_test(y, lo, hi)
    b = coverage_test(y[perm], lo[perm], hi[perm])
    assert (a.coverage, a.low, a.high) == (b.coverage, b.low, b.high)


def test_stvar_monte_carlo():
    z = np.random.default_rng(0).standard_normal(100_000)
    assert 0.99 <= standardized_variance(z, np.zeros_like(z), np.ones_like(z)) <= 1.01


def test_stvar_scaling_and_errors():
    rng = np.random.default_rng(1)
    y, mu, sd = rng.normal(size=200), rng.normal(size=200), rng.uniform(0.5, 2, 200)
    assert standardized_variance(y, mu, 2 * sd) == pytest.approx(standardized_variance(y, mu, sd) / 4)
    sd[3] = 0.0
    with pytest.raises(InputError):
        standardized_variance(y, mu, sd)


def test_stvar_small_for_inflated_sigma():
    rng = np.random.default_rng(2)
    s = rng.uniform(0.5, 2, 5000)
    y = s * rng.standard_t(4, 5000)
    sd = np.sqrt(2.0) * s
    assert standardized_variance(y, np.zeros_like(y), 4 * sd) < 0.5


def test_mean_width():
    assert mean_width([0, 0], [1, 1]) == 1.0
    assert mean_width([0, 0], [1, 3]) == 2.0
    with pytest.raises(InputError):
        mean_width([], [])


def test_widening_dominance_on_correct_noise():
    rng = np.random.default_rng(3)
    n = 4000
    loc = rng.normal(size=(1, n))
    scale = rng.uniform(0.5, 2.0, (1, n))
    y = loc[0] + scale[0] * rng.standard_t(4, n)
    covs, widths, stvars = [], [], []
    for k in (0.5, 1.0, 2.0):
        _, calib = evaluate(y, summarize_t(loc, scale * k, 4.0))
        covs.append(calib.coverage)
        widths.append(calib.width)
        stvars.append(calib.stvar)
    assert covs[0] < covs[1] < covs[2]
    assert widths[0] < widths[1] < widths[2]
    assert stvars[0] > stvars[1] > stvars[2]
    assert 0.85 < covs[1] < 0.95


def test_report_formats():
    y = np.array([0.0, 1.0, 2.0, 4.0])
    metrics, calib = evaluate(y, summarize_t(y[None] + 0.1, np.ones((1, 4)), 4.0))
    d = json.loads(report_json(metrics, calib))
    assert set(REPORT_KEYS) <= set(d) and d["nominal"] == 0.9
    text = report_text(metrics, calib)
    assert "nominal = 0.9" in text
    assert all(f"{k} = " in text for k in REPORT_KEYS)
    assert report_dict(metrics, calib)["calibrated"] in (True, False)


def test_report_keys_identical_across_heads():
    y = np.array([0.0, 1.0, 2.0, 4.0])
    t = report_dict(*evaluate(y, summarize_t(y[None], np.ones((1, 4)), 4.0)))
    q = report_dict(*evaluate(y, summarize_quantile(np.stack([y - 1, y, y + 1], axis=1)[None])))
    assert set(t) == set(q)
