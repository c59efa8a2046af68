import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from windgp.errors import EmptyInput, NonpositiveSigma, OutOfRange
from windgp.metrics import (
    avg_interval_score,
    coverage,
    evaluate_predictions,
    interval_score,
    interval_score_bounds,
    kolmogorov_sf,
    ks_uniform,
    pit,
    rmse,
    z_crit,
)


def test_rmse_examples():
    y = np.array([0.3, -0.2, 0.5])
    assert rmse(y, y) == 0.0
    assert rmse(y + 0.1, y) == pytest.approx(0.1, abs=1e-15)
    assert rmse([1.0, 1.0], [0.0, 1.0]) == pytest.approx(math.sqrt(0.5))
    assert rmse([1.0, 1.0], [0.0, 1.0]) == pytest.approx(0.70711, abs=1e-5)
    with pytest.raises(EmptyInput):
        rmse([], [])


def test_pit_examples():
    assert pit(0.3, 0.3, 0.2) == 0.5
    assert pit(1.959964 * 0.2, 0.0, 0.2) == pytest.approx(0.975, abs=1e-6)
    assert pit(-0.2, 0.0, 0.2) == pytest.approx(0.158655, abs=1e-6)
    assert pit(-1.0, 0.0, 1.0) == pytest.approx(0.5 * math.erfc(1 / math.sqrt(2)), abs=1e-15)
    with pytest.raises(NonpositiveSigma):
        pit(0.0, 0.0, 0.0)
    with pytest.raises(NonpositiveSigma):
        pit([0.0, 1.0], 0.0, [1.0, -1.0])


def test_pit_accuracy_against_erfc():
    x = np.linspace(-8, 8, 2001)
    ref = np.array([0.5 * math.erfc(-v / math.sqrt(2)) for v in x])
    assert np.max(np.abs(pit(x, 0.0, 1.0) - ref)) < 1e-7


def test_z_crit():
    assert z_crit(0.05) == pytest.approx(1.959963984540054, abs=1e-8)
    assert z_crit(0.2) == pytest.approx(1.2815515655446004, abs=1e-8)


def test_ks_examples(backend):
    assert ks_uniform([0.5])[0] == 0.5
    n = 40
    q = (np.arange(1, n + 1) - 0.5) / n
    assert ks_uniform(q)[0] == pytest.approx(0.5 / n, abs=1e-15)
    assert ks_uniform(np.zeros(7))[0] == 1.0
    with pytest.raises(OutOfRange):
        ks_uniform([0.2, 1.2])
    with pytest.raises(EmptyInput):
        ks_uniform([])


def brute_sup(q):
    q = np.asarray(q)
    n = q.size
    best = 0.0
    for x in q:
        below_or_eq = np.count_nonzero(q <= x) / n
        below = np.count_nonzero(q < x) / n
        best = max(best, abs(below_or_eq - x), abs(below - x))
    return best


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(0.0, 1.0)))
def test_ks_matches_brute_force(q):
    assert ks_uniform(q)[0] == brute_sup(q)


@pytest.mark.parametrize("lam", [0.3, 0.5, 0.8, 1.0, 1.36, 2.0, 3.0])
def test_kolmogorov_series_against_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-9)


def test_kolmogorov_series_limits():
    assert kolmogorov_sf(0.0) == 1.0
    assert kolmogorov_sf(0.01) == 1.0
    assert kolmogorov_sf(10.0) < 1e-80


def test_pit_of_own_samples_is_uniform():
    passes = 0
    reps = 100
    for seed in range(reps):
        r = np.random.default_rng(seed)
        mu = r.normal(size=2000)
        sigma = r.uniform(0.1, 2.0, size=2000)
        y = mu + sigma * r.standard_normal(2000)
        passes += ks_uniform(pit(y, mu, sigma))[1] > 0.01
    assert passes >= 95


def test_coverage_examples():
    assert coverage(np.full(10, 0.5), 0.9) == 1.0
    assert coverage([0.05, 0.5, 0.95], 0.2) == pytest.approx(1 / 3)
    assert coverage([0.0, 0.3, 1.0], 0.0) == 1.0
    assert coverage([0.1, 0.9], 0.2) == 1.0  # closed endpoints


@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.5])
def test_coverage_consistent_with_interval_membership(alpha):
    r = np.random.default_rng(4)
    mu = r.normal(size=5000)
    sigma = r.uniform(0.1, 1.0, size=5000)
    y = mu + 1.3 * sigma * r.standard_normal(5000)
    z = z_crit(alpha)
    direct = np.mean((y >= mu - z * sigma) & (y <= mu + z * sigma))
    assert coverage(pit(y, mu, sigma), alpha) == direct


def test_interval_score_examples():
    assert interval_score_bounds(0.5, 0.0, 1.0, 0.05) == 1.0
    assert interval_score_bounds(1.1, 0.0, 1.0, 0.05) == pytest.approx(5.0)
    assert interval_score_bounds(-0.1, 0.0, 1.0, 0.05) == pytest.approx(5.0)
    assert interval_score_bounds(0.5, 0.2, 0.8, 0.05) < interval_score_bounds(0.5, 0.0, 1.0, 0.05)
    assert interval_score(0.0, 0.0, 1.0, 0.05) == pytest.approx(2 * 1.959963984540054)
    with pytest.raises(NonpositiveSigma):
        interval_score(0.0, 0.0, 0.0, 0.05)


def test_interval_score_prefers_true_sigma():
    r = np.random.default_rng(8)
    y = 0.7 * r.standard_normal(200_000)
    scores = {s: avg_interval_score(y, 0.0, s, 0.05) for s in (0.4, 0.55, 0.7, 0.85, 1.0)}
    assert min(scores, key=scores.get) == 0.7


def test_evaluate_predictions_report():
    r = np.random.default_rng(2)
    actual = r.normal(size=(2, 24, 5))
    mean = np.zeros_like(actual)
    sigma = np.ones((2, 24, 1))
    rep = evaluate_predictions(actual, mean, sigma, [0.2], [0.05])
    assert rep.counts == (2, 24, 5)
    d = rep.to_dict()
    assert set(d) == {"rmse", "ks", "coverage", "avg_is", "counts"}
    assert set(d["ks"]) == {"D", "p"}
    assert 0.0 <= d["coverage"]["0.2"] <= 1.0
    assert all(math.isfinite(v) for v in (rep.rmse, rep.ks_statistic, rep.ks_p_value))
