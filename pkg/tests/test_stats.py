import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grmdp.stats import FitError, loglog_fit, mean_ci


def test_mean_ci_examples():
    assert mean_ci([1, 1, 1, 1]) == (1.0, 0.0)
    assert mean_ci([3.5]) == (3.5, 0.0)
    mean, half = mean_ci([0, 2])
    assert mean == 1.0
    assert half == pytest.approx(12.7062, abs=1e-4)
    with pytest.raises(ValueError):
        mean_ci([])


def test_loglog_examples():
    fit = loglog_fit([10, 1000], [1, 0.1])
    assert fit.slope == pytest.approx(-0.5, abs=1e-15)
    assert fit.n == 2 and fit.half_width == 0.0
    flat = loglog_fit([1, 10, 100], [2, 2, 2])
    assert flat.slope == 0.0 and flat.r2 == 0.0
    N = np.array([10, 20, 50, 100, 1000])
    exact = loglog_fit(N, 4.0 / N)
    assert exact.slope == pytest.approx(-1.0, abs=1e-12)
    assert exact.r2 == pytest.approx(1.0, abs=1e-12)
    assert exact.intercept == pytest.approx(math.log(4), abs=1e-12)


def test_loglog_needs_two_distinct_points():
    with pytest.raises(FitError):
        loglog_fit([10], [1])
    with pytest.raises(FitError):
        loglog_fit([10, 10], [1, 2])


@given(st.lists(st.floats(0.01, 100), min_size=3, max_size=12), st.integers(0, 10_000))
def test_loglog_invariants(ys, seed):
    N = np.sort(np.random.default_rng(seed).choice(np.arange(2, 10_000), size=len(ys), replace=False))
    fit = loglog_fit(N, ys)
    assert 0.0 <= fit.r2 <= 1.0
    assert fit.half_width >= 0
    ref = np.polyfit(np.log(N), np.log(ys), 1)
    assert fit.slope == pytest.approx(ref[0], abs=1e-8)


def test_slope_ci_matches_textbook():
    rng = np.random.default_rng(0)
    N = np.array([50, 100, 500, 1000, 2000, 5000, 8000])
    y = N ** -0.45 * np.exp(rng.normal(0, 0.05, N.size))
    fit = loglog_fit(N, y)
    from scipy import stats
    res = stats.linregress(np.log(N), np.log(y))
    assert fit.half_width == pytest.approx(stats.t.ppf(0.975, N.size - 2) * res.stderr, rel=1e-10)
    assert fit.r2 == pytest.approx(res.rvalue ** 2, rel=1e-10)
