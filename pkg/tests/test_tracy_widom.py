import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigenscan import InvalidArgumentError, TailResolutionError, TracyWidomTable, tw1_cdf, tw1_moments, tw1_upper_quantile
from eigenscan.tracy_widom import default_table
from oracles import fredholm_f1

# Published TW1 percentiles (upper 10%, 5%, 1% points).
PUBLISHED = {0.10: 0.4501, 0.05: 0.9793, 0.01: 2.0234}


def test_table_invariants():
    t = default_table()
    assert np.all(np.diff(t.grid_x) > 0)
    assert np.all(np.diff(t.grid_F) >= 0)
    assert t.grid_F[0] < 1e-6
    assert t.grid_F[-1] > 1 - 1e-6
    assert t.grid_x[0] <= -10 and t.grid_x[-1] >= 6
    assert np.max(np.diff(t.grid_x)) <= 0.02


@pytest.mark.parametrize("x", [-7.5, -4.0, -2.37, -1.27, -0.5, 0.0, 0.9793, 1.53, 3.0, 5.0])
def test_cdf_matches_fredholm_oracle(x):
    assert tw1_cdf(x) == pytest.approx(fredholm_f1(x), abs=1e-8)


def test_cdf_edges_and_clamp():
    lo, hi = default_table().support
    assert 0.4 < tw1_cdf(-1.27) < 0.6
    assert tw1_cdf(lo) <= 1e-6
    assert tw1_cdf(20.0) == 1.0
    assert tw1_cdf(-50.0) == 0.0


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_cdf_rejects_non_finite(bad):
    with pytest.raises(InvalidArgumentError):
        tw1_cdf(bad)


def test_cdf_dense_scan_nondecreasing():
    lo, hi = default_table().support
    x = np.linspace(lo, hi, 10_000)
    assert np.all(np.diff(tw1_cdf(x)) >= 0)


@pytest.mark.parametrize("alpha,expected", sorted(PUBLISHED.items()))
def test_quantile_matches_published_percentiles(alpha, expected):
    assert tw1_upper_quantile(alpha) == pytest.approx(expected, abs=6e-4)


@pytest.mark.parametrize("alpha", [0.5, 0.3, 0.1, 0.05, 0.01, 1e-3, 1e-4, 1 / 5000])
def test_quantile_round_trip(alpha):
    assert abs(tw1_cdf(tw1_upper_quantile(alpha)) - (1 - alpha)) <= 1e-6


def test_quantile_against_oracle_in_tail():
    t = tw1_upper_quantile(1 / 5000)
    assert fredholm_f1(t) == pytest.approx(1 - 1 / 5000, abs=1e-7)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_quantile_rejects_alpha_outside_unit_interval(alpha):
    with pytest.raises(InvalidArgumentError):
        tw1_upper_quantile(alpha)


def test_quantile_rejects_unresolvable_tail():
    with pytest.raises(TailResolutionError):
        tw1_upper_quantile(1e-9)


def test_moments():
    mean, var = tw1_moments()
    assert mean == pytest.approx(-1.21, abs=0.01)
    assert math.sqrt(var) == pytest.approx(1.27, abs=0.01)


def test_moments_against_density_integration():
    # independent route: differentiate the CDF and integrate x f(x), x^2 f(x)
    x = np.linspace(-10, 8, 36_001)
    f = np.gradient(tw1_cdf(x), x)
    m1 = np.trapezoid(x * f, x)
    m2 = np.trapezoid(x * x * f, x)
    mean, var = tw1_moments()
    assert m1 == pytest.approx(mean, abs=0.02)
    assert m2 - m1 * m1 == pytest.approx(var, abs=0.02)


def test_custom_table_validation():
    with pytest.raises(InvalidArgumentError):
        TracyWidomTable(np.array([0.0, 1.0, 1.0, 2.0]), np.array([0.1, 0.2, 0.3, 0.4]))
    with pytest.raises(InvalidArgumentError):
        TracyWidomTable(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.1, 0.3, 0.2, 0.4]))


def test_csv_export_round_trip():
    lines = default_table().to_csv().splitlines()
    assert lines[0] == "x,F1"
    x, f = (float(v) for v in lines[1].split(","))
    assert x == -10.0 and f == default_table().grid_F[0]
    assert len(lines) == default_table().grid_x.size + 1


@settings(max_examples=200, deadline=None)
@given(st.floats(-12, 10), st.floats(-12, 10))
def test_cdf_monotone_property(a, b):
    lo, hi = sorted((a, b))
    assert tw1_cdf(lo) <= tw1_cdf(hi)
