import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esirpolicy.errors import InsufficientDataError, NoFeasibleSpanError, SingularityError
from esirpolicy.smoother import LoessConfig, hat_matrix, loess_fit, select_span, smooth_recovered
from esirpolicy.timeseries import RawRow, RawSeries

import oracles

STAIRCASE_11 = [0, 0, 0, 7, 7, 7, 7, 7, 7, 7, 15]


def test_constant_reproduced():
    x = np.array([0.0, 1.5, 2.0, 4.0, 7.0, 9.0])
    fitted = loess_fit(x, np.full(6, 5.0), LoessConfig(degree=1, span=0.8))
    np.testing.assert_allclose(fitted, 5.0, atol=1e-12)


@pytest.mark.parametrize("degree", [1, 2])
def test_polynomial_reproduced_at_full_span(degree):
    x = np.linspace(-3, 5, 17)
    y = 2.0 - 0.7 * x + (0.3 * x**2 if degree == 2 else 0.0)
    np.testing.assert_allclose(loess_fit(x, y, LoessConfig(degree=degree, span=1.0)), y, atol=1e-10)


def test_staircase_matches_brute_force():
    x = np.arange(11.0)
    y = np.array(STAIRCASE_11, dtype=float)
    ours = loess_fit(x, y, LoessConfig(degree=1, span=0.6))
    np.testing.assert_allclose(ours, oracles.loess(list(x), list(y), 0.6, 1), atol=1e-8)


def test_singular_neighbourhood():
    with pytest.raises(SingularityError):
        hat_matrix(np.arange(10.0), 0.2, degree=1)


def test_select_span_forced_choice():
    x = np.arange(12.0)
    y = np.sin(x)
    assert select_span(x, y, 1, span_grid=(0.1, 0.75)) == 0.75


def test_select_span_tie_goes_to_largest():
    x = np.arange(20.0)
    assert select_span(x, 3.0 * x + 1.0, 1) == 0.95


def test_select_span_staircase_matches_exhaustive():
    x = np.arange(35.0)
    y = np.repeat(np.arange(5) * 10.0, 7)
    grid = (0.3, 0.5, 0.7, 0.9)
    best, scores = oracles.aicc_grid(list(x), list(y), grid, 1)
    assert select_span(x, y, 1, grid) == best


def test_select_span_errors():
    with pytest.raises(NoFeasibleSpanError):
        select_span(np.arange(10.0), np.arange(10.0), 1, span_grid=(0.1, 0.2))
    with pytest.raises(InsufficientDataError):
        select_span([0.0, 1.0], [0.0, 1.0], 1)


def test_smooth_ramp_close_to_input():
    ramp = 1000.0 + 50.0 * np.arange(60)
    out = smooth_recovered(ramp, LoessConfig())
    assert np.all(np.abs(out - ramp) <= 0.01 * ramp)


def test_smooth_zero():
    assert np.all(smooth_recovered([0] * 30, LoessConfig()) == 0.0)


def test_smooth_staircase_reduces_jumps():
    raw = np.repeat(np.arange(1, 9) * 700.0, 7)
    out = smooth_recovered(raw, LoessConfig())
    assert np.diff(out).max() < np.diff(raw).max()


def test_smooth_interpolates_gaps_and_uses_dates():
    d0 = dt.date(2020, 6, 1)
    rows = tuple(RawRow(d0 + dt.timedelta(days=k), 10 * k, None if k in (3, 4) else 10 * k, 0) for k in range(12))
    out = smooth_recovered(RawSeries("AL", rows, 10**6), LoessConfig(span=0.5))
    np.testing.assert_allclose(out, 10.0 * np.arange(12), atol=1e-9)


def test_smooth_insufficient():
    with pytest.raises(InsufficientDataError):
        smooth_recovered([None, 5, None, None], LoessConfig())


@settings(max_examples=60, deadline=None)
@given(y=st.lists(st.floats(-100, 1000, allow_nan=False), min_size=8, max_size=40),
       a=st.floats(0.1, 50), b=st.floats(-1000, 1000), span=st.sampled_from([0.4, 0.6, 0.9]))
def test_affine_x_invariance(y, a, b, span):
    x = np.arange(len(y), dtype=float)
    cfg = LoessConfig(span=span)
    base = loess_fit(x, y, cfg)
    np.testing.assert_allclose(loess_fit(a * x + b, y, cfg), base, atol=1e-9 * max(1.0, np.abs(y).max()))


@settings(max_examples=60, deadline=None)
@given(y=st.lists(st.one_of(st.none(), st.integers(0, 10**6)), min_size=5, max_size=40))
def test_smooth_nonnegative_nondecreasing(y):
    if sum(v is not None for v in y) < 3:
        return
    out = smooth_recovered(y, LoessConfig())
    assert np.all(out >= 0) and np.all(np.diff(out) >= 0)


@settings(max_examples=40, deadline=None)
@given(y=st.lists(st.floats(-10, 10, allow_nan=False), min_size=5, max_size=25))
def test_selected_span_in_grid(y):
    grid = (0.3, 0.5, 0.7, 0.9)
    try:
        assert select_span(np.arange(len(y), dtype=float), y, 1, grid) in grid
    except NoFeasibleSpanError:
        pass
