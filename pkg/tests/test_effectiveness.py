import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esirpolicy.effectiveness import (
    EffectRateRecord,
    PolicyEvent,
    PolicyKind,
    daily_effect_rates,
    effect_record,
    inverse_normal_transform,
    max_effect_rate,
    pearson_correlation,
    prediction_start,
    total_effect_rate,
    transform_cohort,
)
from esirpolicy.errors import DomainError, EmptyInputError, InsufficientDataError, UndefinedCorrelationError

import oracles


def test_mask_start_dates():
    assert prediction_start(PolicyEvent("AL", "mask", dt.date(2020, 7, 1))) == dt.date(2020, 7, 15)


def test_vaccine_start_dates():
    assert prediction_start(PolicyEvent("AL", "vaccine", dt.date(2020, 12, 1))) == dt.date(2020, 12, 29)


def test_custom_lag():
    event = PolicyEvent("AL", PolicyKind.CUSTOM, dt.date(2021, 1, 1), custom_lag=0)
    assert prediction_start(event) == dt.date(2021, 1, 1)
    with pytest.raises(ValueError):
        PolicyEvent("AL", "custom", dt.date(2021, 1, 1), custom_lag=-1)


def test_hand_example():
    daily = daily_effect_rates([0.02, 0.03], [0.01, 0.02])
    np.testing.assert_allclose(daily, [1.0, 0.5], rtol=0, atol=1e-12)
    assert abs(max_effect_rate(daily) - 1.0) <= 1e-12
    assert abs(total_effect_rate([0.02, 0.03], [0.01, 0.02]) - 2.0 / 3.0) <= 1e-12


def test_identity_gives_zero():
    x = np.linspace(0.01, 0.05, 31)
    rec = effect_record("AL", "mask", x, x)
    assert rec.daily_rates == (0.0,) * 31 and rec.max_rate == 0.0 and rec.total_rate == 0.0
    assert rec.transformed_max is None


def test_domain_errors():
    with pytest.raises(DomainError, match="day 1"):
        daily_effect_rates([0.1, 0.1], [0.1, 0.0])
    with pytest.raises(EmptyInputError):
        max_effect_rate([])
    with pytest.raises(EmptyInputError):
        total_effect_rate([], [])


positive = st.floats(1e-6, 1.0)


@settings(max_examples=100, deadline=None)
@given(pairs=st.lists(st.tuples(positive, positive), min_size=1, max_size=31), c=st.floats(1e-3, 1e3))
def test_scale_invariance_and_total_identity(pairs, c):
    p = np.array([a for a, _ in pairs])
    a = np.array([b for _, b in pairs])
    daily = daily_effect_rates(p, a)
    np.testing.assert_allclose(daily_effect_rates(c * p, c * a), daily, rtol=1e-12, atol=1e-12)
    assert max_effect_rate(daily_effect_rates(c * p, c * a)) == pytest.approx(max_effect_rate(daily), rel=1e-12, abs=1e-12)
    total = total_effect_rate(p, a)
    assert total_effect_rate(c * p, c * a) == pytest.approx(total, rel=1e-10, abs=1e-12)
    assert total == pytest.approx((a * daily).sum() / a.sum(), rel=1e-10, abs=1e-12)


def test_int_three_values_middle_zero():
    out = inverse_normal_transform([5.0, -1.0, 2.0])
    assert out[2] == 0.0 and out[1] < 0 < out[0]


@pytest.mark.parametrize("n", range(2, 31))
def test_int_matches_quantile_oracle(n):
    rng = np.random.default_rng(n)
    values = rng.normal(size=n)
    values[: n // 4] = values[0]  # include ties
    np.testing.assert_allclose(inverse_normal_transform(values), oracles.blom_int(list(values)), rtol=0, atol=1e-10)


def test_int_four_values_symmetric():
    out = np.sort(inverse_normal_transform([3.0, 1.0, 4.0, 1.5]))
    np.testing.assert_allclose(out, -out[::-1], atol=1e-15)
    assert out[3] == pytest.approx(oracles.normal_quantile(3.625 / 4.25), abs=1e-12)


def test_int_too_few():
    with pytest.raises(InsufficientDataError):
        inverse_normal_transform([1.0])


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40, unique=True), seed=st.integers(0, 2**32 - 1))
def test_int_properties(values, seed):
    x = np.array(values)
    out = inverse_normal_transform(x)
    order = np.argsort(x)
    assert np.all(np.diff(out[order]) > 0)
    perm = np.random.default_rng(seed).permutation(len(x))
    np.testing.assert_array_equal(inverse_normal_transform(x[perm]), out[perm])
    if len(x) % 2 == 1:
        assert abs(out.mean()) <= 1e-12
        assert out[order[len(x) // 2]] == 0.0


def _rec(region, kind, mx, tot):
    return EffectRateRecord(region, kind, (mx,), mx, tot)


def test_transform_cohort_within_kind():
    records = [_rec("A", "mask", 0.1, 0.0), _rec("B", "mask", 0.3, -0.2), _rec("C", "vaccine", 0.2, 0.1),
               _rec("D", "mask", 0.2, 0.4), _rec("E", "vaccine", 0.5, 0.6), _rec("F", "custom", 1.0, 1.0)]
    out = transform_cohort(records)
    masks = [r for r in out if r.kind == "mask"]
    np.testing.assert_allclose([r.transformed_max for r in masks], inverse_normal_transform([0.1, 0.3, 0.2]))
    np.testing.assert_allclose([r.transformed_total for r in masks], inverse_normal_transform([0.0, -0.2, 0.4]))
    vac = [r for r in out if r.kind == "vaccine"]
    np.testing.assert_allclose([r.transformed_max for r in vac], inverse_normal_transform([0.2, 0.5]))
    assert out[5].transformed_max is None


def test_pearson_examples():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    assert pearson_correlation(a, a) == 1.0
    assert pearson_correlation(a, -a) == -1.0
    assert pearson_correlation(a, [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(UndefinedCorrelationError):
        pearson_correlation(a, [2, 2, 2, 2])


@settings(max_examples=100, deadline=None)
@given(pairs=st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30),
       scale=st.floats(0.01, 100), shift=st.floats(-100, 100))
def test_pearson_affine_invariance(pairs, scale, shift):
    a = np.array([p for p, _ in pairs])
    b = np.array([q for _, q in pairs])
    if np.ptp(a) < 1e-3 or np.ptp(b) < 1e-3:
        return
    r = pearson_correlation(a, b)
    assert -1.0 <= r <= 1.0
    assert pearson_correlation(scale * a + shift, b) == pytest.approx(r, abs=1e-9)


def test_prediction_above_actual_gives_positive_rates():
    predicted = np.linspace(0.04, 0.01, 31)
    rec = effect_record("AL", "vaccine", predicted, predicted / 2)
    assert len(rec.daily_rates) == 31
    np.testing.assert_allclose(rec.daily_rates, 1.0, atol=1e-12)
    assert rec.total_rate == pytest.approx(1.0, abs=1e-12)
