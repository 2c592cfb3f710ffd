import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esirpolicy.sir import SirParams, Theta, rk4_step, simulate

import oracles


def test_disease_free_fixed_point():
    np.testing.assert_array_equal(rk4_step((1.0, 0.0, 0.0), SirParams(0.7, 0.2)), [1.0, 0.0, 0.0])


def test_pure_decay_closed_form():
    out = rk4_step((0.9, 0.1, 0.0), SirParams(0.0, 0.2), 1.0)
    assert out[0] == 0.9
    assert abs(out[1] - 0.1 * math.exp(-0.2)) < 1e-4
    assert out[2] == pytest.approx(1.0 - out[0] - out[1], abs=1e-15)


def test_matches_fine_euler():
    out = rk4_step((0.99, 0.01, 0.0), SirParams(0.35, 0.15))
    np.testing.assert_allclose(out, oracles.euler_sir((0.99, 0.01, 0.0), 0.35, 0.15, 1.0), atol=1e-5)


def test_local_step_halving_is_fifth_order():
    params = SirParams(0.6, 0.2)
    theta = np.array([0.8, 0.15, 0.05])
    diffs = []
    for dt in (1.0, 0.5, 0.25):
        full = rk4_step(theta, params, dt)
        half = rk4_step(rk4_step(theta, params, dt / 2), params, dt / 2)
        diffs.append(np.abs(full - half).max())
    ratios = np.array(diffs[:-1]) / np.array(diffs[1:])
    assert np.all(np.abs(ratios - 32) < 0.3 * 32)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        rk4_step((0.9, 0.1, 0.0), SirParams(0.3, 0.1), 0.0)
    with pytest.raises(ValueError):
        rk4_step((0.9, 0.1, 0.0), SirParams(-0.3, 0.1))


def test_simulate_empty_horizon():
    out = simulate(Theta(0.9, 0.1, 0.0), SirParams(0.3, 0.1), 0)
    np.testing.assert_array_equal(out, [[0.9, 0.1, 0.0]])


def test_simulate_epidemic_peaks_and_stops():
    out = simulate((0.999, 0.001, 0.0), SirParams(0.5, 0.1), 300)
    peak = int(np.argmax(out[:, 1]))
    assert 0 < peak < 300
    assert out[-1, 1] < out[peak, 1] / 100
    assert out[-1, 0] > 0
    ref = oracles.reference_sir((0.999, 0.001, 0.0), 0.5, 0.1, 300.0)
    np.testing.assert_allclose(out[-1], ref, atol=1e-5)


theta_st = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)).filter(lambda t: sum(t) > 1e-3)


@settings(max_examples=200, deadline=None)
@given(raw=theta_st, beta=st.floats(0, 3), gamma=st.floats(0, 2), days=st.integers(0, 60))
def test_trajectory_invariants(raw, beta, gamma, days):
    theta = np.array(raw) / sum(raw)
    out = simulate(theta, SirParams(beta, gamma), days)
    assert out.shape == (days + 1, 3)
    assert np.all(out >= 0) and np.all(out <= 1)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diff(out[:, 0]) <= 1e-15)
    assert np.all(np.diff(out[:, 2]) >= -1e-15)
