import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from esirpolicy import esir, synthetic
from esirpolicy.errors import ConfigError, CoverageError, DomainError, EmptyInputError
from esirpolicy.esir import EsirModelSpec
from esirpolicy.sir import SirParams, rk4_step, simulate
from esirpolicy.timeseries import CompartmentSeries

import oracles

SMALL = EsirModelSpec(chains=2, iterations=300, burn_in=150, thin=3, seed=11)


@pytest.fixture(scope="module")
def syn():
    return synthetic.generate(40, 0.35, 0.15, 1e4, 1e4, 1e4, seed=5)


@pytest.fixture(scope="module")
def draws(syn):
    return esir.fit(syn.series(stop=15), SMALL)


def _oracle_log_posterior(params, latent, y, spec):
    beta, gamma, kappa, li, lr = params
    out = stats.lognorm.logpdf(beta / gamma, spec.prior_r0[1], scale=math.exp(spec.prior_r0[0])) - math.log(gamma)
    out += stats.lognorm.logpdf(gamma, spec.prior_gamma[1], scale=math.exp(spec.prior_gamma[0]))
    for value, (shape, rate) in ((kappa, spec.prior_kappa), (li, spec.prior_lambda_i), (lr, spec.prior_lambda_r)):
        out += stats.gamma.logpdf(value, shape, scale=1.0 / rate)
    for t in range(len(latent)):
        mean = y[0] if t == 0 else rk4_step(latent[t - 1], SirParams(beta, gamma))
        out += oracles.log_dirichlet_pdf(latent[t], kappa * np.asarray(mean))
        out += oracles.log_beta_pdf(y[t, 1], li * latent[t, 1], li * (1 - latent[t, 1]))
        out += oracles.log_beta_pdf(y[t, 2], lr * latent[t, 2], lr * (1 - latent[t, 2]))
    return out


def test_log_posterior_matches_independent_densities(syn):
    obs = syn.series(stop=8)
    y = obs.as_array()
    params = (0.33, 0.14, 8000.0, 12000.0, 9000.0)
    ours = esir.log_posterior(params, syn.latent[:8], obs, EsirModelSpec())
    assert ours == pytest.approx(_oracle_log_posterior(params, syn.latent[:8], y, EsirModelSpec()), rel=1e-11)


def test_log_precision_shift_consistent_with_beta_oracle(syn):
    obs = syn.series(stop=8)
    y = obs.as_array()
    spec = EsirModelSpec(prior_lambda_i=(1.0, 1e-12), prior_lambda_r=(1.0, 1e-12))
    base = (0.33, 0.14, 8000.0, 12000.0, 9000.0)
    shifted = (0.33, 0.14, 8000.0, 12000.0 * math.e**0.3, 9000.0 * math.e**0.3)
    diff = esir.log_posterior(shifted, syn.latent[:8], obs, spec) - esir.log_posterior(base, syn.latent[:8], obs, spec)
    expected = _oracle_log_posterior(shifted, syn.latent[:8], y, spec) - _oracle_log_posterior(base, syn.latent[:8], y, spec)
    assert diff == pytest.approx(expected, rel=1e-9, abs=1e-8)


def test_fit_removed_switch(syn):
    obs = syn.series(stop=8)
    params = (0.33, 0.14, 8000.0, 12000.0, 9000.0)
    on = esir.log_posterior(params, syn.latent[:8], obs, EsirModelSpec())
    off = esir.log_posterior(params, syn.latent[:8], obs, EsirModelSpec(fit_removed=False))
    y = obs.as_array()
    removed = sum(oracles.log_beta_pdf(y[t, 2], 9000 * syn.latent[t, 2], 9000 * (1 - syn.latent[t, 2])) for t in range(8))
    assert on - off == pytest.approx(removed, rel=1e-10)


def test_transition_term_peaks_at_deterministic_path():
    theta0 = np.array([0.97, 0.02, 0.01])
    beta, gamma, kappa = 0.3, 0.1, 1e4
    path = simulate(theta0, SirParams(beta, gamma), 9)
    terms = esir._Terms(path, True)
    best = terms.transition(path, beta, gamma, kappa).sum()
    for t in range(10):
        for delta in (-0.2, -0.1, -0.05, 0.05, 0.1, 0.2):
            bent = path.copy()
            bent[t, 1] *= 1 + delta
            bent[t, 0] = 1 - bent[t, 1] - bent[t, 2]
            assert terms.transition(bent, beta, gamma, kappa).sum() < best


def test_observation_term_peaks_at_latent():
    latent = simulate((0.97, 0.02, 0.01), SirParams(0.3, 0.1), 9)
    lam = 1e4
    base = esir._Terms(latent, True).obs_i(latent, lam)
    for delta in (-0.1, -0.02, 0.02, 0.1):
        y = latent.copy()
        y[:, 1] *= 1 + delta
        assert np.all(esir._Terms(y, True).obs_i(latent, lam) < base)


def test_log_posterior_domain_error(syn):
    obs = syn.series(stop=4)
    bad = syn.latent[:4].copy()
    bad[2] = (1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        esir.log_posterior((0.3, 0.1, 1e3, 1e3, 1e3), bad, obs, EsirModelSpec())


def test_spec_validation():
    with pytest.raises(ConfigError):
        EsirModelSpec(burn_in=20000, iterations=20000)
    with pytest.raises(ConfigError):
        EsirModelSpec(credible_level=1.0)
    with pytest.raises(ConfigError):
        EsirModelSpec.from_mapping({"chain": 3})
    spec = EsirModelSpec.from_mapping({"chains": 3, "prior_kappa": [2, 1e-4]})
    assert spec.chains == 3 and EsirModelSpec.from_mapping(spec.to_mapping()) == spec


def test_degenerate_chain_stays_at_initial_state(syn):
    spec = EsirModelSpec(chains=1, iterations=40, burn_in=10, thin=5, proposal_scale=0.0)
    obs = syn.series(stop=10)
    d = esir.fit(obs, spec)
    params, latent = esir._initial_state(esir.observations(obs), spec)
    np.testing.assert_array_equal(d.params, np.broadcast_to(np.exp(np.log(params)), d.params.shape))
    np.testing.assert_array_equal(d.latent, np.broadcast_to(latent, d.latent.shape))
    assert d.warnings


def test_fit_is_deterministic(syn, draws):
    again = esir.fit(syn.series(stop=15), SMALL)
    np.testing.assert_array_equal(again.params, draws.params)
    np.testing.assert_array_equal(again.latent, draws.latent)
    other = esir.fit(syn.series(stop=15), EsirModelSpec(**{**SMALL.to_mapping(), "seed": 12}))
    assert not np.array_equal(other.params, draws.params)


def test_chain_merge_equivariance(syn, draws):
    obs = syn.series(stop=15)
    parts = [esir.run_chain(obs, SMALL, c) for c in (1, 0)]
    merged = esir.merge_chains(parts, obs.dates, SMALL.seed)
    np.testing.assert_array_equal(merged.params, draws.params)
    np.testing.assert_array_equal(merged.chain, draws.chain)
    pooled = esir.fit(obs, SMALL, workers=2)
    np.testing.assert_array_equal(pooled.latent, draws.latent)


def test_draw_invariants(draws):
    assert len(draws) == SMALL.chains * len(range(SMALL.burn_in, SMALL.iterations, SMALL.thin))
    assert np.all(draws.params > 0)
    assert np.all(draws.latent >= 0)
    np.testing.assert_allclose(draws.latent.sum(axis=2), 1.0, atol=1e-10)
    assert draws.params.flags.writeable is False


def test_draws_csv(tmp_path, draws):
    path = tmp_path / "draws.csv"
    draws.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "chain,iter,beta,gamma,kappa,lambda_i,lambda_r"
    assert len(lines) == len(draws) + 1
    first = lines[1].split(",")
    assert int(first[0]) == draws.chain[0] and int(first[1]) == draws.iteration[0]
    assert [float(v) for v in first[2:]] == list(draws.params[0])


def test_predict_collapsed_randomness(syn):
    spec = EsirModelSpec(chains=1, iterations=20, burn_in=10, thin=1, proposal_scale=0.0)
    d = esir.fit(syn.series(stop=10), spec)
    summary = esir.predict(d, 1, spec, stochastic=False)
    beta, gamma = d.params[0, :2]
    expected = rk4_step(d.latent[0, -1], SirParams(beta, gamma))[1]
    assert summary.median_i[0] == pytest.approx(expected, abs=1e-15)
    assert summary.dates == (syn.dates[10],)


def test_predict_bands_nested(draws):
    wide = esir.predict(draws, 31, SMALL)
    narrow = esir.predict(draws, 31, EsirModelSpec(**{**SMALL.to_mapping(), "credible_level": 0.5}))
    assert len(wide.dates) == 31
    assert np.all(wide.lower_i <= narrow.lower_i) and np.all(narrow.upper_i <= wide.upper_i)
    assert np.all(wide.lower_i <= wide.median_i) and np.all(wide.median_i <= wide.upper_i)
    assert np.all((wide.lower_i >= 0) & (wide.upper_i <= 1))
    paths = esir.simulate_paths(draws, 31, esir.predict_rng(SMALL.seed))[:, :, 1]
    np.testing.assert_array_equal(np.median(paths, axis=0), wide.median_i)
    assert np.all((paths.min(axis=0) <= wide.median_i) & (wide.median_i <= paths.max(axis=0)))


def test_predict_empty():
    empty = esir.PosteriorDraws(np.empty((0, 5)), np.empty((0, 3, 3)), np.empty(0, int), np.empty(0, int),
                                (), 1, {}, ())
    with pytest.raises(EmptyInputError):
        esir.predict(empty, 5, SMALL)


def test_fit_rejects_gappy_window(syn):
    obs = syn.series(stop=12)
    gappy = CompartmentSeries(obs.region, obs.rows[:5] + obs.rows[6:])
    with pytest.raises(CoverageError):
        esir.fit(gappy, SMALL)


def test_validate_window_dates(monkeypatch):
    start = dt.date(2020, 5, 22)
    syn = synthetic.generate(70, 0.3, 0.12, 1e4, 1e4, 1e4, seed=2, start=start)
    series = syn.series("AL")
    seen = {}
    real_fit = esir.fit

    def spy(train, spec, workers=1):
        seen["dates"] = train.dates
        return real_fit(train, spec, workers)

    monkeypatch.setattr(esir, "fit", spy)
    summary, report = esir.validate_no_policy(series, dt.date(2020, 6, 21), SMALL)
    assert seen["dates"][0] == dt.date(2020, 5, 22) and len(seen["dates"]) == 30
    assert summary.dates[0] == dt.date(2020, 6, 21) and summary.dates[-1] == dt.date(2020, 7, 21)
    assert report.total == 31


def test_validate_beyond_series_end(syn):
    with pytest.raises(CoverageError):
        esir.validate_no_policy(syn.series(), syn.dates[30], SMALL)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.01, 0.3), b=st.floats(0.01, 0.3), kappa=st.floats(10, 1e5))
def test_dirichlet_density_matches_oracle(a, b, kappa):
    x = np.array([1 - a - b, a, b]) if a + b < 0.95 else np.array([0.05, a / (a + b) * 0.95, b / (a + b) * 0.95])
    alpha = kappa * np.array([0.5, 0.3, 0.2])
    assert esir._log_dirichlet_pdf(x, alpha) == pytest.approx(oracles.log_dirichlet_pdf(x, alpha), rel=1e-9, abs=1e-8)


def test_split_ess_white_noise():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 1000))
    assert 3000 < esir.split_ess(x) < 5500
    walk = np.cumsum(rng.standard_normal((4, 1000)), axis=1)
    assert esir.split_ess(walk) < 200
