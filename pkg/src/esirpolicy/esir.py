"""Bayesian state-space SIR model: MCMC fit and posterior-predictive bands.

Generative model over a training window of ``T`` days::

    theta_1           ~ Dirichlet(kappa * y_1)
    theta_t | theta_t-1 ~ Dirichlet(kappa * f(theta_t-1; beta, gamma))
    Y_t^I | theta_t   ~ Beta(lambda_I * theta_t^I, lambda_I * (1 - theta_t^I))
    Y_t^R | theta_t   ~ Beta(lambda_R * theta_t^R, lambda_R * (1 - theta_t^R))

with ``f`` one RK4 day of the SIR ODE, ``y_1`` the first observed
compartments, ``beta = R0 * gamma``, lognormal priors on ``R0`` and
``gamma`` and gamma priors on ``kappa``, ``lambda_I`` and ``lambda_R``.

The sampler is Metropolis-within-Gibbs.  Parameters move by Gaussian random
walk on the log scale.  Latent states move one day at a time in additive
log-ratio coordinates ``(log(i/s), log(r/s))``; days of equal parity are
conditionally independent given the rest, so all odd days (then all even
days) are updated in one vectorised sweep.  Proposal scales adapt toward
30% acceptance during burn-in and are frozen afterwards.

Chain ``c`` of a run with seed ``s`` draws from
``numpy.random.default_rng(SeedSequence(s, spawn_key=(0, c)))``; posterior
prediction uses ``spawn_key=(1,)``.  Outputs are ordered by chain then
iteration, so chains may run in any order or in parallel.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import special, stats

from .errors import (
    ConfigError,
    CoverageError,
    DomainError,
    EmptyInputError,
    InitializationError,
)
from .sir import SirParams, _rk4, simulate
from .timeseries import CompartmentSeries, date_range, window

log = logging.getLogger(__name__)

NUDGE = 1e-10
PARAM_NAMES = ("beta", "gamma", "kappa", "lambda_i", "lambda_r")
ADAPT_BATCH = 25


@dataclass(frozen=True)
class EsirModelSpec:
    """Priors and sampler settings.

    Lognormal priors are ``(mean_log, sd_log)``; gamma priors ``(shape, rate)``.
    """

    prior_r0: tuple[float, float] = (math.log(3.28), 0.5)
    prior_gamma: tuple[float, float] = (math.log(0.12), 0.4)
    prior_kappa: tuple[float, float] = (2.0, 1e-4)
    prior_lambda_i: tuple[float, float] = (2.0, 1e-4)
    prior_lambda_r: tuple[float, float] = (2.0, 1e-4)
    chains: int = 4
    iterations: int = 20_000
    burn_in: int = 10_000
    thin: int = 10
    seed: int = 20200522
    credible_level: float = 0.95
    fit_removed: bool = True
    training_days: int = 30
    horizon: int = 31
    target_acceptance: float = 0.3
    proposal_scale: float = 1.0
    init: str = "observed"

    def __post_init__(self):
        if not (self.chains >= 1 and self.thin >= 1 and 0 <= self.burn_in < self.iterations):
            raise ConfigError("need chains >= 1, thin >= 1 and 0 <= burn_in < iterations")
        if not 0.0 < self.credible_level < 1.0:
            raise ConfigError("credible_level must lie in (0, 1)")
        if self.init not in ("observed", "prior"):
            raise ConfigError("init must be 'observed' or 'prior'")
        if self.training_days < 2 or self.horizon < 1:
            raise ConfigError("training_days must be >= 2 and horizon >= 1")
        for name in ("prior_r0", "prior_gamma", "prior_kappa", "prior_lambda_i", "prior_lambda_r"):
            a, b = getattr(self, name)
            if b <= 0 or (name not in ("prior_r0", "prior_gamma") and a <= 0):
                raise ConfigError(f"{name}: invalid hyperparameters {(a, b)}")

    @classmethod
    def from_mapping(cls, data: dict) -> "EsirModelSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key.startswith("prior_"):
                value = tuple(float(v) for v in value)
                if len(value) != 2:
                    raise ConfigError(f"{key} needs two hyperparameters")
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_mapping(self) -> dict:
        out = asdict(self)
        for key in out:
            if key.startswith("prior_"):
                out[key] = list(out[key])
        return out

    def initial_params(self) -> np.ndarray:
        """Prior medians, used as the chain starting point."""
        gamma = math.exp(self.prior_gamma[0])
        beta = math.exp(self.prior_r0[0]) * gamma
        med = [stats.gamma.median(a, scale=1.0 / b)
               for a, b in (self.prior_kappa, self.prior_lambda_i, self.prior_lambda_r)]
        return np.array([beta, gamma, *med])


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained MCMC draws, ordered by chain then iteration."""

    params: np.ndarray          # (D, 5) natural scale, columns PARAM_NAMES
    latent: np.ndarray          # (D, T, 3)
    chain: np.ndarray           # (D,)
    iteration: np.ndarray       # (D,)
    dates: tuple[dt.date, ...]  # training days
    seed: int
    acceptance: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __len__(self):
        return len(self.params)

    def __getattr__(self, name):
        if name in PARAM_NAMES:
            return self.params[:, PARAM_NAMES.index(name)]
        raise AttributeError(name)

    def effective_sample_size(self) -> dict[str, float]:
        """Split-chain ESS for each scalar parameter."""
        out = {}
        ids = np.unique(self.chain)
        for k, name in enumerate(PARAM_NAMES):
            per_chain = [self.params[self.chain == c, k] for c in ids]
            m = min(len(x) for x in per_chain)
            out[name] = split_ess(np.array([x[:m] for x in per_chain]))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["chain", "iter", *PARAM_NAMES])
            for c, it, row in zip(self.chain, self.iteration, self.params):
                writer.writerow([int(c), int(it), *(repr(float(v)) for v in row)])


@dataclass(frozen=True)
class PredictiveSummary:
    dates: tuple[dt.date, ...]
    median_i: np.ndarray
    lower_i: np.ndarray
    upper_i: np.ndarray
    draws_used: int
    credible_level: float


@dataclass(frozen=True)
class CoverageReport:
    inside: int
    total: int

    @property
    def fraction(self) -> float:
        return self.inside / self.total


# --------------------------------------------------------------------------
# densities

def _log_beta_pdf(y, a, b):
    return (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y) - special.betaln(a, b)


def _log_dirichlet_pdf(x, alpha):
    return (special.gammaln(alpha.sum(axis=-1)) - special.gammaln(alpha).sum(axis=-1)
            + ((alpha - 1.0) * np.log(x)).sum(axis=-1))


def _log_gamma_pdf(x, shape, rate):
    return (shape - 1.0) * math.log(x) - rate * x + shape * math.log(rate) - math.lgamma(shape)


def _log_normal_pdf(z, mu, sd):
    return -0.5 * ((z - mu) / sd) ** 2 - math.log(sd) - 0.5 * math.log(2.0 * math.pi)


def log_prior(params, spec: EsirModelSpec) -> float:
    """Joint prior density of ``(beta, gamma, kappa, lambda_i, lambda_r)``."""
    beta, gamma, kappa, lam_i, lam_r = (float(v) for v in params)
    if min(beta, gamma, kappa, lam_i, lam_r) <= 0:
        return -math.inf
    log_r0 = math.log(beta / gamma)
    log_gamma = math.log(gamma)
    # lognormal on R0 = beta/gamma, changed to beta with Jacobian 1/gamma
    out = _log_normal_pdf(log_r0, *spec.prior_r0) - log_r0 - log_gamma
    out += _log_normal_pdf(log_gamma, *spec.prior_gamma) - log_gamma
    out += _log_gamma_pdf(kappa, *spec.prior_kappa)
    out += _log_gamma_pdf(lam_i, *spec.prior_lambda_i)
    out += _log_gamma_pdf(lam_r, *spec.prior_lambda_r)
    return out


def observations(observed: CompartmentSeries) -> np.ndarray:
    """Observed ``(s, i, r)`` nudged into the open simplex."""
    y = observed.as_array()
    y = np.clip(y, NUDGE, 1.0 - NUDGE)
    return y / y.sum(axis=1, keepdims=True)


class _Terms:
    """Per-day log-density terms for the current latent chain and parameters."""

    def __init__(self, y, fit_removed):
        self.y = y
        self.fit_removed = fit_removed

    def transition(self, latent, beta, gamma, kappa):
        """``out[0]`` is the initial-state term, ``out[t]`` the density of day t given t-1."""
        mean = np.empty_like(latent)
        mean[0] = self.y[0]
        mean[1:] = _rk4(latent[:-1], beta, gamma, 1.0)
        mean = np.clip(mean, 1e-300, None)
        return _log_dirichlet_pdf(latent, kappa * mean)

    def observation(self, latent, lam_i, lam_r):
        th_i, th_r = latent[:, 1], latent[:, 2]
        out = _log_beta_pdf(self.y[:, 1], lam_i * th_i, lam_i * (1.0 - th_i))
        if self.fit_removed:
            out = out + _log_beta_pdf(self.y[:, 2], lam_r * th_r, lam_r * (1.0 - th_r))
        return out

    def obs_i(self, latent, lam_i):
        th = latent[:, 1]
        return _log_beta_pdf(self.y[:, 1], lam_i * th, lam_i * (1.0 - th))

    def obs_r(self, latent, lam_r):
        if not self.fit_removed:
            return np.zeros(len(latent))
        th = latent[:, 2]
        return _log_beta_pdf(self.y[:, 2], lam_r * th, lam_r * (1.0 - th))


def log_posterior(params, latent, observed: CompartmentSeries, spec: EsirModelSpec) -> float:
    """Unnormalised log posterior density on the natural scale.

    ``params`` is ``(beta, gamma, kappa, lambda_i, lambda_r)`` and ``latent`` a
    ``(T, 3)`` array, one state per observed day.  The density is with respect
    to Lebesgue measure on ``(theta^I, theta^R)`` for each latent day.

    Raises
    ------
    DomainError
        If any latent or observed proportion sits on the simplex boundary.
    """
    latent = np.asarray(latent, dtype=float)
    y = observed.as_array()
    if latent.shape != y.shape:
        raise ValueError(f"latent shape {latent.shape} does not match {len(y)} observations")
    if np.any(latent <= 0) or np.any(latent >= 1):
        raise DomainError("latent states must lie strictly inside the simplex")
    if np.any(y[:, 1:] <= 0) or np.any(y[:, 1:] >= 1):
        raise DomainError("observed proportions must be nudged off 0 and 1")
    beta, gamma, kappa, lam_i, lam_r = (float(v) for v in params)
    terms = _Terms(y, spec.fit_removed)
    out = (log_prior(params, spec)
           + terms.transition(latent, beta, gamma, kappa).sum()
           + terms.observation(latent, lam_i, lam_r).sum())
    if not math.isfinite(out):
        raise DomainError("log posterior is not finite")
    return out


# --------------------------------------------------------------------------
# sampler

def _to_alr(latent):
    return np.log(latent[:, 1:]) - np.log(latent[:, :1])


def _from_alr(z):
    expanded = np.concatenate([np.zeros((len(z), 1)), z], axis=1)
    expanded -= expanded.max(axis=1, keepdims=True)
    w = np.exp(expanded)
    return w / w.sum(axis=1, keepdims=True)


def _log_jacobian(latent):
    # d(theta_I, theta_R) / d(alr) has determinant s * i * r
    return np.log(latent).sum(axis=1)


def chain_rng(seed: int, chain_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, chain_id)))


def predict_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


@dataclass
class _ChainResult:
    chain_id: int
    params: np.ndarray
    latent: np.ndarray
    iteration: np.ndarray
    acceptance: dict


def moment_estimates(y) -> tuple[float, float]:
    """Crude ``(beta, gamma)`` from day-to-day changes of observed proportions."""
    s, i = y[:-1, 0], y[:-1, 1]
    d_i, d_r = np.diff(y[:, 1]), np.diff(y[:, 2])
    gamma = float(np.clip(d_r.sum() / i.sum(), 1e-3, 5.0))
    beta = float(np.clip((d_i + gamma * i).sum() / (s * i).sum(), 1e-3, 5.0))
    return beta, gamma


def _initial_state(y, spec):
    """Starting point of every chain.

    ``init="observed"`` starts the latent chain at the observations and
    ``(beta, gamma)`` at moment estimates.  ``init="prior"`` simulates the
    deterministic SIR from the first observation under prior medians.
    """
    params = spec.initial_params()
    if spec.init == "observed":
        params[:2] = moment_estimates(y)
        latent = y.copy()
    else:
        latent = simulate(y[0], SirParams(params[0], params[1]), len(y) - 1)
    latent = np.clip(latent, NUDGE, None)
    # round-trip through the sampler's coordinates so an unmoved chain reproduces it bit for bit
    return params, _from_alr(_to_alr(latent / latent.sum(axis=1, keepdims=True)))


def run_chain(observed: CompartmentSeries, spec: EsirModelSpec, chain_id: int) -> _ChainResult:
    """Run one chain; see the module docstring for the RNG rule."""
    rng = chain_rng(spec.seed, chain_id)
    y = observations(observed)
    T = len(y)
    terms = _Terms(y, spec.fit_removed)
    params, latent = _initial_state(y, spec)
    phi = np.log(params)

    def _eval(latent, phi):
        beta, gamma, kappa, lam_i, lam_r = np.exp(phi)
        return (terms.transition(latent, beta, gamma, kappa),
                terms.obs_i(latent, lam_i), terms.obs_r(latent, lam_r))

    trans, obs_i, obs_r = _eval(latent, phi)
    prior = log_prior(np.exp(phi), spec)
    if not (np.isfinite(trans).all() and np.isfinite(obs_i).all()
            and np.isfinite(obs_r).all() and math.isfinite(prior)):
        raise InitializationError(f"{observed.region}: log posterior not finite at initial state")
    z = _to_alr(latent)

    par_scale = np.full(5, 0.05 * spec.proposal_scale)
    lat_scale = np.full(T, 0.05 * spec.proposal_scale)
    par_acc = np.zeros(5)
    lat_acc = np.zeros(T)
    par_acc_kept = np.zeros(5)
    lat_acc_kept = np.zeros(T)
    n_kept_iter = 0
    n_batch = 0

    keep = list(range(spec.burn_in, spec.iterations, spec.thin))
    out_params = np.empty((len(keep), 5))
    out_latent = np.empty((len(keep), T, 3))
    k_out = 0
    parity = [np.arange(p, T, 2) for p in (0, 1)]
    target = spec.target_acceptance

    for it in range(spec.iterations):
        # parameter moves, one coordinate at a time on the log scale
        for k in range(5):
            prop = phi.copy()
            prop[k] += par_scale[k] * rng.standard_normal()
            new_prior = log_prior(np.exp(prop), spec)
            beta, gamma, kappa, lam_i, lam_r = np.exp(prop)
            if k <= 2:
                new = terms.transition(latent, beta, gamma, kappa)
                delta = new.sum() - trans.sum()
            elif k == 3:
                new = terms.obs_i(latent, lam_i)
                delta = new.sum() - obs_i.sum()
            else:
                new = terms.obs_r(latent, lam_r)
                delta = new.sum() - obs_r.sum()
            delta += new_prior - prior + prop[k] - phi[k]
            if math.log(rng.random()) < delta:
                phi = prop
                prior = new_prior
                if k <= 2:
                    trans = new
                elif k == 3:
                    obs_i = new
                else:
                    obs_r = new
                par_acc[k] += 1
                if it >= spec.burn_in:
                    par_acc_kept[k] += 1

        # single-day latent moves, even days then odd days
        beta, gamma, kappa, lam_i, lam_r = np.exp(phi)
        for sites in parity:
            z_prop = z.copy()
            z_prop[sites] += lat_scale[sites, None] * rng.standard_normal((len(sites), 2))
            lat_prop = _from_alr(z_prop)
            t_new = terms.transition(lat_prop, beta, gamma, kappa)
            oi_new = terms.obs_i(lat_prop, lam_i)
            or_new = terms.obs_r(lat_prop, lam_r)
            local_new = oi_new + or_new + t_new + _log_jacobian(lat_prop)
            local_old = obs_i + obs_r + trans + _log_jacobian(latent)
            # the transition out of day t belongs to day t's full conditional
            local_new[:-1] += t_new[1:]
            local_old[:-1] += trans[1:]
            delta = np.where(np.isfinite(local_new), local_new - local_old, -np.inf)[sites]
            accept = np.log(rng.random(len(sites))) < delta
            acc_sites = sites[accept]
            if len(acc_sites):
                z[acc_sites] = z_prop[acc_sites]
                latent = _from_alr(z)
                trans, obs_i, obs_r = _eval(latent, phi)
            lat_acc[sites] += accept
            if it >= spec.burn_in:
                lat_acc_kept[sites] += accept

        if it >= spec.burn_in:
            n_kept_iter += 1
        elif (it + 1) % ADAPT_BATCH == 0:
            n_batch += 1
            step = min(2.0, 10.0 / math.sqrt(n_batch))
            par_scale *= np.exp(step * (par_acc / ADAPT_BATCH - target))
            lat_scale *= np.exp(step * (lat_acc / ADAPT_BATCH - target))
            par_acc[:] = 0
            lat_acc[:] = 0

        if k_out < len(keep) and it == keep[k_out]:
            out_params[k_out] = np.exp(phi)
            out_latent[k_out] = latent
            k_out += 1

    denom = max(n_kept_iter, 1)
    acceptance = {name: float(par_acc_kept[k] / denom) for k, name in enumerate(PARAM_NAMES)}
    acceptance["latent"] = float(lat_acc_kept.mean() / denom)
    return _ChainResult(chain_id, out_params, out_latent, np.asarray(keep, dtype=int), acceptance)


def merge_chains(results, dates, seed) -> PosteriorDraws:
    """Concatenate chain results in ``chain_id`` order."""
    results = sorted(results, key=lambda r: r.chain_id)
    warnings = []
    acceptance = {}
    for r in results:
        acceptance[r.chain_id] = r.acceptance
        for name, rate in r.acceptance.items():
            if not 0.05 <= rate <= 0.95:
                warnings.append(f"chain {r.chain_id}: {name} acceptance {rate:.3f} outside [0.05, 0.95]")
    for w in warnings:
        log.warning(w)
    params = np.concatenate([r.params for r in results])
    latent = np.concatenate([r.latent for r in results])
    chain = np.concatenate([np.full(len(r.params), r.chain_id) for r in results])
    iteration = np.concatenate([r.iteration for r in results])
    for arr in (params, latent, chain, iteration):
        arr.setflags(write=False)
    return PosteriorDraws(params, latent, chain, iteration, tuple(dates), seed, acceptance, tuple(warnings))


def _check_contiguous(series: CompartmentSeries):
    dates = series.dates
    if len(dates) < 2:
        raise CoverageError(f"{series.region}: need at least two observed days")
    gaps = [a + dt.timedelta(days=1) for a, b in zip(dates, dates[1:]) if (b - a).days != 1]
    if gaps:
        raise CoverageError(f"{series.region}: observed window has gaps", gaps)


def fit(observed: CompartmentSeries, spec: EsirModelSpec, workers: int = 1) -> PosteriorDraws:
    """Sample the posterior given a gap-free training window.

    Chains run in a process pool when ``workers > 1``; the result does not
    depend on ``workers``.
    """
    _check_contiguous(observed)
    ids = list(range(spec.chains))
    if workers > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chain, [observed] * len(ids), [spec] * len(ids), ids))
    else:
        results = [run_chain(observed, spec, c) for c in ids]
    return merge_chains(results, observed.dates, spec.seed)


def simulate_paths(draws: PosteriorDraws, horizon: int, rng=None, stochastic: bool = True) -> np.ndarray:
    """Roll every draw's last latent state forward; returns ``(D, horizon, 3)``.

    ``stochastic=False`` replaces each Dirichlet step by its mean.
    """
    if len(draws) == 0:
        raise EmptyInputError("no posterior draws")
    beta, gamma, kappa = draws.beta, draws.gamma, draws.kappa
    state = draws.latent[:, -1, :].copy()
    out = np.empty((len(draws), horizon, 3))
    for h in range(horizon):
        mean = _rk4(state, beta, gamma, 1.0)
        if stochastic:
            g = rng.standard_gamma(np.clip(kappa[:, None] * mean, 1e-300, None))
            total = g.sum(axis=1, keepdims=True)
            state = np.where(total > 0, g / np.where(total > 0, total, 1.0), mean)
        else:
            state = mean
        out[:, h] = state
    return out


def predict(draws: PosteriorDraws, horizon: int, spec: EsirModelSpec,
            stochastic: bool = True) -> PredictiveSummary:
    """Posterior-predictive median and equal-tailed band of the infected proportion."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if len(draws) == 0:
        raise EmptyInputError("no posterior draws")
    paths = simulate_paths(draws, horizon, predict_rng(spec.seed), stochastic)[:, :, 1]
    tail = (1.0 - spec.credible_level) / 2.0
    lower, median, upper = np.quantile(paths, [tail, 0.5, 1.0 - tail], axis=0)
    start = draws.dates[-1] + dt.timedelta(days=1)
    return PredictiveSummary(tuple(date_range(start, horizon)), median, lower, upper,
                             len(draws), spec.credible_level)


def coverage(summary: PredictiveSummary, actual_i) -> CoverageReport:
    actual_i = np.asarray(actual_i, dtype=float)
    inside = (actual_i >= summary.lower_i) & (actual_i <= summary.upper_i)
    return CoverageReport(int(inside.sum()), len(actual_i))


def validate_no_policy(series: CompartmentSeries, anchor: dt.date, spec: EsirModelSpec,
                       workers: int = 1) -> tuple[PredictiveSummary, CoverageReport]:
    """Fit the ``training_days`` before ``anchor`` and score the next ``horizon`` days.

    The first predicted day is ``anchor`` itself.
    """
    train = window(series, anchor - dt.timedelta(days=spec.training_days), spec.training_days)
    actual = window(series, anchor, spec.horizon)
    summary = predict(fit(train, spec, workers), spec.horizon, spec)
    return summary, coverage(summary, actual.as_array()[:, 1])


def split_ess(x) -> float:
    """Effective sample size from split chains (Geyer initial monotone sequence).

    ``x`` has shape ``(chains, draws)``.
    """
    x = np.asarray(x, dtype=float)
    half = x.shape[1] // 2
    if half < 2:
        return float("nan")
    x = np.concatenate([x[:, :half], x[:, half:2 * half]])
    m, n = x.shape
    centered = x - x.mean(axis=1, keepdims=True)
    size = 2 ** int(math.ceil(math.log2(2 * n)))
    spectrum = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size, axis=1)[:, :n] / n
    within = acov[:, 0].mean() * n / (n - 1)
    var_plus = within * (n - 1) / n + x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float("nan")
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    total = 0.0
    prev = math.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
    tau = -1.0 + 2.0 * total
    return float(m * n / max(tau, 1e-12))
