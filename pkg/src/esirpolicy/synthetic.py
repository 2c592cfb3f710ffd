"""Synthetic epidemics drawn from the state-space SIR generative model."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .sir import _rk4
from .timeseries import CompartmentSeries, date_range


@dataclass(frozen=True)
class SyntheticEpidemic:
    latent: np.ndarray     # (days, 3) true states
    observed: np.ndarray   # (days, 3) noisy proportions
    dates: tuple[dt.date, ...]

    def series(self, region: str = "SYN", start: int = 0, stop=None) -> CompartmentSeries:
        sl = slice(start, stop)
        return CompartmentSeries.from_array(region, self.dates[sl], self.observed[sl])


def generate(days: int, beta: float, gamma: float, kappa: float, lambda_i: float,
             lambda_r: float, theta0=(0.99, 0.009, 0.001), seed: int = 0,
             start: dt.date = dt.date(2020, 5, 22)) -> SyntheticEpidemic:
    """Draw ``days`` latent states and Beta observations.

    ``beta`` may also be an array of length ``days`` (per-day transmission
    rate applied to the step into that day).
    """
    rng = np.random.default_rng(seed)
    betas = np.broadcast_to(np.asarray(beta, dtype=float), (days,))
    latent = np.empty((days, 3))
    state = np.asarray(theta0, dtype=float)
    for t in range(days):
        if t > 0:
            mean = _rk4(state, betas[t], gamma, 1.0)
            g = rng.standard_gamma(kappa * mean)
            state = g / g.sum()
        latent[t] = state
    obs_i = rng.beta(lambda_i * latent[:, 1], lambda_i * (1.0 - latent[:, 1]))
    obs_r = rng.beta(lambda_r * latent[:, 2], lambda_r * (1.0 - latent[:, 2]))
    observed = np.column_stack([1.0 - obs_i - obs_r, obs_i, obs_r])
    return SyntheticEpidemic(latent, observed, tuple(date_range(start, days)))


# --------------------------------------------------------------------------
# bundled fixture cohort

FIXTURE_START = dt.date(2020, 4, 1)
FIXTURE_END = dt.date(2021, 2, 28)
FIXTURE_REGIONS = ("AL", "AR", "AZ", "CO", "FL", "GA", "MI", "NM", "NV", "OK", "SC", "TX", "VT", "WV", "MD")
NO_MASK = ("OK",)
NO_RECOVERY = ("MD",)
NO_ANCHOR = ("WV",)
VACCINE_DATE = dt.date(2020, 12, 1)
ANCHOR = dt.date(2020, 5, 20)
GAMMA = 0.1
DEATH_FRACTION = 0.015

# fixture run settings: short chains so the whole pipeline runs in about a minute
FIXTURE_MODEL = {"chains": 2, "iterations": 1000, "burn_in": 500, "thin": 5, "seed": 20200522}


def _factor_row(rng):
    return {
        "population_density": float(np.round(rng.uniform(10, 500), 2)),
        "hospital_beds_per_1000": float(np.round(rng.uniform(1.8, 3.8), 2)),
        "percent_over_65": float(np.round(rng.uniform(11, 21), 2)),
        "public_health_funding_per_person": float(np.round(rng.uniform(10, 80), 2)),
        "percent_immigration": float(np.round(rng.uniform(2, 25), 2)),
        "gdp_per_capita": float(np.round(rng.uniform(40_000, 75_000), 0)),
        "education_level": float(np.round(rng.uniform(25, 45), 2)),
        "politics_r": float(rng.integers(0, 2)),
        "population": float(rng.integers(600_000, 30_000_000)),
    }


def _beta_schedule(days, dates, mask_date, base, mask_cut, vaccine_cut):
    beta = np.full(days, base)
    for t, d in enumerate(dates):
        if mask_date is not None and d >= mask_date + dt.timedelta(days=10):
            beta[t] = base * (1.0 - mask_cut)
        if d >= dt.date(2020, 10, 1):
            # autumn rebound
            beta[t] = base * 1.02
        if d >= VACCINE_DATE + dt.timedelta(days=14):
            ramp = min(1.0, (d - VACCINE_DATE).days / 60.0)
            beta[t] = base * 1.02 * (1.0 - vaccine_cut * ramp)
    return beta


def fixture_cohort(seed: int = 7):
    """Build the synthetic cohort; returns ``(raw_series, population, policies, factors)``.

    Counts follow a stochastic SIR with a transmission rate that drops after
    each region's mask date and after vaccination starts.  Recoveries are
    reported weekly (a staircase), a few cells are blank, one region has no
    recovery data at all, one has no mask policy and one no validation anchor.
    """
    from .timeseries import RawRow, RawSeries

    rng = np.random.default_rng(seed)
    dates = date_range(FIXTURE_START, (FIXTURE_END - FIXTURE_START).days + 1)
    days = len(dates)
    raws, population, policies, factors = [], {}, [], {}
    for region in FIXTURE_REGIONS:
        f = _factor_row(rng)
        factors[region] = f
        n = int(f["population"])
        population[region] = n
        mask_date = None if region in NO_MASK else dt.date(2020, 7, 1) + dt.timedelta(days=int(rng.integers(0, 31)))
        mask_cut = 0.08 + 0.06 * (f["hospital_beds_per_1000"] - 1.8) + rng.normal(0, 0.02)
        vaccine_cut = 0.15 + 0.004 * f["public_health_funding_per_person"] + rng.normal(0, 0.02)
        base = rng.uniform(0.112, 0.125)
        beta = _beta_schedule(days, dates, mask_date, base, mask_cut, vaccine_cut)

        s, i, r = 1.0 - 2e-3, 1e-3, 1e-3
        cum_pos, cum_rem = [], []
        for t in range(days):
            if t > 0:
                new_inf = beta[t] * s * i * np.exp(rng.normal(0.0, 0.05))
                new_rem = GAMMA * i
                s, i, r = s - new_inf, i + new_inf - new_rem, r + new_rem
            cum_pos.append(round(n * (i + r)))
            cum_rem.append(n * r)
        cum_pos = np.maximum.accumulate(cum_pos)
        deaths = np.maximum.accumulate(np.round(DEATH_FRACTION * np.asarray(cum_rem))).astype(int)
        recovered_true = np.round(np.asarray(cum_rem)).astype(int) - deaths
        rows = []
        last_report = None
        for t, d in enumerate(dates):
            if t % 7 == 0:
                last_report = int(recovered_true[t])
            rec = last_report
            if region in NO_RECOVERY or (t % 53 == 20):
                rec = None
            rows.append(RawRow(d, int(cum_pos[t]), rec, int(deaths[t])))
        raws.append(RawSeries(region, tuple(rows), n))
        if mask_date is not None:
            policies.append((region, "mask", mask_date.isoformat(), "" if region in NO_ANCHOR else ANCHOR.isoformat()))
        policies.append((region, "vaccine", VACCINE_DATE.isoformat(),
                         "" if region in NO_ANCHOR or mask_date is not None else ANCHOR.isoformat()))
    return raws, population, policies, factors


def write_fixture(directory, seed: int = 7) -> None:
    """Write the fixture cohort CSVs and a run config into ``directory``."""
    import csv
    import json
    from pathlib import Path

    from .regression import STANDARD_FACTORS
    from .timeseries import write_csv, write_population_table

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raws, population, policies, factors = fixture_cohort(seed)
    write_csv(directory / "covid.csv", raws)
    write_population_table(directory / "population.csv", population)
    with open(directory / "policies.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "kind", "issue_date", "validation_anchor"])
        w.writerows(policies)
    with open(directory / "factors.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", *STANDARD_FACTORS])
        for region, row in factors.items():
            w.writerow([region, *(f"{row[k]:.10g}" for k in STANDARD_FACTORS)])
    config = {
        "data": {"covid": "covid.csv", "population": "population.csv",
                 "policies": "policies.csv", "factors": "factors.csv"},
        "model": FIXTURE_MODEL,
        "kinds": ["mask", "vaccine"],
        "alpha": 0.1,
        "span": "auto",
        "loess_degree": 1,
    }
    (directory / "config.json").write_text(json.dumps(config, indent=2) + "\n")
