"""Ordinary least squares fits and significance screens over region factors."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import CollinearityError, DataIntegrityError, InsufficientObservationsError, ParseError

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.1
INTERCEPT = "(intercept)"

# Factor names in the order regressions are reported.
STANDARD_FACTORS = (
    "population_density",
    "hospital_beds_per_1000",
    "percent_over_65",
    "public_health_funding_per_person",
    "percent_immigration",
    "gdp_per_capita",
    "education_level",
    "politics_r",
    "population",
)


@dataclass(frozen=True)
class Term:
    estimate: float
    std_error: float
    t_stat: float
    p_value: float


@dataclass(frozen=True)
class RegressionResult:
    terms: dict[str, Term]
    r_squared: float
    n: int
    dof: int
    fitted: np.ndarray = field(repr=False, compare=False, default=None)

    def flagged(self, alpha: float = DEFAULT_ALPHA) -> list[str]:
        """Non-intercept terms with ``p < alpha``."""
        return [name for name, t in self.terms.items()
                if name != INTERCEPT and t.p_value < alpha]


@dataclass(frozen=True)
class FactorTable:
    regions: tuple[str, ...]
    factors: dict[str, np.ndarray]
    dropped: tuple[str, ...] = ()

    @property
    def names(self) -> list[str]:
        return list(self.factors)

    def subset(self, regions: Sequence[str]) -> "FactorTable":
        index = {r: k for k, r in enumerate(self.regions)}
        missing = [r for r in regions if r not in index]
        if missing:
            raise KeyError(f"regions not in factor table: {missing}")
        rows = [index[r] for r in regions]
        return FactorTable(tuple(regions), {k: v[rows] for k, v in self.factors.items()}, self.dropped)

    def design(self, names: Optional[Sequence[str]] = None) -> tuple[np.ndarray, list[str]]:
        names = self.names if names is None else list(names)
        cols = [np.ones(len(self.regions))] + [self.factors[n] for n in names]
        return np.column_stack(cols), [INTERCEPT, *names]


def read_factor_table(path) -> FactorTable:
    """Load ``region,<factor1>,...``; rows with any blank factor are dropped."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if not header or header[0] != "region" or len(header) < 2:
            raise ParseError(f"{path}: header must start with 'region' and list factors")
        names = header[1:]
        regions, rows, dropped = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno}: expected {len(header)} fields")
            cells = [c.strip() for c in row[1:]]
            if any(c == "" for c in cells):
                dropped.append(row[0].strip())
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: non-numeric factor value") from None
            regions.append(row[0].strip())
    if len(set(regions)) != len(regions):
        raise DataIntegrityError(f"{path}: duplicate regions")
    for r in dropped:
        log.info("factor table: dropping %s (missing factor values)", r)
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return FactorTable(tuple(regions), {n: data[:, k] for k, n in enumerate(names)}, tuple(dropped))


def _dependent_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    """Columns that add nothing to the span of the columns before them."""
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    tol = max(X.shape) * np.finfo(float).eps * 1e3
    kept: list[int] = []
    bad = []
    for j in range(X.shape[1]):
        cand = Xs[:, kept + [j]]
        s = np.linalg.svd(cand, compute_uv=False)
        if s[-1] <= tol * s[0]:
            bad.append(names[j])
        else:
            kept.append(j)
    return bad


def ols_fit(design, response, names: Optional[Sequence[str]] = None) -> RegressionResult:
    """Least-squares fit with classical standard errors and two-sided t tests.

    ``design`` must already contain the intercept column.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    n, p = X.shape
    names = list(names) if names is not None else [INTERCEPT] + [f"x{k}" for k in range(1, p)]
    if len(y) != n:
        raise ValueError("design and response lengths differ")
    if n <= p:
        raise InsufficientObservationsError(f"{n} observations for {p} coefficients")
    bad = _dependent_columns(X, names)
    if bad:
        raise CollinearityError(f"design is rank deficient; dependent columns: {bad}", bad)
    Q, R = np.linalg.qr(X)
    coef = np.linalg.solve(R, Q.T @ y)
    fitted = X @ coef
    resid = y - fitted
    dof = n - p
    rss = float(resid @ resid)
    sigma2 = rss / dof
    R_inv = np.linalg.solve(R, np.eye(p))
    cov = sigma2 * (R_inv @ R_inv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.copysign(np.inf, coef))
    pval = 2.0 * stats.t.sf(np.abs(t), dof)
    centered = y - y.mean()
    tss = float(centered @ centered)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    terms = {name: Term(float(b), float(s), float(tt), float(pp))
             for name, b, s, tt, pp in zip(names, coef, se, t, pval)}
    return RegressionResult(terms, float(min(max(r2, 0.0), 1.0)), n, dof, fitted)


def multivariate_screen(factors: FactorTable, response, alpha: float = DEFAULT_ALPHA):
    """Joint fit on all factors; returns ``(result, flagged_names)``."""
    X, names = factors.design()
    result = ols_fit(X, response, names)
    return result, result.flagged(alpha)


@dataclass(frozen=True)
class ScanResult:
    results: dict[str, RegressionResult]
    errors: dict[str, str]
    flagged: list[str]


def univariate_scan(factors: FactorTable, response, alpha: float = DEFAULT_ALPHA) -> ScanResult:
    """One intercept-plus-factor regression per factor, in declaration order."""
    results, errors, flagged = {}, {}, []
    for name in factors.names:
        X, names = factors.design([name])
        try:
            res = ols_fit(X, response, names)
        except (CollinearityError, InsufficientObservationsError) as exc:
            errors[name] = str(exc)
            continue
        results[name] = res
        if res.terms[name].p_value < alpha:
            flagged.append(name)
    return ScanResult(results, errors, flagged)
