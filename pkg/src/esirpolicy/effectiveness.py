"""Policy lag windows, effect rates, rank-based normalisation and correlation.

An effect rate compares the counterfactual (predicted, no-policy) infected
proportion with what was observed: ``(predicted - actual) / actual``.
Positive values mean fewer infections than the pre-policy dynamics implied.
"""
from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from .errors import DomainError, EmptyInputError, InsufficientDataError, UndefinedCorrelationError

HORIZON = 31


class PolicyKind(str, enum.Enum):
    MASK = "mask"
    VACCINE = "vaccine"
    CUSTOM = "custom"


DEFAULT_LAGS = {PolicyKind.MASK: 14, PolicyKind.VACCINE: 28}


@dataclass(frozen=True)
class PolicyEvent:
    region: str
    kind: PolicyKind
    issue_date: dt.date
    custom_lag: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is PolicyKind.CUSTOM and (self.custom_lag is None or self.custom_lag < 0):
            raise ValueError("custom policies need a nonnegative lag")

    @property
    def lag(self) -> int:
        if self.kind is PolicyKind.CUSTOM:
            return int(self.custom_lag)
        return DEFAULT_LAGS[self.kind]


@dataclass(frozen=True)
class EffectRateRecord:
    region: str
    kind: str
    daily_rates: tuple[float, ...]
    max_rate: float
    total_rate: float
    transformed_max: Optional[float] = None
    transformed_total: Optional[float] = None


def prediction_start(event: PolicyEvent) -> dt.date:
    """First counterfactual day: issue date plus the policy lag."""
    return event.issue_date + dt.timedelta(days=event.lag)


def _pair(predicted_i, actual_i):
    p = np.asarray(predicted_i, dtype=float)
    a = np.asarray(actual_i, dtype=float)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError("predicted and actual must be 1-d and equal length")
    if len(a) == 0:
        raise EmptyInputError("empty series")
    bad = np.flatnonzero(a <= 0)
    if len(bad):
        raise DomainError(f"actual infected proportion is not positive on day {int(bad[0])}")
    return p, a


def daily_effect_rates(predicted_i, actual_i) -> np.ndarray:
    p, a = _pair(predicted_i, actual_i)
    return (p - a) / a


def max_effect_rate(daily) -> float:
    daily = np.asarray(daily, dtype=float)
    if daily.size == 0:
        raise EmptyInputError("empty series")
    return float(daily.max())


def total_effect_rate(predicted_i, actual_i) -> float:
    p, a = _pair(predicted_i, actual_i)
    return float((p.sum() - a.sum()) / a.sum())


def effect_record(region: str, kind, predicted_i, actual_i) -> EffectRateRecord:
    daily = daily_effect_rates(predicted_i, actual_i)
    return EffectRateRecord(region, PolicyKind(kind).value, tuple(float(v) for v in daily),
                            max_effect_rate(daily), total_effect_rate(predicted_i, actual_i))


def inverse_normal_transform(values) -> np.ndarray:
    """Blom rank-based inverse normal transform, ``ndtri((rank - 3/8) / (n + 1/4))``.

    Tied values share their average rank.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise InsufficientDataError("need at least two values")
    ranks = stats.rankdata(x, method="average")
    return special.ndtri((ranks - 0.375) / (len(x) + 0.25))


def transform_cohort(records: list[EffectRateRecord]) -> list[EffectRateRecord]:
    """Fill the transformed columns, normalising within each policy kind."""
    out = list(records)
    for kind in sorted({r.kind for r in records}):
        idx = [k for k, r in enumerate(records) if r.kind == kind]
        if len(idx) < 2:
            continue
        t_max = inverse_normal_transform([records[k].max_rate for k in idx])
        t_tot = inverse_normal_transform([records[k].total_rate for k in idx])
        for k, a, b in zip(idx, t_max, t_tot):
            r = records[k]
            out[k] = EffectRateRecord(r.region, r.kind, r.daily_rates, r.max_rate, r.total_rate,
                                      float(a), float(b))
    return out


def pearson_correlation(a, b) -> float:
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise InsufficientDataError("need two equal-length samples of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant sample")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))
