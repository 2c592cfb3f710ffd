"""Local polynomial regression (LOESS) with AICc span selection.

Used to spread the weekly jumps of cumulative recoveries over the days in
between.  Each point is fitted by weighted least squares over its
``ceil(span * n)`` nearest neighbours with tricube weights; the span can be
picked automatically by minimising

    AICc = log(sigma2) + 1 + 2 (tr(L) + 1) / (n - tr(L) - 2)

over a grid, where ``L`` is the smoother (hat) matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, NoFeasibleSpanError, SingularityError

DEFAULT_SPAN_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass(frozen=True)
class LoessConfig:
    """Smoothing settings.

    ``span=None`` means select the span from ``span_grid`` by AICc.
    """

    degree: int = 1
    span: Optional[float] = None
    span_grid: Sequence[float] = field(default=DEFAULT_SPAN_GRID)

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        spans = list(self.span_grid) + ([] if self.span is None else [self.span])
        if any(not 0.0 < a <= 1.0 for a in spans):
            raise ValueError("spans must lie in (0, 1]")


def _check_xy(x, y, degree):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if len(x) < degree + 1:
        raise InsufficientDataError(f"need at least {degree + 1} points, got {len(x)}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    return x, y


def hat_matrix(x, span: float, degree: int = 1) -> np.ndarray:
    """Return the ``(n, n)`` LOESS smoother matrix ``L`` with ``fitted = L @ y``."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    q = min(n, math.ceil(span * n - 1e-12))
    if q < degree + 1:
        raise SingularityError(f"span {span} leaves {q} neighbours for degree {degree}")
    L = np.zeros((n, n))
    for j in range(n):
        dist = np.abs(x - x[j])
        nbr = np.argsort(dist, kind="stable")[:q]
        h = dist[nbr].max()
        if h <= 0:
            raise SingularityError(f"degenerate neighbourhood at x={x[j]}")
        u = dist[nbr] / h
        w = (1.0 - u**3) ** 3
        # local coordinates scaled by h keep the normal equations well conditioned
        t = (x[nbr] - x[j]) / h
        X = np.vander(t, degree + 1, increasing=True)
        XtW = X.T * w
        A = XtW @ X
        if np.linalg.matrix_rank(A, tol=1e-10 * max(1.0, np.abs(A).max())) < degree + 1:
            raise SingularityError(f"singular local design at x={x[j]} (span {span})")
        # first row of A^{-1} X^T W gives the intercept, i.e. the fit at x_j
        L[j, nbr] = np.linalg.solve(A, XtW)[0]
    return L


def loess_fit(x, y, cfg: LoessConfig) -> np.ndarray:
    """Fitted LOESS values at each ``x``.  ``cfg.span=None`` selects the span first."""
    x, y = _check_xy(x, y, cfg.degree)
    span = cfg.span if cfg.span is not None else select_span(x, y, cfg.degree, cfg.span_grid)
    return hat_matrix(x, span, cfg.degree) @ y


def aicc(y, L) -> float:
    n = len(y)
    resid = y - L @ y
    sigma2 = float(resid @ resid) / n
    # exact fits would give log(0); floor at rounding level of y
    floor = (1e-12 * max(1.0, float(np.abs(y).max()))) ** 2
    tr = float(np.trace(L))
    denom = n - tr - 2.0
    if denom <= 0:
        return math.inf
    return math.log(max(sigma2, floor)) + 1.0 + 2.0 * (tr + 1.0) / denom


def span_scores(x, y, degree: int = 1, span_grid=DEFAULT_SPAN_GRID) -> dict[float, float]:
    """AICc for every feasible span in the grid (infeasible spans omitted)."""
    x, y = _check_xy(x, y, degree)
    scores = {}
    for span in span_grid:
        try:
            L = hat_matrix(x, span, degree)
        except SingularityError:
            continue
        score = aicc(y, L)
        if math.isfinite(score):
            scores[span] = score
    return scores


def select_span(x, y, degree: int = 1, span_grid=DEFAULT_SPAN_GRID) -> float:
    """Span with the smallest AICc; ties go to the larger span."""
    if len(x) < degree + 2:
        raise InsufficientDataError(f"need at least {degree + 2} points for span selection")
    scores = span_scores(x, y, degree, span_grid)
    if not scores:
        raise NoFeasibleSpanError("no span in the grid gives a nonsingular fit")
    return min(scores, key=lambda a: (scores[a], -a))


def smooth_recovered(raw, cfg: LoessConfig) -> np.ndarray:
    """Smooth the cumulative-recovered column of ``raw`` against day index.

    ``raw`` is a :class:`~esirpolicy.timeseries.RawSeries` or a plain
    sequence of counts.

    Missing entries (``None`` or NaN) are linearly interpolated between known
    values, held constant beyond the first/last known value, then smoothed.
    The result is clipped at zero and made nondecreasing by a running maximum.
    """
    if hasattr(raw, "rows"):
        recovered = raw.column("cum_recovered")
        idx = np.array([(d - raw.rows[0].date).days for d in raw.dates], dtype=float)
    else:
        recovered = raw
        idx = np.arange(len(recovered), dtype=float)
    y = np.array([np.nan if v is None else v for v in recovered], dtype=float)
    known = ~np.isnan(y)
    if known.sum() < cfg.degree + 2:
        raise InsufficientDataError(
            f"need at least {cfg.degree + 2} recovered values, got {int(known.sum())}"
        )
    filled = np.interp(idx, idx[known], y[known])
    fitted = loess_fit(idx, filled, cfg)
    return np.maximum.accumulate(np.clip(fitted, 0.0, None))
