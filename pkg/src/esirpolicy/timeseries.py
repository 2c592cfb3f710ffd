"""Raw cumulative counts, SIR compartment proportions and date windows.

The input CSV holds one row per (date, region) with cumulative counts::

    date,region,cum_positive,cum_recovered,cum_deaths
    2020-05-22,AL,13119,6079,522

Empty cells are missing values.  Populations come from a separate
``region,population`` table.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    CoverageError,
    DataIntegrityError,
    InconsistencyError,
    LookupFailure,
    ParseError,
    RangeError,
)

COVID_HEADER = ["date", "region", "cum_positive", "cum_recovered", "cum_deaths"]
POPULATION_HEADER = ["region", "population"]

# Overshoot of removed over cumulative positives (as a population fraction)
# that is absorbed by clamping i to zero.
CLAMP_TOLERANCE = 1e-6


@dataclass(frozen=True)
class RawRow:
    date: dt.date
    cum_positive: Optional[int]
    cum_recovered: Optional[int]
    cum_deaths: Optional[int]


@dataclass(frozen=True)
class RawSeries:
    region: str
    rows: tuple[RawRow, ...]
    population: int

    def __post_init__(self):
        if self.population <= 0:
            raise RangeError(f"{self.region}: population must be positive")
        dates = [r.date for r in self.rows]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise DataIntegrityError(f"{self.region}: dates must be strictly increasing")

    @property
    def dates(self) -> list[dt.date]:
        return [r.date for r in self.rows]

    def column(self, name: str) -> list[Optional[int]]:
        return [getattr(r, name) for r in self.rows]


@dataclass(frozen=True)
class CompartmentRow:
    date: dt.date
    s: float
    i: float
    r: float


@dataclass(frozen=True)
class CompartmentSeries:
    region: str
    rows: tuple[CompartmentRow, ...]

    def __len__(self):
        return len(self.rows)

    @property
    def dates(self) -> list[dt.date]:
        return [r.date for r in self.rows]

    def as_array(self) -> np.ndarray:
        """Return an ``(n, 3)`` array of ``(s, i, r)`` proportions."""
        return np.array([(r.s, r.i, r.r) for r in self.rows], dtype=float).reshape(-1, 3)

    @classmethod
    def from_array(cls, region: str, dates: Sequence[dt.date], theta) -> "CompartmentSeries":
        theta = np.asarray(theta, dtype=float)
        if len(dates) != len(theta):
            raise ValueError("dates and theta must have the same length")
        rows = tuple(
            CompartmentRow(d, float(1.0 - x[1] - x[2]), float(x[1]), float(x[2]))
            for d, x in zip(dates, theta)
        )
        return cls(region, rows)


def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def _parse_count(text: str, where: str) -> Optional[int]:
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{where}: not a number: {text!r}") from None
    if value < 0 or value != int(value):
        raise ParseError(f"{where}: counts must be nonnegative integers, got {text!r}")
    return int(value)


def read_population_table(path) -> dict[str, int]:
    """Read a ``region,population`` CSV into a dict."""
    out: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != POPULATION_HEADER:
            raise ParseError(f"{path}: expected header {','.join(POPULATION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            count = _parse_count(row[1], f"{path}:{lineno}")
            if count is None or count <= 0:
                raise ParseError(f"{path}:{lineno}: population must be a positive integer")
            out[row[0].strip()] = count
    return out


def ingest_csv(path, population_table: Mapping[str, int]) -> list[RawSeries]:
    """Load cumulative counts, one :class:`RawSeries` per region.

    Regions are returned in order of first appearance; rows within a region
    are sorted by date.

    Raises
    ------
    ParseError
        Malformed header, date or count; the message names the file row.
    DataIntegrityError
        Duplicate dates, or a decreasing ``cum_positive``/``cum_deaths``.
    LookupFailure
        A region has no entry in ``population_table``.
    """
    path = Path(path)
    per_region: dict[str, list[tuple[int, RawRow]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != COVID_HEADER:
            raise ParseError(f"{path}: expected header {','.join(COVID_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COVID_HEADER):
                raise ParseError(f"{path}: row {lineno}: expected {len(COVID_HEADER)} fields")
            try:
                date = parse_date(row[0])
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: malformed date {row[0]!r}") from None
            where = f"{path}: row {lineno}"
            rec = RawRow(
                date,
                _parse_count(row[2], where),
                _parse_count(row[3], where),
                _parse_count(row[4], where),
            )
            per_region.setdefault(row[1].strip(), []).append((lineno, rec))

    out = []
    for region, items in per_region.items():
        if region not in population_table:
            raise LookupFailure(f"region {region!r} missing from population table")
        items.sort(key=lambda item: item[1].date)
        for (_, a), (lineno, b) in zip(items, items[1:]):
            if a.date == b.date:
                raise DataIntegrityError(f"{path}: row {lineno}: duplicate date {b.date} for {region}")
        for col in ("cum_positive", "cum_deaths"):
            last = None
            for lineno, rec in items:
                value = getattr(rec, col)
                if value is None:
                    continue
                if last is not None and value < last:
                    raise DataIntegrityError(
                        f"{path}: row {lineno}: {col} decreases ({last} -> {value}) for {region}"
                    )
                last = value
        out.append(RawSeries(region, tuple(rec for _, rec in items), int(population_table[region])))
    return out


def _fmt(value: Optional[int]) -> str:
    return "" if value is None else str(value)


def write_csv(path, series: Iterable[RawSeries]) -> None:
    """Write series in the input CSV schema (inverse of :func:`ingest_csv`)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COVID_HEADER)
        for s in series:
            for r in s.rows:
                writer.writerow([r.date.isoformat(), s.region, _fmt(r.cum_positive),
                                 _fmt(r.cum_recovered), _fmt(r.cum_deaths)])


def write_population_table(path, table: Mapping[str, int]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POPULATION_HEADER)
        for region, count in table.items():
            writer.writerow([region, count])


def to_compartments(raw: RawSeries, smoothed_recovered) -> CompartmentSeries:
    """Convert cumulative counts to daily ``(s, i, r)`` proportions.

    Removed = smoothed recovered + cumulative deaths.  Rows with a missing
    ``cum_positive`` or ``cum_deaths`` are dropped, which leaves a date gap
    that :func:`window` reports.
    """
    smoothed = np.asarray(smoothed_recovered, dtype=float)
    if smoothed.shape != (len(raw.rows),):
        raise ValueError("smoothed_recovered must align 1:1 with raw rows")
    n = float(raw.population)
    rows = []
    for rec, rec_smooth in zip(raw.rows, smoothed):
        if rec.cum_positive is None or rec.cum_deaths is None:
            continue
        removed = rec_smooth + rec.cum_deaths
        for label, value in (("cum_positive", rec.cum_positive), ("removed", removed)):
            if value > n:
                raise RangeError(f"{raw.region} {rec.date}: {label} {value:g} exceeds population {n:g}")
        r = removed / n
        i = (rec.cum_positive - removed) / n
        if i < 0:
            if -i > CLAMP_TOLERANCE:
                raise InconsistencyError(
                    f"{raw.region} {rec.date}: removed {removed:g} exceeds cum_positive {rec.cum_positive}"
                )
            i = 0.0
            r = rec.cum_positive / n
        rows.append(CompartmentRow(rec.date, 1.0 - i - r, i, r))
    return CompartmentSeries(raw.region, tuple(rows))


def date_range(start: dt.date, length: int) -> list[dt.date]:
    return [start + dt.timedelta(days=k) for k in range(length)]


def window(series: CompartmentSeries, start: dt.date, length: int) -> CompartmentSeries:
    """Slice ``length`` consecutive days beginning at ``start``.

    Raises
    ------
    CoverageError
        If any day of ``[start, start + length)`` is absent; ``missing`` lists them.
    """
    wanted = date_range(start, length)
    index = {r.date: k for k, r in enumerate(series.rows)}
    missing = [d for d in wanted if d not in index]
    if missing:
        shown = ", ".join(d.isoformat() for d in missing[:5])
        more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
        raise CoverageError(f"{series.region}: missing dates {shown}{more}", missing)
    k0 = index[start]
    return CompartmentSeries(series.region, series.rows[k0:k0 + length])
