"""End-to-end commands: validate, policy-effect, regress and pipeline.

Each command writes CSV tables and SVG figures under the output directory
and a ``manifest.json`` listing the configuration, a status for every input
region and the files produced.  Wall-clock timing goes to ``timing.json``
so the manifest itself is reproducible byte for byte.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, plotting
from .config import RunConfig
from .effectiveness import (
    EffectRateRecord,
    PolicyEvent,
    PolicyKind,
    effect_record,
    pearson_correlation,
    prediction_start,
    transform_cohort,
)
from .errors import CoverageError, EsirPolicyError, ParseError
from .esir import coverage, fit, predict
from .regression import (
    INTERCEPT,
    multivariate_screen,
    read_factor_table,
    univariate_scan,
)
from .smoother import LoessConfig, smooth_recovered
from .timeseries import CompartmentSeries, ingest_csv, parse_date, read_population_table, to_compartments, window

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3

POLICY_HEADER = ["region", "kind", "issue_date"]
EFFECT_HEADER = ["region", "kind", "max_rate", "total_rate", "int_max", "int_total"]
REGRESSION_HEADER = ["response", "factor", "estimate", "std_error", "t", "p", "r_squared", "flagged"]
COVERAGE_HEADER = ["region", "anchor", "first_prediction", "last_prediction", "inside", "total", "fraction"]
PREDICTION_HEADER = ["region", "kind", "date", "actual_i", "median_i", "lower_i", "upper_i", "daily_rate"]
CORRELATION_HEADER = ["metric", "n", "r"]
# (response label, policy kind, metric) in reporting order
RESPONSES = (
    ("max mask", "mask", "max"),
    ("total mask", "mask", "total"),
    ("max vaccine", "vaccine", "max"),
    ("total vaccine", "vaccine", "total"),
)


def fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.10g}"


@dataclass
class PolicyTable:
    events: dict[str, dict[str, PolicyEvent]] = field(default_factory=dict)
    anchors: dict[str, dt.date] = field(default_factory=dict)


def _parse_kind(text: str):
    text = text.strip()
    if text.startswith("custom:"):
        return PolicyKind.CUSTOM, int(text.split(":", 1)[1])
    return PolicyKind(text), None


def read_policies(path) -> PolicyTable:
    """Read ``region,kind,issue_date[,validation_anchor]``.

    ``kind`` is ``mask``, ``vaccine`` or ``custom:<lag days>``.  A blank
    ``issue_date`` is allowed on rows that only carry a validation anchor.
    """
    table = PolicyTable()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header not in (POLICY_HEADER, POLICY_HEADER + ["validation_anchor"]):
            raise ParseError(f"{path}: expected header region,kind,issue_date[,validation_anchor]")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno}: expected {len(header)} fields")
            region = row[0].strip()
            try:
                kind, lag = _parse_kind(row[1])
                if row[2].strip():
                    event = PolicyEvent(region, kind, parse_date(row[2]), lag)
                    key = kind.value if kind is not PolicyKind.CUSTOM else row[1].strip()
                    table.events.setdefault(region, {})[key] = event
                if len(row) > 3 and row[3].strip():
                    table.anchors[region] = parse_date(row[3])
            except ValueError as exc:
                raise ParseError(f"{path}: row {lineno}: {exc}") from None
    return table


class Run:
    """Collects region statuses, notices and output files for one command."""

    def __init__(self, config: RunConfig, command: str):
        self.config = config
        self.command = command
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.regions: list[str] = []
        self.analyses: dict[str, dict[str, str]] = {}
        self.notices: list[str] = []
        self.outputs: list[str] = []
        self.started = time.perf_counter()

    def path(self, rel: str) -> Path:
        p = self.out_dir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.outputs:
            self.outputs.append(rel)
        return p

    def analyzed(self, analysis: str, region: str) -> None:
        self.analyses.setdefault(analysis, {})[region] = "analyzed"

    def excluded(self, analysis: str, region: str, reason: str) -> None:
        log.info("%s: excluding %s (%s)", analysis, region, reason)
        self.analyses.setdefault(analysis, {})[region] = f"excluded: {reason}"

    def notice(self, text: str) -> None:
        log.info(text)
        self.notices.append(text)

    def write_csv(self, rel: str, header, rows) -> Path:
        p = self.path(rel)
        with open(p, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return p

    @property
    def partial(self) -> bool:
        return any(s != "analyzed" for a in self.analyses.values() for s in a.values())

    def region_status(self) -> dict:
        out = {}
        for region in self.regions:
            per = {a: s[region] for a, s in self.analyses.items() if region in s}
            ok = any(s == "analyzed" for s in per.values())
            out[region] = {"status": "analyzed" if ok else "excluded", "analyses": per}
        return out

    def finish(self) -> int:
        manifest = {
            "artifact": "esirpolicy",
            "version": __version__,
            "command": self.command,
            "config": self.config.echo(),
            "regions": self.region_status(),
            "notices": self.notices,
            "outputs": sorted(self.outputs + ["manifest.json"]),
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        timing = {"command": self.command, "wall_clock_seconds": time.perf_counter() - self.started}
        (self.out_dir / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
        return EXIT_PARTIAL if self.partial else EXIT_OK


# --------------------------------------------------------------------------
# data preparation

@dataclass
class Cohort:
    regions: list[str]
    series: dict[str, CompartmentSeries]
    reasons: dict[str, str]


def prepare(config: RunConfig) -> Cohort:
    """Ingest, smooth recoveries and convert every region to proportions.

    Regions whose data cannot be converted are kept with an exclusion reason.
    """
    config.require("covid_csv", "population_csv")
    population = read_population_table(config.population_csv)
    raws = ingest_csv(config.covid_csv, population)
    loess = LoessConfig(degree=config.loess_degree, span=config.span)
    cohort = Cohort([r.region for r in raws], {}, {})
    for raw in raws:
        try:
            smoothed = smooth_recovered(raw, loess)
            cohort.series[raw.region] = to_compartments(raw, smoothed)
        except EsirPolicyError as exc:
            cohort.reasons[raw.region] = f"{type(exc).__name__}: {exc}"
    return cohort


def _start_run(config: RunConfig, command: str, run: Optional[Run], cohort: Optional[Cohort]):
    own = run is None
    run = run or Run(config, command)
    cohort = cohort or prepare(config)
    for r in cohort.regions:
        if r not in run.regions:
            run.regions.append(r)
    return run, cohort, own


def _done(run: Run, own: bool) -> int:
    if own:
        return run.finish()
    return EXIT_PARTIAL if run.partial else EXIT_OK


def _forecast(series: CompartmentSeries, start: dt.date, spec):
    """Fit the window before ``start`` and predict from ``start`` on."""
    train = window(series, start - dt.timedelta(days=spec.training_days), spec.training_days)
    actual = window(series, start, spec.horizon)
    summary = predict(fit(train, spec), spec.horizon, spec)
    if summary.dates[0] != start:
        raise CoverageError("prediction dates misaligned")
    return train, actual, summary


def _run_tasks(fn, tasks, workers):
    """Apply ``fn(*task)`` to each task, returning results or exceptions in order."""

    def _safe(task):
        try:
            return fn(*task)
        except EsirPolicyError as exc:
            return exc

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, *t) for t in tasks]
            out = []
            for f in futures:
                try:
                    out.append(f.result())
                except EsirPolicyError as exc:
                    out.append(exc)
            return out
    return [_safe(t) for t in tasks]


def _reason(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


# --------------------------------------------------------------------------
# commands

def cmd_validate(config: RunConfig, run: Optional[Run] = None, cohort: Optional[Cohort] = None) -> int:
    """Predict a policy-free window per region and report band coverage."""
    config.require("policy_csv")
    run, cohort, own = _start_run(config, "validate", run, cohort)
    policies = read_policies(config.policy_csv)
    spec = config.model
    tasks, regions = [], []
    for region in cohort.regions:
        if region in cohort.reasons:
            run.excluded("validate", region, cohort.reasons[region])
        elif region not in policies.anchors:
            run.excluded("validate", region, "no validation anchor")
        else:
            tasks.append((cohort.series[region], policies.anchors[region], spec))
            regions.append(region)
    rows = []
    for region, task, result in zip(regions, tasks, _run_tasks(_forecast, tasks, config.workers)):
        if isinstance(result, Exception):
            run.excluded("validate", region, _reason(result))
            continue
        train, actual, summary = result
        actual_i = actual.as_array()[:, 1]
        rep = coverage(summary, actual_i)
        anchor = task[1]
        rows.append([region, anchor.isoformat(), summary.dates[0].isoformat(),
                     summary.dates[-1].isoformat(), rep.inside, rep.total, fmt(rep.fraction)])
        plotting.prediction_figure(
            run.path(f"validate/{region}.svg"), f"{region}: no-policy validation",
            train.dates + actual.dates,
            np.concatenate([train.as_array()[:, 1], actual_i]),
            summary.dates, summary.median_i, summary.lower_i, summary.upper_i, spec.credible_level)
        run.analyzed("validate", region)
    run.write_csv("validate/coverage.csv", COVERAGE_HEADER, rows)
    return _done(run, own)


def cmd_policy_effect(config: RunConfig, kinds=None, run: Optional[Run] = None,
                      cohort: Optional[Cohort] = None) -> int:
    """Score counterfactual gaps for each policy kind and write the cohort tables."""
    config.require("policy_csv")
    run, cohort, own = _start_run(config, "policy-effect", run, cohort)
    policies = read_policies(config.policy_csv)
    spec = config.model
    kinds = list(kinds or config.kinds)
    records: list[EffectRateRecord] = []
    pred_rows = []
    for kind in kinds:
        analysis = f"policy-effect:{kind}"
        tasks, regions = [], []
        for region in cohort.regions:
            event = policies.events.get(region, {}).get(kind)
            if region in cohort.reasons:
                run.excluded(analysis, region, cohort.reasons[region])
            elif event is None:
                run.excluded(analysis, region, f"no {kind} policy")
            else:
                tasks.append((cohort.series[region], prediction_start(event), spec))
                regions.append(region)
        for region, result in zip(regions, _run_tasks(_forecast, tasks, config.workers)):
            if isinstance(result, Exception):
                run.excluded(analysis, region, _reason(result))
                continue
            train, actual, summary = result
            actual_i = actual.as_array()[:, 1]
            try:
                rec = effect_record(region, kind, summary.median_i, actual_i)
            except EsirPolicyError as exc:
                run.excluded(analysis, region, _reason(exc))
                continue
            records.append(rec)
            for d, a, m, lo, hi, rate in zip(summary.dates, actual_i, summary.median_i,
                                             summary.lower_i, summary.upper_i, rec.daily_rates):
                pred_rows.append([region, kind, d.isoformat(), fmt(a), fmt(m), fmt(lo), fmt(hi), fmt(rate)])
            plotting.prediction_figure(
                run.path(f"policy_{kind}/{region}.svg"), f"{region}: {kind} policy",
                train.dates + actual.dates,
                np.concatenate([train.as_array()[:, 1], actual_i]),
                summary.dates, summary.median_i, summary.lower_i, summary.upper_i, spec.credible_level)
            run.analyzed(analysis, region)

    for kind in kinds:
        n = sum(r.kind == kind for r in records)
        if n < 2:
            run.notice(f"{kind}: {n} region(s) scored; inverse-normal transform needs at least 2")
    records = transform_cohort(records)
    run.write_csv("effect_rates.csv", EFFECT_HEADER,
                  [[r.region, r.kind, fmt(r.max_rate), fmt(r.total_rate),
                    fmt(r.transformed_max), fmt(r.transformed_total)] for r in records])
    run.write_csv("predictions.csv", PREDICTION_HEADER, pred_rows)
    _correlations(run, records)
    _bar_figure(run, cohort.regions, records)
    return _done(run, own)


def _correlations(run: Run, records):
    by = {(r.region, r.kind): r for r in records}
    both = [reg for reg in dict.fromkeys(r.region for r in records)
            if (reg, "mask") in by and (reg, "vaccine") in by]
    rows = []
    if not {"mask", "vaccine"} <= {r.kind for r in records}:
        run.notice("correlations omitted: both mask and vaccine rates are required")
    elif len(both) < 2:
        run.notice(f"correlations omitted: {len(both)} region(s) with both policies (n < 2)")
    else:
        for metric in ("total", "max"):
            a = [getattr(by[(reg, "mask")], f"{metric}_rate") for reg in both]
            b = [getattr(by[(reg, "vaccine")], f"{metric}_rate") for reg in both]
            try:
                rows.append([f"{metric} mask vs {metric} vaccine", len(both), fmt(pearson_correlation(a, b))])
            except EsirPolicyError as exc:
                run.notice(f"{metric} correlation omitted: {exc}")
    run.write_csv("correlations.csv", CORRELATION_HEADER, rows)


def _bar_figure(run: Run, regions, records):
    by = {(r.region, r.kind): r for r in records}
    shown = [reg for reg in regions if any((reg, k) in by for k in ("mask", "vaccine"))]
    if not shown:
        return

    def value(reg, kind, metric):
        rec = by.get((reg, kind))
        return float("nan") if rec is None else getattr(rec, f"{metric}_rate")

    # descending total rate, vaccine first since every region has a vaccine date
    key_kind = "vaccine" if any(r.kind == "vaccine" for r in records) else "mask"
    shown.sort(key=lambda reg: (-np.nan_to_num(value(reg, key_kind, "total"), nan=-np.inf), reg))
    values = {f"{metric}_{kind}": [value(reg, kind, metric) for reg in shown]
              for metric in ("total", "max") for kind in ("mask", "vaccine")}
    plotting.effect_bar_figure(run.path("effect_rates.svg"), shown, values)


def read_effect_table(path) -> list[EffectRateRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if [h.strip() for h in next(reader, [])] != EFFECT_HEADER:
            raise ParseError(f"{path}: expected header {','.join(EFFECT_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = [float(c) if c.strip() else None for c in row[2:]]
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: non-numeric rate") from None
            out.append(EffectRateRecord(row[0], row[1], (), vals[0], vals[1], vals[2], vals[3]))
    return out


def cmd_regress(config: RunConfig, run: Optional[Run] = None, effects_csv=None) -> int:
    """Multivariate and single-factor OLS of transformed rates on region factors."""
    config.require("factors_csv")
    own = run is None
    run = run or Run(config, "regress")
    effects_csv = Path(effects_csv) if effects_csv else Path(config.out_dir) / "effect_rates.csv"
    if not effects_csv.is_file():
        raise FileNotFoundError(f"effect-rate table not found: {effects_csv} (run policy-effect first)")
    records = read_effect_table(effects_csv)
    factors = read_factor_table(config.factors_csv)
    for region in dict.fromkeys(r.region for r in records):
        if region not in run.regions:
            run.regions.append(region)
    for region in factors.dropped:
        run.notice(f"factor table: {region} dropped listwise (missing factor values)")

    multi_rows, uni_rows = [], []
    for label, kind, metric in RESPONSES:
        analysis = f"regress:{label}"
        recs = [r for r in records if r.kind == kind]
        use = []
        for r in recs:
            value = getattr(r, f"transformed_{metric}")
            if r.region not in factors.regions:
                run.excluded(analysis, r.region, "missing from factor table")
            elif value is None:
                run.excluded(analysis, r.region, "no transformed rate")
            else:
                use.append((r.region, value))
                run.analyzed(analysis, r.region)
        if not use:
            run.notice(f"{label}: no regions with transformed rates")
            continue
        table = factors.subset([reg for reg, _ in use])
        y = np.array([v for _, v in use])
        try:
            result, flagged = multivariate_screen(table, y, config.alpha)
        except EsirPolicyError as exc:
            run.notice(f"{label}: multivariate fit failed ({exc})")
        else:
            for name, term in result.terms.items():
                if name == INTERCEPT:
                    continue
                multi_rows.append([label, name, fmt(term.estimate), fmt(term.std_error), fmt(term.t_stat),
                                   fmt(term.p_value), fmt(result.r_squared), fmt(name in flagged)])
        scan = univariate_scan(table, y, config.alpha)
        for name in table.names:
            if name in scan.errors:
                run.notice(f"{label} ~ {name}: {scan.errors[name]}")
                continue
            res = scan.results[name]
            term = res.terms[name]
            uni_rows.append([label, name, fmt(term.estimate), fmt(term.std_error), fmt(term.t_stat),
                             fmt(term.p_value), fmt(res.r_squared), fmt(name in scan.flagged)])
    run.write_csv("regression_multivariate.csv", REGRESSION_HEADER, multi_rows)
    run.write_csv("regression_univariate.csv", REGRESSION_HEADER, uni_rows)
    run.notice(f"significance level alpha = {config.alpha}")
    return _done(run, own)


def cmd_pipeline(config: RunConfig) -> int:
    """validate, policy-effect and regress in one run sharing one manifest."""
    run = Run(config, "pipeline")
    cohort = prepare(config)
    cmd_validate(config, run, cohort)
    cmd_policy_effect(config, None, run, cohort)
    if config.factors_csv is not None:
        cmd_regress(config, run)
    else:
        run.notice("regress skipped: no factor table configured")
    return run.finish()
