"""Cross-validation harness, error metrics and the direct/two-stage pipelines."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, FoldError, MissingCovariateError, UndefinedMomentError
from .geo import ObservationPanel, distance_matrix
from .indexes import DRY_THRESHOLD_MM, STRICT, index_matrix, index_panel
from .interpolate import (
    DEFAULT_OPTIONS,
    KRIGING_METHODS,
    METHODS,
    InterpOptions,
    canonical_method,
    location_covariates,
    predict_targets,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
DAILY = "daily"
DIRECT = "direct"
TWO_STAGE = "two-stage"
APPROACHES = (DAILY, DIRECT, TWO_STAGE)
MEAN = "mean"
POOLED = "pooled"
ALL_YEARS = "all"


@dataclass(frozen=True)
class FoldAssignment:
    seed: int
    k: int
    folds: dict

    def fold_of(self, station_id):
        return self.folds[station_id]

    def members(self, fold):
        return sorted(sid for sid, f in self.folds.items() if f == fold)

    def sizes(self):
        return [len(self.members(f)) for f in range(self.k)]


def kfold_split(station_ids, k=10, seed=DEFAULT_SEED) -> FoldAssignment:
    """Seeded shuffle of the sorted ids, dealt round-robin into ``k`` folds."""
    ids = sorted(set(station_ids))
    if len(ids) != len(list(station_ids)):
        raise FoldError("duplicate station ids")
    if k < 2:
        raise FoldError("need at least 2 folds")
    if len(ids) < k:
        raise FoldError(f"{len(ids)} stations cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(len(ids))
    return FoldAssignment(seed, k, {ids[j]: pos % k for pos, j in enumerate(perm)})


def _pairs(pred, obs):
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.shape != obs.shape:
        raise ValueError("pred and obs differ in length")
    if pred.size == 0:
        raise EmptyInputError("no prediction/observation pairs")
    if np.isnan(pred).any() or np.isnan(obs).any():
        raise ValueError("pairs must be present")
    return pred, obs


def rmse(pred, obs) -> float:
    pred, obs = _pairs(pred, obs)
    return math.sqrt(float(np.mean((pred - obs) ** 2)))


def mae(pred, obs) -> float:
    pred, obs = _pairs(pred, obs)
    return float(np.mean(np.abs(pred - obs)))


def _central_moments(sample):
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise UndefinedMomentError("need at least 2 values")
    d = x - x.mean()
    m2 = float(np.mean(d**2))
    if m2 == 0.0:
        raise UndefinedMomentError("zero sample variance")
    return d, m2


def skewness(sample) -> float:
    """Biased moment-ratio skewness."""
    d, m2 = _central_moments(sample)
    return float(np.mean(d**3)) / m2**1.5


def kurtosis(sample) -> float:
    """Biased moment-ratio kurtosis (3 for a normal sample, not excess)."""
    d, m2 = _central_moments(sample)
    return float(np.mean(d**4)) / m2**2


@dataclass(frozen=True)
class ReportRow:
    approach: str
    method: str
    variable: str
    year: str
    metric: str
    value: float
    n_periods: int
    fallback_rate: float
    seed: int


@dataclass(frozen=True)
class Residual:
    approach: str
    method: str
    variable: str
    period: str
    station_id: str
    predicted: float
    observed: float


@dataclass
class EvaluationReport:
    rows: list = field(default_factory=list)
    seed: int = DEFAULT_SEED
    residuals: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def extend(self, other: EvaluationReport):
        self.rows.extend(other.rows)
        self.residuals.extend(other.residuals)
        self.metadata.update(other.metadata)
        return self

    def select(self, **criteria):
        return [r for r in self.rows
                if all(getattr(r, k) == v for k, v in criteria.items())]

    def value(self, approach, method, variable, year, metric):
        hits = self.select(approach=approach, method=method, variable=variable,
                           year=str(year), metric=metric)
        if len(hits) != 1:
            raise KeyError((approach, method, variable, year, metric))
        return hits[0].value


@dataclass(frozen=True)
class EvalOptions:
    interp: InterpOptions = DEFAULT_OPTIONS
    pooling: str = MEAN
    policy: str = STRICT
    threshold: float = DRY_THRESHOLD_MM
    inclusive: bool = False
    keep_residuals: bool = False


@dataclass
class _Context:
    """Panel data in id order with the cached distance matrix."""

    panel: ObservationPanel
    D: np.ndarray
    covariates: np.ndarray

    @classmethod
    def build(cls, panel, metric):
        panel = panel.sorted_by_id()
        D = distance_matrix(panel.stations, metric).values
        return cls(panel, D, location_covariates(panel.stations))

    @property
    def ids(self):
        return self.panel.station_ids


def _fold_index(ids, folds: FoldAssignment):
    missing = [sid for sid in ids if sid not in folds.folds]
    if missing:
        raise FoldError(f"stations without a fold: {', '.join(missing[:5])}")
    return np.array([folds.folds[sid] for sid in ids], dtype=int)


def _cv_predict(ctx, values, labels, folds, method, interp, predict_missing=False):
    """Predict every held-out station for each column of ``values``.

    Returns ``(pred, fits, fallbacks)``; ``fits`` and ``fallbacks`` count
    kriging fits per column.
    """
    method = canonical_method(method)
    ids = np.array(ctx.ids, dtype=object)
    fold_idx = _fold_index(ctx.ids, folds)
    cov = ctx.covariates
    if method == "UK" and np.isnan(cov).any():
        lacking = [sid for sid, row in zip(ctx.ids, cov) if np.isnan(row).any()]
        raise MissingCovariateError(
            f"universal kriging needs elevations; missing for {', '.join(lacking[:5])}"
        )
    n, T = values.shape
    pred = np.full((n, T), np.nan)
    fits = np.zeros(T, dtype=int)
    fallbacks = np.zeros(T, dtype=int)
    for t in range(T):
        col = values[:, t]
        present = ~np.isnan(col)
        for f in range(folds.k):
            in_fold = fold_idx == f
            test = in_fold if predict_missing else in_fold & present
            if not test.any():
                continue
            train = ~in_fold & present
            if not train.any():
                logger.warning("%s: no out-of-fold data for fold %d; skipped", labels[t], f)
                continue
            tr = np.flatnonzero(train)
            te = np.flatnonzero(test)
            res = predict_targets(
                method, col[tr], list(ids[tr]), ctx.D[np.ix_(tr, tr)],
                ctx.D[np.ix_(tr, te)], interp, cov[tr], cov[te],
            )
            pred[te, t] = res.values
            if method in KRIGING_METHODS:
                fits[t] += 1
                fallbacks[t] += int(res.fallback_used)
    return pred, fits, fallbacks


def _period_metrics(pred, obs):
    ok = ~np.isnan(pred) & ~np.isnan(obs)
    if not ok.any():
        return None
    return rmse(pred[ok], obs[ok]), mae(pred[ok], obs[ok])


def _aggregate(pred, obs, years, fits, fallbacks, fit_years=None, *, approach, method,
               variable, seed, pooling, labels=None, station_ids=None,
               keep_residuals=False):
    """Per-year and overall RMSE/MAE rows from a station x period matrix.

    ``fits``/``fallbacks`` are kriging fit counts indexed like ``fit_years``
    (which defaults to ``years``).
    """
    years = np.asarray(years)
    fit_years = years if fit_years is None else np.asarray(fit_years)
    groups = [(str(y), years == y, fit_years == y) for y in sorted(set(years.tolist()))]
    groups.append((ALL_YEARS, np.ones(len(years), dtype=bool),
                   np.ones(len(fit_years), dtype=bool)))
    rows = []
    for label, sel, fit_sel in groups:
        cols = np.flatnonzero(sel)
        per = [m for m in (_period_metrics(pred[:, c], obs[:, c]) for c in cols) if m]
        if not per:
            continue
        if pooling == POOLED:
            r_val, m_val = _period_metrics(pred[:, cols].ravel(), obs[:, cols].ravel())
        else:
            r_val = float(np.mean([m[0] for m in per]))
            m_val = float(np.mean([m[1] for m in per]))
        n_fits = int(fits[fit_sel].sum())
        rate = float(fallbacks[fit_sel].sum()) / n_fits if n_fits else 0.0
        for metric, val in (("RMSE", r_val), ("MAE", m_val)):
            rows.append(ReportRow(approach, method, variable, label, metric, val,
                                  len(per), rate, seed))
    residuals = []
    if keep_residuals:
        for c in range(pred.shape[1]):
            for i in range(pred.shape[0]):
                if not (np.isnan(pred[i, c]) or np.isnan(obs[i, c])):
                    residuals.append(Residual(approach, method, variable, labels[c],
                                              station_ids[i], float(pred[i, c]),
                                              float(obs[i, c])))
    return rows, residuals


def _daily_values(panel, variable):
    if variable == "P":
        return panel.precip
    if variable == "T":
        if panel.tmax is None:
            raise ValueError("panel has no maximum temperature data")
        return panel.tmax
    raise ValueError(f"unknown daily variable {variable!r}")


def _report(rows, residuals, folds, opts, **meta):
    metadata = {
        "seed": folds.seed,
        "k": folds.k,
        "pooling": opts.pooling,
        "metric": opts.interp.metric,
        "missing_stations": "dropped per day",
        **meta,
    }
    return EvaluationReport(rows, folds.seed, residuals, metadata)


def cv_daily(panel: ObservationPanel, method, folds: FoldAssignment,
             opts: EvalOptions = EvalOptions(), variable="P") -> EvaluationReport:
    """Cross-validate ``method`` on every day of the panel."""
    method = canonical_method(method)
    ctx = _Context.build(panel, opts.interp.metric)
    obs = _daily_values(ctx.panel, variable)
    labels = [d.isoformat() for d in ctx.panel.dates]
    pred, fits, fb = _cv_predict(ctx, obs, labels, folds, method, opts.interp)
    rows, res = _aggregate(
        pred, obs, [d.year for d in ctx.panel.dates], fits, fb,
        approach=DAILY, method=method, variable=variable, seed=folds.seed,
        pooling=opts.pooling, labels=labels, station_ids=ctx.ids,
        keep_residuals=opts.keep_residuals,
    )
    return _report(rows, res, folds, opts)


def run_direct(panel: ObservationPanel, kind, method, folds: FoldAssignment,
               opts: EvalOptions = EvalOptions()) -> EvaluationReport:
    """Cross-validate ``method`` on station index values, period by period."""
    method = canonical_method(method)
    ctx = _Context.build(panel, opts.interp.metric)
    table = index_panel(ctx.panel, kind, opts.policy, opts.threshold, opts.inclusive)
    pred, fits, fb = _cv_predict(ctx, table.values, table.periods, folds, method,
                                 opts.interp)
    years = [table.year_of(k) for k in range(len(table.periods))]
    rows, res = _aggregate(
        pred, table.values, years, fits, fb, approach=DIRECT, method=method,
        variable=table.kind, seed=folds.seed, pooling=opts.pooling,
        labels=table.periods, station_ids=ctx.ids, keep_residuals=opts.keep_residuals,
    )
    return _report(rows, res, folds, opts, policy=opts.policy)


def run_two_stage(panel: ObservationPanel, kind, method, folds: FoldAssignment,
                  opts: EvalOptions = EvalOptions()) -> EvaluationReport:
    """Interpolate held-out daily series, then compute their indexes."""
    method = canonical_method(method)
    ctx = _Context.build(panel, opts.interp.metric)
    table = index_panel(ctx.panel, kind, opts.policy, opts.threshold, opts.inclusive)
    labels = [d.isoformat() for d in ctx.panel.dates]
    daily, fits, fb = _cv_predict(ctx, ctx.panel.precip, labels, folds, method,
                                  opts.interp, predict_missing=True)
    periods, pred, _ = index_matrix(daily, ctx.panel.dates, kind, opts.policy,
                                    opts.threshold, opts.inclusive)
    assert periods == table.periods

    years = [table.year_of(k) for k in range(len(periods))]
    day_years = [d.year for d in ctx.panel.dates]
    rows, res = _aggregate(
        pred, table.values, years, fits, fb, day_years, approach=TWO_STAGE, method=method,
        variable=table.kind, seed=folds.seed, pooling=opts.pooling,
        labels=table.periods, station_ids=ctx.ids, keep_residuals=opts.keep_residuals,
    )
    return _report(rows, res, folds, opts, policy=opts.policy)


@dataclass(frozen=True)
class MomentRow:
    variable: str
    year: str
    metric: str
    value: float
    n_periods: int
    n_skipped: int


def _moment_rows(variable, samples, years):
    """Average skewness/kurtosis of each column sample, per year and overall."""
    stats = []
    for col in samples:
        col = col[~np.isnan(col)]
        try:
            stats.append((skewness(col), kurtosis(col)))
        except UndefinedMomentError:
            stats.append(None)
    years = list(years)
    rows = []
    groups = [(str(y), [i for i, yy in enumerate(years) if yy == y])
              for y in sorted(set(years))]
    groups.append((ALL_YEARS, list(range(len(years)))))
    for label, idx in groups:
        got = [stats[i] for i in idx if stats[i] is not None]
        skipped = len(idx) - len(got)
        for j, metric in enumerate(("skewness", "kurtosis")):
            value = float(np.mean([g[j] for g in got])) if got else float("nan")
            rows.append(MomentRow(variable, label, metric, value, len(got), skipped))
    return rows


def distribution_report(panel: ObservationPanel, variables=("P", "cbrt_P", "T"),
                        opts: EvalOptions = EvalOptions()):
    """Sample moments across stations, per day (P, T) or per period (indexes).

    Variables: ``P``, ``T``, ``MFP``, ``CDD`` and their ``cbrt_`` forms.
    """
    rows = []
    tables = {}
    day_years = [d.year for d in panel.dates]
    for var in variables:
        base = var[5:] if var.startswith("cbrt_") else var
        if base in ("P", "T"):
            if base == "T" and panel.tmax is None:
                logger.info("no temperature data; skipping %s", var)
                continue
            data = _daily_values(panel, base)
            years = day_years
        elif base in ("MFP", "CDD"):
            if base not in tables:
                tables[base] = index_panel(panel, base, opts.policy, opts.threshold,
                                           opts.inclusive)
            t = tables[base]
            data = t.values
            years = [t.year_of(k) for k in range(len(t.periods))]
        else:
            raise ValueError(f"unknown variable {var!r}")
        if var.startswith("cbrt_"):
            data = np.cbrt(data)
        rows.extend(_moment_rows(var, data.T, years))
    return rows


def evaluate(panel, methods=METHODS, approaches=(DAILY,), kinds=("MFP", "CDD"),
             folds=None, opts: EvalOptions = EvalOptions(), k=10, seed=DEFAULT_SEED):
    """Run the selected approaches for every method on shared folds."""
    if folds is None:
        folds = kfold_split(panel.station_ids, k, seed)
    report = EvaluationReport(seed=folds.seed)
    for approach in approaches:
        for method in methods:
            if approach == DAILY:
                report.extend(cv_daily(panel, method, folds, opts))
                continue
            runner = run_direct if approach == DIRECT else run_two_stage
            for kind in kinds:
                report.extend(runner(panel, kind, method, folds, opts))
    return report
