"""CSV ingestion and report emission."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from pathlib import Path

import numpy as np

from .errors import InvalidCoordinateError, LoadError
from .evaluation import ALL_YEARS, APPROACHES, MomentRow, ReportRow
from .geo import ObservationPanel, Station, validate_panel
from .interpolate import METHODS

logger = logging.getLogger(__name__)

STATION_HEADER = ["station_id", "lat", "lon", "elev_m"]
OBS_HEADER = ["station_id", "date", "precip_mm", "tmax_f"]
REPORT_HEADER = ["approach", "method", "variable", "year", "metric", "value",
                 "n_periods", "fallback_rate", "seed"]
RESIDUAL_HEADER = ["approach", "method", "variable", "period", "station_id",
                   "predicted", "observed", "residual"]
MOMENT_HEADER = ["variable", "year", "metric", "value", "n_periods", "n_skipped"]
INDEX_HEADER = ["station_id", "period", "index", "value", "completeness"]
MODEL_HEADER = ["date", "sigma2", "alpha_km", "nugget", "converged", "iterations"]
PREDICTION_HEADER = ["date", "target_id", "method", "value", "variance", "fallback_used"]

FORMATS = ("csv", "markdown", "plot-data")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _float_or_none(text, what, row):
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise LoadError(f"unparsable {what} {text!r}", row) from None


def _reader(path, header):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    got = next(reader, None)
    if got is None or [h.strip() for h in got] != header:
        fh.close()
        raise LoadError(f"{path}: expected header {','.join(header)}, got {got}", 1)
    return fh, reader


def load_stations(path):
    fh, reader = _reader(path, STATION_HEADER)
    stations = {}
    with fh:
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise LoadError(f"expected 4 fields, got {len(row)}", row_no)
            sid = row[0].strip()
            lat = _float_or_none(row[1], "latitude", row_no)
            lon = _float_or_none(row[2], "longitude", row_no)
            elev = _float_or_none(row[3], "elevation", row_no)
            if lat is None or lon is None:
                raise LoadError("missing coordinate", row_no)
            if sid in stations:
                raise LoadError(f"duplicate station id {sid}", row_no)
            try:
                stations[sid] = Station(sid, lat, lon, elev)
            except (InvalidCoordinateError, ValueError) as exc:
                raise LoadError(str(exc), row_no) from None
    return [stations[k] for k in sorted(stations)]


def load_dataset(stations_path, observations_path, reject_negative=True) -> ObservationPanel:
    """Build a validated panel from the station and long-format observation CSVs.

    Rows may come in any order. Empty value fields are missing cells.
    Negative precipitation is a load error unless ``reject_negative`` is off
    (then it is left for :func:`validate_panel` to report).
    """
    stations = load_stations(stations_path)
    index = {s.id: i for i, s in enumerate(stations)}
    cells = {}
    fh, reader = _reader(observations_path, OBS_HEADER)
    with fh:
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise LoadError(f"expected 4 fields, got {len(row)}", row_no)
            sid = row[0].strip()
            if sid not in index:
                raise LoadError(f"unknown station {sid!r}", row_no)
            try:
                date = dt.date.fromisoformat(row[1].strip())
            except ValueError:
                raise LoadError(f"unparsable date {row[1]!r}", row_no) from None
            if (sid, date) in cells:
                raise LoadError(f"duplicate observation for ({sid}, {date.isoformat()})", row_no)
            p = _float_or_none(row[2], "precipitation", row_no)
            t = _float_or_none(row[3], "temperature", row_no)
            if p is not None and p < 0 and reject_negative:
                raise LoadError(f"negative precipitation {p} for {sid}", row_no)
            cells[(sid, date)] = (p, t)

    dates = sorted({d for _, d in cells})
    col = {d: j for j, d in enumerate(dates)}
    precip = np.full((len(stations), len(dates)), np.nan)
    tmax = np.full_like(precip, np.nan)
    for (sid, date), (p, t) in cells.items():
        i, j = index[sid], col[date]
        if p is not None:
            precip[i, j] = p
        if t is not None:
            tmax[i, j] = t
    panel = ObservationPanel(stations, dates, precip,
                             None if np.isnan(tmax).all() else tmax)
    report = validate_panel(panel)
    logger.info("loaded %d stations x %d dates\n%s", len(stations), len(dates),
                report.summary())
    return panel


def write_stations(stations, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_HEADER)
        for s in sorted(stations, key=lambda s: s.id):
            w.writerow([s.id, repr(s.lat), repr(s.lon), _fmt(s.elev)])


def write_observations(panel: ObservationPanel, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_HEADER)
        for i, s in enumerate(panel.stations):
            for j, d in enumerate(panel.dates):
                p = panel.precip[i, j]
                t = np.nan if panel.tmax is None else panel.tmax[i, j]
                w.writerow([s.id, d.isoformat(), _fmt(float(p)), _fmt(float(t))])


_METRIC_ORDER = {"RMSE": 0, "MAE": 1}


def _year_key(year):
    return (1, 0) if year == ALL_YEARS else (0, int(year))


def _row_key(r):
    a = APPROACHES.index(r.approach) if r.approach in APPROACHES else len(APPROACHES)
    m = METHODS.index(r.method) if r.method in METHODS else len(METHODS)
    return (a, r.approach, m, r.method, r.variable, _year_key(r.year),
            _METRIC_ORDER.get(r.metric, 9), r.metric)


def sorted_rows(rows):
    return sorted(rows, key=_row_key)


def write_report_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in sorted_rows(rows):
            w.writerow([r.approach, r.method, r.variable, r.year, r.metric,
                        _fmt(r.value), r.n_periods, _fmt(r.fallback_rate), r.seed])


def read_report_csv(path):
    fh, reader = _reader(path, REPORT_HEADER)
    with fh:
        return [
            ReportRow(a, m, v, y, metric, float(val), int(n), float(fb), int(seed))
            for a, m, v, y, metric, val, n, fb, seed in reader
        ]


def _year_columns(rows):
    years = sorted({r.year for r in rows}, key=_year_key)
    return years, ["all years" if y == ALL_YEARS else y for y in years]


def report_markdown(rows, seed=None):
    """One table per (variable, metric), rows per approach/method, columns per year."""
    rows = sorted_rows(rows)
    blocks = []
    if seed is not None:
        blocks.append(f"seed: {seed}\n")
    keys = []
    for r in rows:
        if (r.variable, r.metric) not in keys:
            keys.append((r.variable, r.metric))
    keys.sort(key=lambda k: (k[0], _METRIC_ORDER.get(k[1], 9)))
    for variable, metric in keys:
        sel = [r for r in rows if r.variable == variable and r.metric == metric]
        years, heads = _year_columns(sel)
        lines = [f"### {metric} ({variable})", "",
                 "| Approach | Method | " + " | ".join(heads) + " |",
                 "|---|---|" + "---|" * len(heads)]
        seen = []
        for r in sel:
            if (r.approach, r.method) not in seen:
                seen.append((r.approach, r.method))
        for approach, method in seen:
            cells = []
            for y in years:
                hit = [r for r in sel if r.approach == approach and r.method == method
                       and r.year == y]
                cells.append(f"{hit[0].value:.2f}" if hit else "")
            lines.append(f"| {approach} | {method} | " + " | ".join(cells) + " |")
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def write_residuals_csv(residuals, path):
    key = lambda r: (r.approach, r.method, r.variable, r.period, r.station_id)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESIDUAL_HEADER)
        for r in sorted(residuals, key=key):
            w.writerow([r.approach, r.method, r.variable, r.period, r.station_id,
                        _fmt(r.predicted), _fmt(r.observed),
                        _fmt(r.predicted - r.observed)])


def emit_report(report, out_dir, fmt="csv", basename="report"):
    """Write ``report`` to ``out_dir`` and return the written path."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    if not report.rows:
        raise ValueError("empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = out / f"{basename}.csv"
        write_report_csv(report.rows, path)
    elif fmt == "markdown":
        path = out / f"{basename}.md"
        path.write_text(report_markdown(report.rows, report.seed), encoding="utf-8")
    else:
        path = out / f"{basename}_residuals.csv"
        write_residuals_csv(report.residuals, path)
    return path


def _moment_key(r: MomentRow):
    return (r.variable, _year_key(r.year), r.metric)


def write_moments(rows, out_dir, fmt="csv", basename="moments"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sorted(rows, key=_moment_key)
    if fmt == "csv":
        path = out / f"{basename}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MOMENT_HEADER)
            for r in rows:
                w.writerow([r.variable, r.year, r.metric, _fmt(r.value), r.n_periods,
                            r.n_skipped])
        return path
    if fmt != "markdown":
        raise ValueError(f"unsupported moments format {fmt!r}")
    years = sorted({r.year for r in rows}, key=_year_key)
    heads = ["all years" if y == ALL_YEARS else y for y in years]
    lines = ["| Metric | Variable | " + " | ".join(heads) + " |",
             "|---|---|" + "---|" * len(heads)]
    for metric in ("skewness", "kurtosis"):
        for var in dict.fromkeys(r.variable for r in rows):
            cells = []
            for y in years:
                hit = [r for r in rows if r.variable == var and r.metric == metric
                       and r.year == y]
                cells.append(f"{hit[0].value:.2f}" if hit else "")
            lines.append(f"| {metric} | {var} | " + " | ".join(cells) + " |")
    path = out / f"{basename}.md"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_index_table(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_HEADER)
        for sid, period, kind, value, comp in table.rows():
            w.writerow([sid, period, kind, _fmt(value), _fmt(comp)])


def model_row(date, model, diagnostics):
    return [date, _fmt(model.sigma2), _fmt(model.alpha), _fmt(model.nugget),
            str(bool(diagnostics.converged)).lower(), diagnostics.iterations]


def write_models(rows, path):
    """``rows`` are ``(date, CovarianceModel, FitDiagnostics)`` triples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MODEL_HEADER)
        for date, model, diag in rows:
            w.writerow(model_row(date, model, diag))


def prediction_row(date, target_id, method, value, variance, fallback_used):
    return [date, target_id, method, _fmt(value), _fmt(variance),
            str(bool(fallback_used)).lower()]


def write_predictions(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PREDICTION_HEADER)
    for row in rows:
        w.writerow(prediction_row(*row))
