"""Precipitation indexes: annual consecutive dry days and monthly 5-day maxima."""

from __future__ import annotations

import calendar
import datetime as dt
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import PeriodError, WxkrigError

CDD = "CDD"
MFP = "MFP"
INDEX_KINDS = (CDD, MFP)

STRICT = "strict"
BREAK_RUN = "break-run"
POLICIES = (STRICT, BREAK_RUN)

DRY_THRESHOLD_MM = 1.0
MFP_WINDOW = 5


class MissingValueError(WxkrigError, ValueError):
    pass


def is_dry_day(p, threshold=DRY_THRESHOLD_MM, inclusive=False) -> bool:
    """``p < threshold``, or ``p <= threshold`` when ``inclusive``."""
    if p is None or np.isnan(p):
        raise MissingValueError("missing precipitation value")
    return bool(p <= threshold) if inclusive else bool(p < threshold)


def max_dry_run(precip, threshold=DRY_THRESHOLD_MM, inclusive=False) -> int:
    """Longest run of consecutive dry days; missing days end a run."""
    p = np.asarray(precip, dtype=float)
    with np.errstate(invalid="ignore"):
        dry = (p <= threshold) if inclusive else (p < threshold)
    dry &= ~np.isnan(p)
    if not dry.any():
        return 0
    edges = np.diff(np.concatenate(([0], dry.view(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return int((ends - starts).max())


def max_window_sum(precip, width=MFP_WINDOW) -> float:
    """Largest sum over ``width`` consecutive days; windows with gaps are skipped.

    Returns NaN when no complete window exists.
    """
    p = np.asarray(precip, dtype=float)
    if len(p) < width:
        return float("nan")
    sums = sliding_window_view(p, width).sum(axis=1)
    if np.isnan(sums).all():
        return float("nan")
    return float(np.nanmax(sums))


@dataclass(frozen=True)
class DailySeries:
    dates: tuple
    precip: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        p = np.array(self.precip, dtype=float)
        if len(p) != len(self.dates):
            raise ValueError("dates and precip differ in length")
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise PeriodError(f"dates not consecutive at {a} -> {b}")
        p.setflags(write=False)
        object.__setattr__(self, "precip", p)

    @property
    def completeness(self):
        if not len(self.precip):
            return 0.0
        return float((~np.isnan(self.precip)).mean())


@dataclass(frozen=True)
class IndexValue:
    period: str
    value: float | None
    completeness: float
    index: str = ""


def _check_year(series):
    if not series.dates:
        raise PeriodError("empty series")
    first, last = series.dates[0], series.dates[-1]
    if not (first == dt.date(first.year, 1, 1) and last == dt.date(first.year, 12, 31)):
        raise PeriodError(f"series {first}..{last} is not one calendar year")
    return str(first.year)


def _check_month(series):
    if not series.dates:
        raise PeriodError("empty series")
    first, last = series.dates[0], series.dates[-1]
    ndays = calendar.monthrange(first.year, first.month)[1]
    if not (first.day == 1 and last == dt.date(first.year, first.month, ndays)):
        raise PeriodError(f"series {first}..{last} is not one calendar month")
    return f"{first.year:04d}-{first.month:02d}"


def _cdd_value(p, policy, threshold, inclusive):
    if policy == STRICT and np.isnan(p).any():
        return None
    if policy not in POLICIES:
        raise ValueError(f"unknown missing-day policy {policy!r}")
    return float(max_dry_run(p, threshold, inclusive))


def _mfp_value(p, policy):
    if policy == STRICT and np.isnan(p).any():
        return None
    if policy not in POLICIES:
        raise ValueError(f"unknown missing-day policy {policy!r}")
    v = max_window_sum(p)
    return None if np.isnan(v) else v


def cdd(series: DailySeries, policy=STRICT, threshold=DRY_THRESHOLD_MM,
        inclusive=False) -> IndexValue:
    label = _check_year(series)
    value = _cdd_value(series.precip, policy, threshold, inclusive)
    return IndexValue(label, value, series.completeness, CDD)


def mfp(series: DailySeries, policy=STRICT) -> IndexValue:
    label = _check_month(series)
    return IndexValue(label, _mfp_value(series.precip, policy), series.completeness, MFP)


def _calendar_span(dates):
    start = dt.date(min(dates).year, 1, 1)
    end = dt.date(max(dates).year, 12, 31)
    return start, (end - start).days + 1


def _periods(kind, dates):
    if kind == CDD:
        return sorted({(d.year,) for d in dates})
    return sorted({(d.year, d.month) for d in dates})


def _period_slice(kind, key, start):
    if kind == CDD:
        a = dt.date(key[0], 1, 1)
        b = dt.date(key[0], 12, 31)
        label = f"{key[0]:04d}"
    else:
        ndays = calendar.monthrange(*key)[1]
        a = dt.date(key[0], key[1], 1)
        b = dt.date(key[0], key[1], ndays)
        label = f"{key[0]:04d}-{key[1]:02d}"
    return label, slice((a - start).days, (b - start).days + 1)


def index_matrix(values, dates, kind, policy=STRICT, threshold=DRY_THRESHOLD_MM,
                 inclusive=False):
    """Index values for each row of a station x date matrix.

    Dates absent from ``dates`` count as missing days. Returns
    ``(labels, values, completeness)`` with NaN for missing index values.
    """
    kind = kind.upper()
    if kind not in INDEX_KINDS:
        raise ValueError(f"unknown index {kind!r}")
    values = np.asarray(values, dtype=float)
    start, ndays = _calendar_span(dates)
    full = np.full((values.shape[0], ndays), np.nan)
    cols = np.array([(d - start).days for d in dates], dtype=int)
    full[:, cols] = values

    keys = _periods(kind, dates)
    labels = []
    out = np.full((values.shape[0], len(keys)), np.nan)
    comp = np.zeros_like(out)
    for k, key in enumerate(keys):
        label, sl = _period_slice(kind, key, start)
        labels.append(label)
        block = full[:, sl]
        comp[:, k] = (~np.isnan(block)).mean(axis=1)
        for i in range(block.shape[0]):
            if kind == CDD:
                v = _cdd_value(block[i], policy, threshold, inclusive)
            else:
                v = _mfp_value(block[i], policy)
            if v is not None:
                out[i, k] = v
    return tuple(labels), out, comp


@dataclass(frozen=True)
class IndexTable:
    kind: str
    station_ids: tuple
    periods: tuple
    values: np.ndarray
    completeness: np.ndarray
    policy: str = STRICT

    def year_of(self, k):
        return int(self.periods[k][:4])

    def rows(self):
        for i, sid in enumerate(self.station_ids):
            for k, period in enumerate(self.periods):
                v = self.values[i, k]
                yield (sid, period, self.kind, None if np.isnan(v) else float(v),
                       float(self.completeness[i, k]))


def index_panel(panel, kind, policy=STRICT, threshold=DRY_THRESHOLD_MM,
                inclusive=False) -> IndexTable:
    labels, values, comp = index_matrix(
        panel.precip, panel.dates, kind, policy, threshold, inclusive
    )
    return IndexTable(kind.upper(), panel.station_ids, labels, values, comp, policy)
