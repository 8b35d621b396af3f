"""Stations, distances and the station-by-date observation panel."""

from __future__ import annotations

import datetime as dt
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidCoordinateError, NoCandidatesError, PanelStructureError

EARTH_RADIUS_KM = 6371.0

HAVERSINE = "haversine"
EUCLIDEAN_DEGREES = "euclidean-degrees"
METRICS = (HAVERSINE, EUCLIDEAN_DEGREES)


def check_coordinate(lat, lon):
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise InvalidCoordinateError(f"non-finite coordinate ({lat}, {lon})")
    if not -90.0 <= lat <= 90.0:
        raise InvalidCoordinateError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise InvalidCoordinateError(f"longitude {lon} outside [-180, 180]")


@dataclass(frozen=True)
class Station:
    id: str
    lat: float
    lon: float
    elev: float | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("station id must be non-empty")
        check_coordinate(self.lat, self.lon)

    @property
    def coords(self):
        return (self.lat, self.lon)


def check_registry(stations: Iterable[Station]):
    counts = Counter(s.id for s in stations)
    dupes = sorted(k for k, v in counts.items() if v > 1)
    if dupes:
        raise ValueError(f"duplicate station ids: {', '.join(dupes)}")


def distance(a, b, metric=HAVERSINE):
    """Distance between two ``(lat, lon)`` pairs in degrees.

    Great-circle kilometres for ``haversine``; plain degrees in the
    ``(lat, lon)`` plane for ``euclidean-degrees``.
    """
    lat1, lon1 = a
    lat2, lon2 = b
    check_coordinate(lat1, lon1)
    check_coordinate(lat2, lon2)
    if metric == HAVERSINE:
        phi1 = math.radians(lat1)
        phi2 = math.radians(lat2)
        s_dphi = math.sin((phi2 - phi1) / 2.0)
        s_dlam = math.sin(math.radians(lon2 - lon1) / 2.0)
        h = s_dphi * s_dphi + math.cos(phi1) * math.cos(phi2) * s_dlam * s_dlam
        return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(h, 1.0)))
    if metric == EUCLIDEAN_DEGREES:
        return math.hypot(lat2 - lat1, lon2 - lon1)
    raise ValueError(f"unknown distance metric {metric!r}")


def cross_distances(lat1, lon1, lat2, lon2, metric=HAVERSINE):
    """Vectorised distances, shape ``(len(lat1), len(lat2))``."""
    lat1 = np.asarray(lat1, dtype=float)[:, None]
    lon1 = np.asarray(lon1, dtype=float)[:, None]
    lat2 = np.asarray(lat2, dtype=float)[None, :]
    lon2 = np.asarray(lon2, dtype=float)[None, :]
    if metric == HAVERSINE:
        phi1 = np.radians(lat1)
        phi2 = np.radians(lat2)
        s_dphi = np.sin((phi2 - phi1) / 2.0)
        s_dlam = np.sin(np.radians(lon2 - lon1) / 2.0)
        h = s_dphi**2 + np.cos(phi1) * np.cos(phi2) * s_dlam**2
        return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(h, 1.0)))
    if metric == EUCLIDEAN_DEGREES:
        return np.hypot(lat2 - lat1, lon2 - lon1)
    raise ValueError(f"unknown distance metric {metric!r}")


@dataclass(frozen=True)
class DistanceMatrix:
    ids: tuple
    values: np.ndarray
    metric: str = HAVERSINE

    def __post_init__(self):
        self.values.setflags(write=False)

    def index(self, station_id):
        return self.ids.index(station_id)

    def subset(self, rows, cols=None):
        rows = np.asarray(rows)
        cols = rows if cols is None else np.asarray(cols)
        return self.values[np.ix_(rows, cols)]


def distance_matrix(stations: Sequence[Station], metric=HAVERSINE) -> DistanceMatrix:
    n = len(stations)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = distance(stations[i].coords, stations[j].coords, metric)
            values[i, j] = values[j, i] = d
    return DistanceMatrix(tuple(s.id for s in stations), values, metric)


def nearest_station(target, registry: Sequence[Station], exclude=(), metric=HAVERSINE) -> Station:
    """Closest station to ``target``; ties go to the smallest id."""
    exclude = set(exclude)
    candidates = [s for s in registry if s.id not in exclude]
    if not candidates:
        raise NoCandidatesError("no candidate stations after exclusion")
    return min(candidates, key=lambda s: (distance(target, s.coords, metric), s.id))


@dataclass(frozen=True)
class ObservationPanel:
    """Daily observations, one row per station and one column per date.

    Missing cells are NaN in ``precip``/``tmax``; ``missing`` gives the mask.
    """

    stations: tuple
    dates: tuple
    precip: np.ndarray
    tmax: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "dates", tuple(self.dates))
        precip = np.array(self.precip, dtype=float)
        shape = (len(self.stations), len(self.dates))
        if precip.shape != shape:
            raise PanelStructureError(
                f"precip matrix has shape {precip.shape}, expected {shape}"
            )
        precip.setflags(write=False)
        object.__setattr__(self, "precip", precip)
        if self.tmax is not None:
            tmax = np.array(self.tmax, dtype=float)
            if tmax.shape != shape:
                raise PanelStructureError(
                    f"tmax matrix has shape {tmax.shape}, expected {shape}"
                )
            tmax.setflags(write=False)
            object.__setattr__(self, "tmax", tmax)
        for d in self.dates:
            if not isinstance(d, dt.date):
                raise PanelStructureError(f"not a calendar date: {d!r}")

    @property
    def missing(self):
        return np.isnan(self.precip)

    @property
    def station_ids(self):
        return tuple(s.id for s in self.stations)

    def sorted_by_id(self) -> ObservationPanel:
        order = sorted(range(len(self.stations)), key=lambda i: self.stations[i].id)
        if order == list(range(len(self.stations))):
            return self
        return ObservationPanel(
            [self.stations[i] for i in order],
            self.dates,
            self.precip[order],
            None if self.tmax is None else self.tmax[order],
        )

    @property
    def years(self):
        return sorted({d.year for d in self.dates})


@dataclass(frozen=True)
class ValidationReport:
    missing_counts: dict
    negative_cells: tuple
    duplicate_pairs: tuple
    date_order_violations: tuple = field(default=())

    @property
    def n_violations(self):
        return (
            len(self.negative_cells)
            + len(self.duplicate_pairs)
            + len(self.date_order_violations)
        )

    @property
    def ok(self):
        return self.n_violations == 0

    def summary(self):
        lines = [
            f"stations: {len(self.missing_counts)}",
            f"missing cells: {sum(self.missing_counts.values())}",
            f"negative values: {len(self.negative_cells)}",
            f"duplicate (station, date) pairs: {len(self.duplicate_pairs)}",
            f"date order violations: {len(self.date_order_violations)}",
        ]
        for sid, date in self.negative_cells[:20]:
            lines.append(f"  negative precip at {sid} {date.isoformat()}")
        return "\n".join(lines)


def validate_panel(panel: ObservationPanel) -> ValidationReport:
    n_st, n_d = len(panel.stations), len(panel.dates)
    if panel.precip.shape != (n_st, n_d):
        raise PanelStructureError("precip matrix does not match stations x dates")

    ids = panel.station_ids
    missing = panel.missing
    missing_counts = {sid: int(missing[i].sum()) for i, sid in enumerate(ids)}

    with np.errstate(invalid="ignore"):
        neg_i, neg_j = np.nonzero(panel.precip < 0)
    negative = tuple((ids[i], panel.dates[j]) for i, j in zip(neg_i, neg_j))

    dup_ids = [k for k, v in Counter(ids).items() if v > 1]
    dup_dates = [k for k, v in Counter(panel.dates).items() if v > 1]
    pairs = set()
    for sid in dup_ids:
        pairs.update((sid, d) for d in panel.dates)
    for d in dup_dates:
        pairs.update((sid, d) for sid in ids)
    duplicates = tuple(sorted(pairs))

    order = tuple(
        panel.dates[j]
        for j in range(1, n_d)
        if panel.dates[j] <= panel.dates[j - 1]
    )
    return ValidationReport(missing_counts, negative, duplicates, order)
