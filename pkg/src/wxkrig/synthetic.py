"""Synthetic station layouts and fields for tests and demos."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .covariance import CovarianceModel, covariance_matrix
from .geo import HAVERSINE, ObservationPanel, Station, distance_matrix

CENTRAL_US = ((32.0, 46.0), (-100.0, -80.0))


def jittered_sites(n=138, seed=0, box=CENTRAL_US, jitter=0.35):
    """``n`` stations on a jittered grid covering ``box``; ids ``S000``..."""
    rng = np.random.default_rng(seed)
    (lat0, lat1), (lon0, lon1) = box
    side = int(np.ceil(np.sqrt(n)))
    lat_c = np.linspace(lat0, lat1, side)
    lon_c = np.linspace(lon0, lon1, side)
    grid = np.array([(a, b) for a in lat_c for b in lon_c])
    keep = np.sort(rng.choice(len(grid), size=n, replace=False))
    step = np.array([(lat1 - lat0) / max(side - 1, 1), (lon1 - lon0) / max(side - 1, 1)])
    pts = grid[keep] + rng.uniform(-jitter, jitter, size=(n, 2)) * step
    pts[:, 0] = np.clip(pts[:, 0], -90, 90)
    pts[:, 1] = np.clip(pts[:, 1], -180, 180)
    elev = rng.uniform(100.0, 1500.0, size=n)
    return [Station(f"S{i:03d}", float(a), float(b), float(e))
            for i, ((a, b), e) in enumerate(zip(pts, elev))]


def random_sites(n, seed, box=((35.0, 45.0), (-100.0, -90.0))):
    rng = np.random.default_rng(seed)
    (lat0, lat1), (lon0, lon1) = box
    lat = rng.uniform(lat0, lat1, n)
    lon = rng.uniform(lon0, lon1, n)
    elev = rng.uniform(0.0, 2000.0, n)
    return [Station(f"R{i:03d}", float(a), float(b), float(e))
            for i, (a, b, e) in enumerate(zip(lat, lon, elev))]


def gaussian_fields(stations, model: CovarianceModel, n_fields, seed=0, mean=0.0,
                    metric=HAVERSINE):
    """Draws of a zero-mean-plus-``mean`` Gaussian field, shape ``(n_fields, n)``."""
    D = distance_matrix(stations, metric).values
    C = covariance_matrix(model, D)
    L = np.linalg.cholesky(C + 1e-10 * model.sill * np.eye(len(stations)))
    rng = np.random.default_rng(seed)
    return mean + rng.standard_normal((n_fields, len(stations))) @ L.T


def daily_dates(start, end):
    n = (end - start).days + 1
    return [start + dt.timedelta(days=i) for i in range(n)]


def precipitation_panel(stations, start=dt.date(1990, 1, 1), end=dt.date(1991, 12, 31),
                        seed=0, model=CovarianceModel(1.0, 400.0), wet_quantile=0.6,
                        scale=6.0):
    """Zero-inflated, right-skewed daily precipitation with spatial correlation.

    Each day a latent Gaussian field is thresholded at its ``wet_quantile``;
    wet amounts grow quadratically with the exceedance.
    """
    dates = daily_dates(start, end)
    g = gaussian_fields(stations, model, len(dates), seed)
    q = np.quantile(g, wet_quantile)
    precip = np.where(g > q, scale * (g - q) ** 2 * 4.0, 0.0)
    precip = np.round(precip, 1)
    tmax = 60.0 + 20.0 * np.sin(np.linspace(0, 2 * np.pi * len(dates) / 365.25, len(dates)))
    tmax = tmax[:, None] + 5.0 * gaussian_fields(stations, model, len(dates), seed + 1)
    return ObservationPanel(stations, dates, precip.T, np.round(tmax.T, 1))
