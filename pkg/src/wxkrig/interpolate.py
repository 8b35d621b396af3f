"""Point predictors: NN, IDW, ordinary, universal and trans-Gaussian kriging.

Every predictor works on a :class:`FieldSnapshot` (one value per station,
NaN for missing). Missing stations are dropped before any method runs.
Kriging uses all remaining stations (global neighbourhood).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as spl

from .covariance import (
    MAX_ITER,
    MODEL,
    REL_TOL,
    CovarianceModel,
    check_design,
    covariance_matrix,
    empirical_semivariogram,
    factorize,
    fit_spherical,
)
from .errors import (
    DomainError,
    InsufficientDataError,
    KrigingFailure,
    MissingCovariateError,
    NoDataError,
    NonConvergenceError,
    SingularDesignError,
)
from .geo import HAVERSINE, Station, check_coordinate, cross_distances

logger = logging.getLogger(__name__)

METHODS = ("NN", "IDW", "OK", "UK", "TGK")
KRIGING_METHODS = ("OK", "UK", "TGK")
COINCIDENT_KM = 1e-9


def canonical_method(name):
    m = str(name).upper()
    if m not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
    return m


@dataclass(frozen=True)
class FieldSnapshot:
    stations: tuple
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        values = np.array(self.values, dtype=float).reshape(-1)
        if len(values) != len(self.stations):
            raise ValueError(
                f"{len(values)} values for {len(self.stations)} stations"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def present(self):
        return ~np.isnan(self.values)

    def dropna(self) -> FieldSnapshot:
        mask = self.present
        if mask.all():
            return self
        return FieldSnapshot(
            [s for s, keep in zip(self.stations, mask) if keep],
            self.values[mask],
            self.label,
        )

    @property
    def lats(self):
        return np.array([s.lat for s in self.stations], dtype=float)

    @property
    def lons(self):
        return np.array([s.lon for s in self.stations], dtype=float)

    @property
    def ids(self):
        return [s.id for s in self.stations]


@dataclass(frozen=True)
class KrigingSolution:
    prediction: float
    variance: float
    lagrange: float | np.ndarray
    weights: np.ndarray
    trend: float | np.ndarray


@dataclass(frozen=True)
class TransformSpec:
    """Box-Cox power transform with parameter ``lam``."""

    lam: float = 1.0 / 3.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"Box-Cox lambda must lie in [0, 1], got {self.lam}")

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < 0):
            raise DomainError("Box-Cox transform needs z >= 0")
        if self.lam == 0.0:
            if np.any(z == 0):
                raise DomainError("log transform needs z > 0")
            return np.log(z)
        return (np.power(z, self.lam) - 1.0) / self.lam

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.lam == 0.0:
            return np.exp(y)
        base = np.maximum(self.lam * y + 1.0, 0.0)
        return np.power(base, 1.0 / self.lam)

    def inverse_d2(self, y):
        """Second derivative of :meth:`inverse`."""
        y = np.asarray(y, dtype=float)
        if self.lam == 0.0:
            return np.exp(y)
        if self.lam == 1.0:
            return np.zeros_like(y)
        base = np.maximum(self.lam * y + 1.0, 0.0)
        return (1.0 - self.lam) * np.power(base, 1.0 / self.lam - 2.0)


def boxcox(z, spec: TransformSpec = TransformSpec()):
    out = spec.forward(z)
    return float(out) if np.ndim(out) == 0 else out


def inv_boxcox(y, spec: TransformSpec = TransformSpec()):
    out = spec.inverse(y)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class InterpOptions:
    p: float = 2.0
    n_max: int = 20
    transform: TransformSpec = field(default_factory=TransformSpec)
    metric: str = HAVERSINE
    n_bins: int = 15
    cutoff: float | None = None
    fit_nugget: bool = False
    weighting: str = MODEL
    max_iter: int = MAX_ITER
    tol: float = REL_TOL


DEFAULT_OPTIONS = InterpOptions()


def _targets(targets):
    t = np.asarray(targets, dtype=float).reshape(-1, 2)
    for lat, lon in t:
        check_coordinate(lat, lon)
    return t[:, 0], t[:, 1]


def _id_rank(ids):
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    rank = np.empty(len(ids), dtype=int)
    rank[order] = np.arange(len(ids))
    return rank


def _idw_batch(values, ids, D_cross, p, n_max):
    """IDW for each column of ``D_cross`` (stations x targets)."""
    n, m = D_cross.shape
    rank = _id_rank(ids)
    k = min(int(n_max), n)
    out = np.empty(m)
    for j in range(m):
        d = D_cross[:, j]
        order = np.lexsort((rank, d))[:k]
        dn = d[order]
        if dn[0] < COINCIDENT_KM:
            out[j] = values[order[0]]
            continue
        w = 1.0 / dn**p
        w = w / w.sum()
        out[j] = w @ values[order]
    return out


def nn_predict(snapshot: FieldSnapshot, target, metric=HAVERSINE) -> float:
    """Value of the nearest station with a present observation."""
    snap = snapshot.dropna()
    if not snap.stations:
        raise NoDataError("no present values in snapshot")
    lat, lon = _targets(target)
    D = cross_distances(snap.lats, snap.lons, lat, lon, metric)
    rank = _id_rank(snap.ids)
    i = np.lexsort((rank, D[:, 0]))[0]
    return float(snap.values[i])


def idw_predict(snapshot: FieldSnapshot, target, p=2.0, n_max=20, metric=HAVERSINE) -> float:
    """Inverse-distance weighted mean of the ``n_max`` nearest present stations."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    snap = snapshot.dropna()
    if not snap.stations:
        raise NoDataError("no present values in snapshot")
    lat, lon = _targets(target)
    D = cross_distances(snap.lats, snap.lons, lat, lon, metric)
    return float(_idw_batch(snap.values, snap.ids, D, p, n_max)[0])


def _kriging_core(z, X, X0, C, c, model):
    """Universal kriging for all target columns of ``c``.

    ``X`` is the station design (n x p), ``X0`` the target design (m x p).
    The Lagrange multipliers follow the variogram-form convention
    ``C @ w = c + X @ lagrange``.
    """
    factor = factorize(C, model)
    CiX = spl.cho_solve(factor, X)
    Ciz = spl.cho_solve(factor, z)
    Cic = spl.cho_solve(factor, c)
    A = X.T @ CiX
    try:
        A_cf = spl.cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(str(exc)) from exc
    beta = spl.cho_solve(A_cf, X.T @ Ciz)
    r = X0.T - X.T @ Cic
    K = spl.cho_solve(A_cf, r)
    weights = Cic + CiX @ K
    pred = X0 @ beta + Cic.T @ (z - X @ beta)
    var = model.sill - np.einsum("ij,ij->j", c, Cic) + np.einsum("ij,ij->j", r, K)
    return pred, var, K, weights, beta


def _kriging_inputs(snapshot, target, metric):
    snap = snapshot.dropna()
    lat, lon = _targets(target)
    D = cross_distances(snap.lats, snap.lons, snap.lats, snap.lons, metric)
    np.fill_diagonal(D, 0.0)
    Dc = cross_distances(snap.lats, snap.lons, lat, lon, metric)
    return snap, D, Dc


def ok_predict(snapshot: FieldSnapshot, model: CovarianceModel, target,
               metric=HAVERSINE) -> KrigingSolution:
    """Ordinary kriging at one target with a given covariance model.

    The prediction is ``mu + c' C^-1 (z - mu 1)`` with ``mu`` the GLS mean.
    """
    snap, D, Dc = _kriging_inputs(snapshot, target, metric)
    n = len(snap.values)
    if n < 2:
        raise InsufficientDataError("ordinary kriging needs >= 2 present values")
    ones = np.ones((n, 1))
    pred, var, K, w, beta = _kriging_core(
        snap.values, ones, np.ones((1, 1)),
        covariance_matrix(model, D), covariance_matrix(model, Dc), model,
    )
    return KrigingSolution(float(pred[0]), float(var[0]), float(K[0, 0]),
                           w[:, 0], float(beta[0]))


def location_covariates(stations, target=None, target_elev=None):
    """Rows of ``(lat, lon, elev)`` for each station, plus the target row."""
    rows = [
        (s.lat, s.lon, np.nan if s.elev is None else s.elev) for s in stations
    ]
    if target is not None:
        rows.append((target[0], target[1],
                     np.nan if target_elev is None else target_elev))
    return np.array(rows, dtype=float).reshape(len(rows), 3)


def standardized_design(cov_train, cov_targets):
    """Intercept plus z-scored covariates, scaled by station statistics."""
    cov_train = np.asarray(cov_train, dtype=float)
    cov_targets = np.asarray(cov_targets, dtype=float)
    if cov_train.ndim != 2 or cov_targets.ndim != 2:
        raise ValueError("covariates must be 2-d")
    if np.isnan(cov_train).any() or np.isnan(cov_targets).any():
        raise MissingCovariateError("missing covariate value")
    n, m = len(cov_train), len(cov_targets)
    if cov_train.shape[1] == 0:
        return np.ones((n, 1)), np.ones((m, 1))
    mean = cov_train.mean(axis=0)
    std = cov_train.std(axis=0)
    if np.any(std == 0):
        raise SingularDesignError("constant covariate column")
    X = np.column_stack([np.ones(n), (cov_train - mean) / std])
    X0 = np.column_stack([np.ones(m), (cov_targets - mean) / std])
    return check_design(X), X0


def uk_predict(snapshot: FieldSnapshot, covariates, model: CovarianceModel,
               target, metric=HAVERSINE) -> KrigingSolution:
    """Universal kriging at one target.

    ``covariates`` has one row per snapshot station followed by the target
    row; an intercept is always added. Rows of missing stations are dropped
    together with their values.
    """
    cov = np.asarray(covariates, dtype=float)
    n_all = len(snapshot.stations)
    if cov.ndim != 2 or cov.shape[0] != n_all + 1:
        raise ValueError(
            f"covariates need {n_all + 1} rows (stations + target), got {cov.shape}"
        )
    present = snapshot.present
    X, X0 = standardized_design(cov[:n_all][present], cov[n_all:])
    snap, D, Dc = _kriging_inputs(snapshot, target, metric)
    if len(snap.values) < X.shape[1] + 1:
        raise InsufficientDataError("too few present values for the trend")
    pred, var, K, w, beta = _kriging_core(
        snap.values, X, X0,
        covariance_matrix(model, D), covariance_matrix(model, Dc), model,
    )
    return KrigingSolution(float(pred[0]), float(var[0]), K[:, 0], w[:, 0], beta)


def fit_model(values, D, options: InterpOptions = DEFAULT_OPTIONS, X=None):
    """Fit a spherical model to ``values`` (or to their OLS residuals on ``X``).

    Raises a :class:`KrigingFailure` subclass when the fit is degenerate or
    does not converge.
    """
    z = np.asarray(values, dtype=float)
    if X is not None and X.shape[1] > 1:
        beta, *_ = np.linalg.lstsq(X, z, rcond=None)
        z = z - X @ beta
    emp = empirical_semivariogram(z, D, options.cutoff, options.n_bins)
    model, diag = fit_spherical(emp, fit_nugget=options.fit_nugget,
                                max_iter=options.max_iter, tol=options.tol,
                                weighting=options.weighting)
    if not diag.converged:
        raise NonConvergenceError(
            f"covariance fit did not converge in {diag.iterations} iterations"
        )
    return model


def tgk_backtransform(y_hat, mean_y, var_y, lagrange_y, spec: TransformSpec = TransformSpec()):
    """Bias-corrected back-transform, clamped at zero."""
    z = spec.inverse(y_hat) + spec.inverse_d2(mean_y) * (np.asarray(var_y) / 2.0 - lagrange_y)
    z = np.maximum(z, 0.0)
    return float(z) if np.ndim(z) == 0 else z


def tgk_predict(snapshot: FieldSnapshot, target, spec: TransformSpec = TransformSpec(),
                model: CovarianceModel | None = None,
                options: InterpOptions = DEFAULT_OPTIONS) -> float:
    """Trans-Gaussian kriging at one target.

    Values are Box-Cox transformed, kriged with ordinary kriging (fitting a
    spherical model on the transformed scale unless ``model`` is given) and
    mapped back with the delta-method correction.
    """
    snap = snapshot.dropna()
    if len(snap.values) < 2:
        raise InsufficientDataError("trans-Gaussian kriging needs >= 2 present values")
    y = spec.forward(snap.values)
    tsnap = FieldSnapshot(snap.stations, y, snap.label)
    if model is None:
        D = cross_distances(snap.lats, snap.lons, snap.lats, snap.lons, options.metric)
        np.fill_diagonal(D, 0.0)
        model = fit_model(y, D, options)
    sol = ok_predict(tsnap, model, target, options.metric)
    return tgk_backtransform(sol.prediction, sol.trend, sol.variance, sol.lagrange, spec)


class Prediction(NamedTuple):
    values: np.ndarray
    fallback_used: bool


def predict_targets(method, values, ids, D, D_cross, options=DEFAULT_OPTIONS,
                    cov_train=None, cov_targets=None, model=None) -> Prediction:
    """Batch prediction engine shared by the single-target API and CV.

    Parameters
    ----------
    method : str
        One of ``NN``, ``IDW``, ``OK``, ``UK``, ``TGK``.
    values : ndarray
        Present station values (no NaN).
    ids : sequence of str
        Station ids, used for deterministic tie-breaking.
    D, D_cross : ndarray
        Station-station and station-target distances.
    cov_train, cov_targets : ndarray, optional
        Raw ``(lat, lon, elev)`` covariates for UK.
    model : CovarianceModel, optional
        Skip fitting and use this model (on the transformed scale for TGK).

    Kriging failures fall back to IDW; the second element of the result
    says whether that happened.
    """
    method = canonical_method(method)
    z = np.asarray(values, dtype=float)
    if len(z) == 0:
        raise NoDataError("no present values")
    if method == "NN":
        return Prediction(_idw_batch(z, ids, D_cross, options.p, 1), False)
    if method == "IDW":
        return Prediction(_idw_batch(z, ids, D_cross, options.p, options.n_max), False)
    if method == "TGK" and np.any(z < 0):
        raise DomainError("trans-Gaussian kriging needs non-negative values")
    try:
        return Prediction(
            _krige(method, z, D, D_cross, options, cov_train, cov_targets, model),
            False,
        )
    except KrigingFailure as exc:
        logger.debug("%s failed (%s); falling back to IDW", method, exc)
        return Prediction(_idw_batch(z, ids, D_cross, options.p, options.n_max), True)


def _krige(method, z, D, D_cross, options, cov_train, cov_targets, model):
    n, m = D_cross.shape
    if method == "UK":
        if cov_train is None or cov_targets is None:
            raise MissingCovariateError("universal kriging needs covariates")
        X, X0 = standardized_design(cov_train, cov_targets)
    else:
        X, X0 = np.ones((n, 1)), np.ones((m, 1))
    if n < X.shape[1] + 1:
        raise InsufficientDataError(f"{method} needs more than {X.shape[1]} values")
    y = options.transform.forward(z) if method == "TGK" else z
    if model is None:
        model = fit_model(y, D, options, X if method == "UK" else None)
    C = covariance_matrix(model, D)
    c = covariance_matrix(model, D_cross)
    pred, var, K, _, beta = _kriging_core(y, X, X0, C, c, model)
    if method == "TGK":
        return tgk_backtransform(pred, beta[0], var, K[0], options.transform)
    return pred


def with_fallback(method, snapshot: FieldSnapshot, target, options=DEFAULT_OPTIONS,
                  target_elev=None, model=None):
    """Predict at one target, substituting IDW if kriging fails.

    Returns ``(value, tag)`` with tag ``"primary"`` or ``"fallback=idw"``.
    """
    snap = snapshot.dropna()
    if not snap.stations:
        raise NoDataError("no present values in snapshot")
    lat, lon = _targets(target)
    D = cross_distances(snap.lats, snap.lons, snap.lats, snap.lons, options.metric)
    np.fill_diagonal(D, 0.0)
    Dc = cross_distances(snap.lats, snap.lons, lat, lon, options.metric)
    cov_train = cov_targets = None
    if canonical_method(method) == "UK":
        cov_train = location_covariates(snap.stations)
        cov_targets = location_covariates([], (lat[0], lon[0]), target_elev)
    vals, fell_back = predict_targets(method, snap.values, snap.ids, D, Dc, options,
                                      cov_train, cov_targets, model)
    return float(vals[0]), ("fallback=idw" if fell_back else "primary")


def station_from_target(target_id, target, elev=None):
    return Station(target_id, float(target[0]), float(target[1]), elev)


def predict_point(method, snapshot: FieldSnapshot, target, options=DEFAULT_OPTIONS,
                  target_elev=None):
    """``(value, variance, fallback_used)`` at one target.

    ``variance`` is the kriging variance for OK/UK and ``None`` otherwise.
    """
    method = canonical_method(method)
    snap = snapshot.dropna()
    if not snap.stations:
        raise NoDataError("no present values in snapshot")
    if method in ("NN", "IDW", "TGK"):
        value, tag = with_fallback(method, snap, target, options, target_elev)
        return value, None, tag != "primary"
    lat, lon = _targets(target)
    try:
        D = cross_distances(snap.lats, snap.lons, snap.lats, snap.lons, options.metric)
        np.fill_diagonal(D, 0.0)
        if method == "OK":
            model = fit_model(snap.values, D, options)
            sol = ok_predict(snap, model, (lat[0], lon[0]), options.metric)
        else:
            cov = location_covariates(snap.stations, (lat[0], lon[0]), target_elev)
            X, _ = standardized_design(cov[:-1], cov[-1:])
            model = fit_model(snap.values, D, options, X)
            sol = uk_predict(snap, cov, model, (lat[0], lon[0]), options.metric)
        return sol.prediction, sol.variance, False
    except KrigingFailure as exc:
        logger.info("%s failed (%s); using IDW", method, exc)
        value = idw_predict(snap, (lat[0], lon[0]), options.p, options.n_max, options.metric)
        return value, None, True
