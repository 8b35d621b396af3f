"""Spherical covariance model, empirical semivariograms and fitting.

The fitter is a Levenberg-Marquardt style damped Newton loop on the
log-parameters. It keeps the residual-curvature part of the Hessian, since
plain Gauss-Newton only converges linearly when the fit leaves large
residuals (the usual case for noisy daily fields). The objective is the
weighted squared misfit between the model semivariogram and the binned
Matheron estimate. By default bins are weighted by ``N_b / gamma(h_b)**2``
at the current parameters; weighting by the empirical ``gamma_hat_b``
instead is available but lets sparse bins with tiny estimates dominate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spl

from .errors import (
    DegenerateFieldError,
    DomainError,
    InsufficientBinsError,
    InsufficientDataError,
    NumericalError,
    SingularDesignError,
)

MAX_ITER = 50
REL_TOL = 1e-6
WEIGHT_FLOOR = 1e-12
JITTER = 1e-10
EMPIRICAL, MODEL = "empirical", "model"
WEIGHTINGS = (EMPIRICAL, MODEL)


@dataclass(frozen=True)
class CovarianceModel:
    sigma2: float
    alpha: float
    nugget: float = 0.0
    kind: str = "spherical"

    def __post_init__(self):
        if self.kind != "spherical":
            raise ValueError(f"unsupported covariance family {self.kind!r}")
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError(f"partial sill must be >= 0, got {self.sigma2}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"range must be > 0, got {self.alpha}")
        if not (np.isfinite(self.nugget) and self.nugget >= 0):
            raise ValueError(f"nugget must be >= 0, got {self.nugget}")

    @property
    def sill(self):
        return self.sigma2 + self.nugget

    def covariance(self, h):
        """Covariance at lag(s) ``h``; the nugget only counts at exactly 0."""
        h = np.asarray(h, dtype=float)
        if np.any(h < 0):
            raise DomainError("lag must be non-negative")
        u = np.minimum(h / self.alpha, 1.0)
        c = self.sigma2 * (1.0 - u * (1.5 - 0.5 * u * u))
        if self.nugget > 0:
            c = c + np.where(h == 0.0, self.nugget, 0.0)
        return c

    def semivariance(self, h):
        return self.sill - self.covariance(h)


def covariance_eval(model: CovarianceModel, lag: float) -> float:
    return float(model.covariance(lag))


def _spherical_shape(u):
    # normalised semivariogram 1.5u - 0.5u^3, capped at 1 beyond the range
    u = np.minimum(u, 1.0)
    return u * (1.5 - 0.5 * u * u)


@dataclass(frozen=True)
class EmpiricalVariogram:
    lags: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray
    cutoff: float | None = None
    variance: float | None = None

    def __post_init__(self):
        for name in ("lags", "gamma", "counts"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.lags) == len(self.gamma) == len(self.counts)):
            raise ValueError("lags, gamma and counts must have equal length")
        if np.any(np.diff(self.lags) <= 0):
            raise ValueError("lags must be strictly increasing")
        if np.any(self.counts < 1) or np.any(self.gamma < 0):
            raise ValueError("bins need >= 1 pair and non-negative semivariance")

    @property
    def bins(self):
        return list(zip(self.lags.tolist(), self.gamma.tolist(), self.counts.astype(int).tolist()))

    def __len__(self):
        return len(self.lags)


def _as_array(distances):
    return getattr(distances, "values", distances)


def empirical_semivariogram(values, distances, cutoff=None, n_bins=15) -> EmpiricalVariogram:
    """Matheron estimate on ``n_bins`` equal-width lag classes up to ``cutoff``.

    ``cutoff`` defaults to a third of the largest pairwise distance between
    stations with a present value. Empty classes are dropped.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    z = np.asarray(values, dtype=float)
    D = np.asarray(_as_array(distances), dtype=float)
    present = ~np.isnan(z)
    if present.sum() < 2:
        raise InsufficientDataError("need at least 2 present values")
    z = z[present]
    D = D[np.ix_(present, present)]
    iu, ju = np.triu_indices(len(z), k=1)
    d = D[iu, ju]
    sq = (z[iu] - z[ju]) ** 2
    if cutoff is None:
        cutoff = d.max() / 3.0
    if not cutoff > 0:
        raise InsufficientDataError("all stations are co-located")

    keep = d <= cutoff
    d, sq = d[keep], sq[keep]
    width = cutoff / n_bins
    idx = np.minimum((d / width).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    lag_sum = np.bincount(idx, weights=d, minlength=n_bins)
    sq_sum = np.bincount(idx, weights=sq, minlength=n_bins)
    nz = counts > 0
    return EmpiricalVariogram(
        lags=lag_sum[nz] / counts[nz],
        gamma=sq_sum[nz] / (2.0 * counts[nz]),
        counts=counts[nz],
        cutoff=float(cutoff),
        variance=float(np.var(z)),
    )


@dataclass(frozen=True)
class FitDiagnostics:
    converged: bool
    iterations: int
    delta: float
    objective: float
    history: tuple = ()


def _model_derivatives(h, s2, a, nug, fit_nugget):
    """Model semivariogram with first and second derivatives in log-parameters."""
    u = h / a
    inside = u < 1.0
    g = _spherical_shape(u)
    dg = np.where(inside, 1.5 - 1.5 * u * u, 0.0)
    d2g = np.where(inside, -3.0 * u, 0.0)
    m = nug + s2 * g
    m_s = s2 * g
    m_a = -s2 * dg * u
    first = [m_s, m_a] + ([nug * np.ones_like(h)] if fit_nugget else [])
    k = len(first)
    second = [[np.zeros_like(h)] * k for _ in range(k)]
    second[0][0] = m_s
    second[0][1] = second[1][0] = m_a
    second[1][1] = s2 * (d2g * u * u + dg * u)
    if fit_nugget:
        second[2][2] = first[2]
    return m, first, second


def fit_spherical(emp: EmpiricalVariogram, init=None, fit_nugget=False,
                  max_iter=MAX_ITER, tol=REL_TOL, weighting=MODEL):
    """Weighted least-squares fit of a spherical semivariogram.

    Parameters
    ----------
    emp : EmpiricalVariogram
        Binned semivariances, at least three bins.
    init : tuple, optional
        Starting ``(sigma2, alpha, nugget)``. Defaults to the sample
        variance, half the cutoff and no nugget.
    fit_nugget : bool
        Estimate the nugget too; otherwise it stays fixed at ``init[2]``.
    weighting : {"model", "empirical"}
        ``model`` weights bin b by ``N_b / gamma(h_b)**2`` evaluated at the
        current parameters. ``empirical`` uses ``N_b / gamma_hat_b**2``
        (floored at 1e-12), which is sensitive to sparse bins with tiny
        estimates.

    Returns
    -------
    (CovarianceModel, FitDiagnostics)
        ``converged`` is true when the relative parameter update fell
        below ``tol`` within ``max_iter`` iterations.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    gamma = emp.gamma
    if len(gamma) and np.all(gamma == 0):
        raise DegenerateFieldError("all semivariances are zero")
    if len(emp) < 3:
        raise InsufficientBinsError(f"need >= 3 variogram bins, got {len(emp)}")

    h = emp.lags
    root_n = np.sqrt(emp.counts)
    sw = root_n / np.sqrt(np.maximum(gamma * gamma, WEIGHT_FLOOR))

    if init is None:
        s0 = emp.variance if emp.variance else float(gamma.max())
        a0 = (emp.cutoff if emp.cutoff else float(h.max())) / 2.0
        init = (s0, a0, 0.0)
    s0, a0, n0 = (float(v) for v in init)
    if fit_nugget and n0 <= 0:
        n0 = 1e-3 * s0
    if s0 <= 0 or a0 <= 0:
        raise ValueError("initial partial sill and range must be positive")
    fixed_nugget = n0

    def unpack(theta):
        with np.errstate(over="ignore"):
            p = np.exp(theta)
        return p[0], p[1], (p[2] if fit_nugget else fixed_nugget)

    def residuals(theta):
        s2, a, nug = unpack(theta)
        m = nug + s2 * _spherical_shape(h / a)
        if weighting == MODEL:
            return root_n * (gamma / m - 1.0)
        return sw * (m - gamma)

    def derivatives(theta):
        # residuals, Jacobian and the second-order part sum_i r_i * Hess(r_i)
        m, first, second = _model_derivatives(h, *unpack(theta), fit_nugget)
        k = len(first)
        if weighting == MODEL:
            r = root_n * (gamma / m - 1.0)
            c1 = -root_n * gamma / m**2
            c2 = 2.0 * root_n * gamma / m**3
            J = np.column_stack([c1 * f for f in first])
            S = np.array([[r @ (c2 * first[i] * first[j] + c1 * second[i][j])
                           for j in range(k)] for i in range(k)])
        else:
            r = sw * (m - gamma)
            J = np.column_stack([sw * f for f in first])
            S = np.array([[r @ (sw * second[i][j]) for j in range(k)] for i in range(k)])
        return r, J, S

    def sse(theta):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r = residuals(theta)
            val = float(r @ r)
        return val if np.isfinite(val) else np.inf

    theta = np.log([s0, a0] + ([n0] if fit_nugget else []))
    obj = sse(theta)
    history = [obj]
    mu = 1e-3
    converged = False
    delta = np.inf
    it = 0
    while it < max_iter:
        it += 1
        r, J, S = derivatives(theta)
        JtJ = J.T @ J
        g = J.T @ r
        d = np.maximum(np.diag(JtJ), 1e-300)
        try:
            # damping also has to make the full Hessian positive definite
            factor = spl.cho_factor(JtJ + S + mu * np.diag(d), lower=True)
            step = spl.cho_solve(factor, -g)
        except (np.linalg.LinAlgError, ValueError):
            mu *= 10.0
            continue
        cand = theta + step
        with np.errstate(over="ignore", invalid="ignore"):
            p_old = np.exp(theta)
            p_new = np.exp(cand)
            delta = float(np.max(np.abs(p_new - p_old) / p_old))
        new_obj = sse(cand)
        if new_obj <= obj:
            theta, obj = cand, new_obj
            history.append(obj)
            mu = max(mu / 10.0, 1e-12)
        else:
            mu *= 10.0
        if delta < tol:
            converged = True
            break

    s2, a, nug = unpack(theta)
    if not (np.isfinite(s2) and np.isfinite(a)) or a <= 0:
        raise NumericalError("covariance fit diverged")
    model = CovarianceModel(float(s2), float(a), float(nug))
    return model, FitDiagnostics(converged, it, delta, obj, tuple(history))


def covariance_matrix(model: CovarianceModel, distances):
    return model.covariance(np.asarray(_as_array(distances), dtype=float))


def factorize(C, model: CovarianceModel):
    """Cholesky factor of ``C`` after a small diagonal jitter."""
    scale = model.sigma2 if model.sigma2 > 0 else model.sill
    C = np.array(C, dtype=float)
    C[np.diag_indices_from(C)] += JITTER * scale
    try:
        return spl.cho_factor(C, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"covariance matrix not positive definite: {exc}") from exc


def check_design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise SingularDesignError("design matrix needs at least one column")
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError(
            f"design matrix of shape {X.shape} is not of full column rank"
        )
    return X


def gls_solve(values, X, factor):
    """GLS coefficients given a Cholesky ``factor`` of the covariance."""
    z = np.asarray(values, dtype=float)
    X = check_design(X)
    CiX = spl.cho_solve(factor, X)
    Ciz = spl.cho_solve(factor, z)
    A = X.T @ CiX
    try:
        return np.linalg.solve(A, X.T @ Ciz)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(str(exc)) from exc


def iterated_gls_trend(values, X, model: CovarianceModel, distances):
    """``(X' C^-1 X)^-1 X' C^-1 z`` with ``C`` built from ``model``.

    With ``X`` a single column of ones this is the GLS mean used by
    ordinary kriging.
    """
    X = check_design(X)
    C = covariance_matrix(model, distances)
    return gls_solve(values, X, factorize(C, model))
