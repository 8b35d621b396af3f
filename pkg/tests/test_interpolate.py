import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import KM_PER_DEG, make_snapshot
from wxkrig.covariance import CovarianceModel
from wxkrig.errors import DomainError, MissingCovariateError, NoDataError, SingularDesignError
from wxkrig.geo import distance, distance_matrix
from wxkrig.interpolate import (
    InterpOptions,
    TransformSpec,
    boxcox,
    idw_predict,
    inv_boxcox,
    location_covariates,
    nn_predict,
    ok_predict,
    predict_point,
    tgk_backtransform,
    tgk_predict,
    uk_predict,
    with_fallback,
)
from wxkrig.synthetic import gaussian_fields, random_sites

MODEL = CovarianceModel(1.0, 200.0)


def sph(h, s2=1.0, a=200.0):
    return np.where(h > a, 0.0, s2 * (1 - 1.5 * h / a + 0.5 * (h / a) ** 3))


def ok_oracle(coords, z, target, s2=1.0, a=200.0):
    """Solve the bordered system [[C, 1], [1', 0]] [w; nu] = [c; 1] densely."""
    n = len(coords)
    D = np.array([[distance(p, q) for q in coords] for p in coords])
    c = sph(np.array([distance(p, target) for p in coords]), s2, a)
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = sph(D, s2, a)
    A[:n, n] = A[n, :n] = 1.0
    sol = np.linalg.solve(A, np.append(c, 1.0))
    w, nu = sol[:n], sol[n]
    return w @ z, s2 - w @ c - nu, w, -nu


def uk_oracle(coords, X, x0, z, target, s2=1.0, a=200.0):
    n, p = X.shape
    D = np.array([[distance(p_, q) for q in coords] for p_ in coords])
    c = sph(np.array([distance(p_, target) for p_ in coords]), s2, a)
    A = np.zeros((n + p, n + p))
    A[:n, :n] = sph(D, s2, a)
    A[:n, n:] = X
    A[n:, :n] = X.T
    sol = np.linalg.solve(A, np.concatenate([c, x0]))
    w = sol[:n]
    return w @ z, s2 - w @ c - sol[n:] @ x0, w


# -- NN / IDW ----------------------------------------------------------------

def test_nn_single_station():
    snap = make_snapshot([(40.0, -95.0)], [7.5])
    assert nn_predict(snap, (35.0, -80.0)) == 7.5


def test_nn_coincident_target():
    snap = make_snapshot([(40.0, -95.0), (41.0, -95.0)], [1.0, 2.0])
    assert nn_predict(snap, (41.0, -95.0)) == 2.0


def test_nn_nearer_wins():
    snap = make_snapshot([(0.0, 20 / KM_PER_DEG), (0.0, -10 / KM_PER_DEG)], [9.0, 3.0])
    assert nn_predict(snap, (0.0, 0.0)) == 3.0


def test_nn_skips_missing():
    snap = make_snapshot([(0.0, 0.1), (0.0, 0.5)], [np.nan, 4.0])
    assert nn_predict(snap, (0.0, 0.0)) == 4.0
    with pytest.raises(NoDataError):
        nn_predict(make_snapshot([(0.0, 0.1)], [np.nan]), (0.0, 0.0))
    with pytest.raises(NoDataError):
        idw_predict(make_snapshot([(0.0, 0.1)], [np.nan]), (0.0, 0.0))


def test_idw_one_and_two_km():
    snap = make_snapshot([(0.0, 1 / KM_PER_DEG), (0.0, -2 / KM_PER_DEG)], [10.0, 20.0])
    # weights 1/1 and 1/4 normalise to 0.8 and 0.2
    assert idw_predict(snap, (0.0, 0.0)) == pytest.approx(12.0, rel=1e-12)


def test_idw_equidistant():
    snap = make_snapshot([(0.0, 0.3), (0.0, -0.3)], [4.0, 6.0])
    assert idw_predict(snap, (0.0, 0.0)) == pytest.approx(5.0, rel=1e-12)


def test_idw_coincident_returns_value():
    snap = make_snapshot([(40.0, -95.0), (40.2, -95.0)], [3.25, 100.0])
    assert idw_predict(snap, (40.0, -95.0)) == 3.25


def test_idw_neighbour_cap():
    coords = [(0.0, 0.1 * (i + 1)) for i in range(5)]
    snap = make_snapshot(coords, [1.0, 2.0, 3.0, 4.0, 5.0])
    d = np.array([distance((0, 0), c) for c in coords[:2]])
    w = 1 / d**2
    assert idw_predict(snap, (0.0, 0.0), n_max=2) == pytest.approx(w @ [1, 2] / w.sum())


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_nn_is_idw_with_one_neighbour(seed, n):
    rng = np.random.default_rng(seed)
    snap = make_snapshot(list(zip(rng.uniform(35, 45, n), rng.uniform(-100, -90, n))),
                         rng.gamma(0.5, 5.0, n))
    target = (rng.uniform(35, 45), rng.uniform(-100, -90))
    assert nn_predict(snap, target) == idw_predict(snap, target, n_max=1)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 25))
def test_idw_within_neighbour_range(seed, n, n_max):
    rng = np.random.default_rng(seed)
    lat, lon = rng.uniform(35, 45, n), rng.uniform(-100, -90, n)
    z = rng.normal(size=n)
    snap = make_snapshot(list(zip(lat, lon)), z)
    target = (rng.uniform(35, 45), rng.uniform(-100, -90))
    v = idw_predict(snap, target, n_max=n_max)
    d = np.array([distance(target, (a, b)) for a, b in zip(lat, lon)])
    used = z[np.argsort(d, kind="stable")[:n_max]]
    assert used.min() - 1e-12 <= v <= used.max() + 1e-12


# -- ordinary kriging ----------------------------------------------------------

def test_ok_symmetric_pair():
    snap = make_snapshot([(0.0, 0.5), (0.0, -0.5)], [2.0, 6.0])
    sol = ok_predict(snap, MODEL, (0.0, 0.0))
    np.testing.assert_allclose(sol.weights, [0.5, 0.5], atol=1e-12)
    assert sol.prediction == pytest.approx(4.0, rel=1e-12)


def test_ok_exact_at_station():
    coords = [(40.0, -95.0), (40.6, -94.1), (39.5, -96.0), (41.0, -95.5)]
    z = [1.0, 3.0, -2.0, 0.5]
    for i, c in enumerate(coords):
        sol = ok_predict(make_snapshot(coords, z), MODEL, c)
        assert sol.prediction == pytest.approx(z[i], rel=1e-6, abs=1e-9)
        assert abs(sol.variance) <= 1e-6


def test_ok_matches_lagrangian_oracle():
    coords = [(40.0, -95.0), (40.6, -94.1), (39.5, -96.0), (41.0, -95.5)]
    z = np.array([1.0, 3.0, -2.0, 0.5])
    target = (40.3, -95.2)
    pred, var, w, m = ok_oracle(coords, z, target)
    sol = ok_predict(make_snapshot(coords, z), MODEL, target)
    assert sol.prediction == pytest.approx(pred, rel=1e-9)
    assert sol.variance == pytest.approx(var, rel=1e-8)
    np.testing.assert_allclose(sol.weights, w, rtol=1e-8, atol=1e-12)
    assert sol.lagrange == pytest.approx(m, rel=1e-8, abs=1e-12)
    assert sol.weights.sum() == pytest.approx(1.0, abs=1e-8)


def test_ok_gls_mean_form():
    coords = [(40.0, -95.0), (40.6, -94.1), (39.5, -96.0), (41.0, -95.5), (40.1, -93.9)]
    z = np.array([1.0, 3.0, -2.0, 0.5, 2.5])
    snap = make_snapshot(coords, z)
    D = distance_matrix(snap.stations).values
    Ci = np.linalg.inv(sph(D))
    one = np.ones(5)
    mu = one @ Ci @ z / (one @ Ci @ one)
    target = (40.2, -94.6)
    c = sph(np.array([distance(p, target) for p in coords]))
    sol = ok_predict(snap, MODEL, target)
    assert sol.trend == pytest.approx(mu, rel=1e-8)
    assert sol.prediction == pytest.approx(mu + c @ Ci @ (z - mu), rel=1e-8)


# -- universal kriging -------------------------------------------------------

COORDS5 = [(40.0, -95.0), (40.6, -94.1), (39.5, -96.0), (41.0, -95.5), (40.1, -93.9)]
ELEV5 = [300.0, 420.0, 250.0, 610.0, 380.0]


def test_uk_intercept_only_equals_ok():
    z = np.array([1.0, 3.0, -2.0, 0.5, 2.5])
    snap = make_snapshot(COORDS5, z)
    target = (40.2, -94.6)
    uk = uk_predict(snap, np.empty((6, 0)), MODEL, target)
    ok = ok_predict(snap, MODEL, target)
    assert uk.prediction == pytest.approx(ok.prediction, rel=1e-12)
    np.testing.assert_allclose(uk.weights, ok.weights, rtol=1e-10)


def test_uk_matches_augmented_oracle():
    z = np.array([1.0, 3.0, -2.0, 0.5, 2.5])
    snap = make_snapshot(COORDS5, z, elevs=ELEV5)
    target, t_elev = (40.2, -94.6), 350.0
    cov = location_covariates(snap.stations, target, t_elev)
    # raw covariates: the predictor is invariant to their affine rescaling
    X = np.column_stack([np.ones(5), cov[:5]])
    x0 = np.concatenate([[1.0], cov[5]])
    pred, var, w = uk_oracle(COORDS5, X, x0, z, target)
    sol = uk_predict(snap, cov, MODEL, target)
    assert sol.prediction == pytest.approx(pred, rel=1e-6)
    assert sol.variance == pytest.approx(var, rel=1e-6)
    np.testing.assert_allclose(sol.weights, w, rtol=1e-6, atol=1e-9)
    assert sol.weights.sum() == pytest.approx(1.0, abs=1e-8)


def test_uk_perfect_trend():
    stations = random_sites(15, 5)
    lat = np.array([s.lat for s in stations])
    snap = make_snapshot([(s.lat, s.lon) for s in stations], 3.0 - 2.0 * lat,
                         elevs=[s.elev for s in stations])
    target = (41.3, -93.0)
    cov = location_covariates(snap.stations, target, 500.0)
    sol = uk_predict(snap, cov, MODEL, target)
    assert sol.prediction == pytest.approx(3.0 - 2.0 * 41.3, rel=1e-9)


def test_uk_missing_target_elevation():
    snap = make_snapshot(COORDS5, np.arange(5.0), elevs=ELEV5)
    cov = location_covariates(snap.stations, (40.2, -94.6), None)
    with pytest.raises(MissingCovariateError):
        uk_predict(snap, cov, MODEL, (40.2, -94.6))


def test_uk_rank_deficient():
    coords = [(40.0, -95.0 + 0.3 * i) for i in range(5)]
    snap = make_snapshot(coords, np.arange(5.0), elevs=ELEV5)
    cov = location_covariates(snap.stations, (40.0, -94.0), 100.0)
    with pytest.raises(SingularDesignError):
        uk_predict(snap, cov, MODEL, (40.0, -94.0))


# -- exactness, weights and translation on random layouts ----------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(10, 40))
def test_kriging_exact_and_weights_normalised(seed, n):
    rng = np.random.default_rng(seed)
    stations = random_sites(n, seed % 10_000)
    z = gaussian_fields(stations, MODEL, 1, seed=seed % 1000)[0]
    snap = make_snapshot([(s.lat, s.lon) for s in stations], z, elevs=[s.elev for s in stations])
    i = int(rng.integers(n))
    target = (stations[i].lat, stations[i].lon)
    ok = ok_predict(snap, MODEL, target)
    assert ok.prediction == pytest.approx(z[i], rel=1e-6, abs=1e-9)
    assert ok.variance <= 1e-6 * MODEL.sigma2
    assert ok.weights.sum() == pytest.approx(1.0, abs=1e-8)
    cov = location_covariates(snap.stations, target, stations[i].elev)
    uk = uk_predict(snap, cov, MODEL, target)
    assert uk.prediction == pytest.approx(z[i], rel=1e-6, abs=1e-9)
    assert uk.weights.sum() == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_translation_equivariance(seed, shift):
    rng = np.random.default_rng(seed)
    stations = random_sites(20, seed % 5000)
    coords = [(s.lat, s.lon) for s in stations]
    elevs = [s.elev for s in stations]
    z = rng.normal(size=20)
    target = (rng.uniform(36, 44), rng.uniform(-99, -91))
    a, b = make_snapshot(coords, z, elevs=elevs), make_snapshot(coords, z + shift, elevs=elevs)
    assert nn_predict(b, target) == nn_predict(a, target) + shift
    assert idw_predict(b, target) == pytest.approx(idw_predict(a, target) + shift, abs=1e-9)
    assert ok_predict(b, MODEL, target).prediction == pytest.approx(
        ok_predict(a, MODEL, target).prediction + shift, abs=1e-8)
    cov = location_covariates(a.stations, target, 700.0)
    assert uk_predict(b, cov, MODEL, target).prediction == pytest.approx(
        uk_predict(a, cov, MODEL, target).prediction + shift, abs=1e-8)


# -- Box-Cox and trans-Gaussian kriging -------------------------------------

@pytest.mark.parametrize("z, y", [(8.0, 3.0), (1.0, 0.0), (0.0, -3.0)])
def test_boxcox_examples(z, y):
    assert boxcox(z) == pytest.approx(y, abs=1e-15)
    assert inv_boxcox(y) == pytest.approx(z, abs=1e-14)


def test_boxcox_negative():
    with pytest.raises(DomainError):
        boxcox(-0.1)


def test_boxcox_round_trip(rng):
    z = np.concatenate([rng.gamma(0.6, 8.0, 10_000), [0.0, 1.0, 1e-8, 1e4]])
    np.testing.assert_allclose(inv_boxcox(boxcox(z)), z, rtol=1e-12, atol=1e-12)


def test_other_lambdas():
    z = np.array([0.5, 2.0, 9.0])
    for lam in (0.0, 0.5, 1.0):
        spec = TransformSpec(lam)
        zz = z if lam else z
        np.testing.assert_allclose(spec.inverse(spec.forward(zz)), zz, rtol=1e-12)
    with pytest.raises(ValueError):
        TransformSpec(1.5)


def test_inverse_second_derivative():
    spec = TransformSpec()
    y = np.linspace(-2.0, 6.0, 9)
    # phi''(y) = (2/3)(y/3 + 1) for lambda = 1/3
    np.testing.assert_allclose(spec.inverse_d2(y), (2 / 3) * (y / 3 + 1), rtol=1e-14)
    h = 1e-4
    fd = (spec.inverse(y + h) - 2 * spec.inverse(y) + spec.inverse(y - h)) / h**2
    np.testing.assert_allclose(spec.inverse_d2(y), fd, rtol=1e-5)


def test_backtransform_examples():
    assert tgk_backtransform(3.0, 0.0, 0.9, 0.0) == pytest.approx(8.3, abs=1e-12)
    assert tgk_backtransform(3.0, 1.7, 0.0, 0.0) == 8.0
    # correction clamped at zero
    assert tgk_backtransform(-3.0, 0.0, 0.0, 2.0) == 0.0


def test_tgk_exact_at_station():
    stations = random_sites(25, 7)
    z = np.round(np.random.default_rng(4).gamma(1.0, 4.0, 25), 1)
    snap = make_snapshot([(s.lat, s.lon) for s in stations], z)
    model = CovarianceModel(1.0, 300.0)
    for i in (0, 7, 19):
        v = tgk_predict(snap, (stations[i].lat, stations[i].lon), model=model)
        assert v == pytest.approx(z[i], rel=1e-6, abs=1e-9)


def test_tgk_rejects_negative():
    snap = make_snapshot([(40.0, -95.0), (41.0, -95.0)], [1.0, -1.0])
    with pytest.raises(DomainError):
        tgk_predict(snap, (40.5, -95.0), model=MODEL)
    with pytest.raises(DomainError):
        with_fallback("TGK", snap, (40.5, -95.0))


def test_tgk_constant_field_via_fallback():
    snap = make_snapshot([(s.lat, s.lon) for s in random_sites(12, 3)], np.full(12, 8.0))
    value, tag = with_fallback("TGK", snap, (40.0, -95.0))
    assert value == pytest.approx(8.0, rel=1e-12)
    assert tag == "fallback=idw"
    # with a supplied model kriging is exact (y_hat = mu = 3) but the
    # delta-method term (var/2 - m) still adds a positive correction
    tsnap = make_snapshot([(s.lat, s.lon) for s in snap.stations], np.full(12, 3.0))
    sol = ok_predict(tsnap, MODEL, (40.0, -95.0))
    assert sol.prediction == pytest.approx(3.0, rel=1e-12)
    expected = 8.0 + (2 / 3) * 2.0 * (sol.variance / 2 - sol.lagrange)
    assert tgk_predict(snap, (40.0, -95.0), model=MODEL) == pytest.approx(expected, rel=1e-12)


# -- fallback ------------------------------------------------------------------

def test_fallback_all_zero_day():
    snap = make_snapshot([(s.lat, s.lon) for s in random_sites(15, 2)], np.zeros(15))
    assert with_fallback("OK", snap, (40.0, -95.0)) == (0.0, "fallback=idw")


def test_primary_on_gaussian_field():
    stations = random_sites(60, 6)
    z = gaussian_fields(stations, CovarianceModel(1.0, 400.0), 1, seed=9)[0]
    snap = make_snapshot([(s.lat, s.lon) for s in stations], z)
    value, tag = with_fallback("OK", snap, (40.0, -95.0))
    assert tag == "primary"
    assert value != idw_predict(snap, (40.0, -95.0))


def test_fallback_on_non_convergence():
    # a random walk along a line has a near-linear variogram; the fitter
    # chases an ever larger range and exhausts its iteration budget
    n = 60
    coords = [(0.0, float(x)) for x in np.linspace(-100, -90, n)]
    z = np.cumsum(np.random.default_rng(0).standard_normal(n))
    snap = make_snapshot(coords, z)
    target = (0.0, -94.95)
    value, tag = with_fallback("OK", snap, target)
    assert tag == "fallback=idw"
    assert value == idw_predict(snap, target)
    v2, var, fell_back = predict_point("OK", snap, target)
    assert fell_back and var is None and v2 == value


def test_predict_point_variance():
    stations = random_sites(40, 6)
    z = gaussian_fields(stations, CovarianceModel(1.0, 400.0), 1, seed=9)[0]
    snap = make_snapshot([(s.lat, s.lon) for s in stations], z, elevs=[s.elev for s in stations])
    for method in ("OK", "UK"):
        value, var, fb = predict_point(method, snap, (40.0, -95.0), target_elev=500.0)
        assert not fb and var >= 0
    value, var, fb = predict_point("IDW", snap, (40.0, -95.0))
    assert var is None and not fb


def test_euclidean_metric_option():
    snap = make_snapshot([(0.0, 1.0), (0.0, -2.0)], [10.0, 20.0])
    opts = InterpOptions(metric="euclidean-degrees")
    value, tag = with_fallback("IDW", snap, (0.0, 0.0), opts)
    assert value == pytest.approx(12.0) and tag == "primary"
