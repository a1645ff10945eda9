import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.signal import lfilter

from transitbench import arima
from transitbench.arima import ArimaFit, ArimaOrder, difference, estimate, forecast, kpss_stationarity
from transitbench.errors import ConvergenceError, DataError, ModelError


def ar1(seed, n, phi=0.7, burn=200):
    e = np.random.default_rng(seed).standard_normal(n + burn)
    return lfilter([1.0], [1.0, -phi], e)[burn:]


def brute_difference(x, d, D, m):
    x = [int(v) for v in x]
    for _ in range(D):
        x = [x[t] - x[t - m] for t in range(m, len(x))]
    for _ in range(d):
        x = [x[t] - x[t - 1] for t in range(1, len(x))]
    return x


# ---------------------------------------------------------------- differencing

def test_difference_examples():
    assert difference([1, 2, 3, 4], 1).tolist() == [1, 1, 1]
    x = np.arange(10)
    assert np.array_equal(difference(x), x)
    y = np.random.default_rng(0).integers(-50, 50, 20)
    out = difference(y, 1, 1, 7)
    assert len(out) == 12
    assert out.tolist() == brute_difference(y, 1, 1, 7)
    with pytest.raises(DataError):
        difference([1, 2], 2)


@given(st.lists(st.integers(-10**6, 10**6), min_size=50, max_size=50),
       st.integers(0, 2), st.integers(0, 1), st.sampled_from([0, 7]))
def test_difference_matches_sequential_oracle(xs, d, D, m):
    if D and not m:
        D = 0
    out = difference(np.array(xs, dtype=np.int64), d, D, m)
    assert out.dtype.kind == "i"
    assert out.tolist() == brute_difference(xs, d, D, m)


# ------------------------------------------------------------------------ KPSS

def test_kpss_constant_series():
    r = kpss_stationarity(np.full(50, 3.0))
    assert r.statistic == 0.0 and not r.nonstationary
    with pytest.raises(DataError):
        kpss_stationarity(np.ones(5))


def test_kpss_monte_carlo():
    walk = sum(kpss_stationarity(np.cumsum(np.random.default_rng(s).standard_normal(500)))
               .nonstationary for s in range(100))
    noise = sum(not kpss_stationarity(np.random.default_rng(1000 + s).standard_normal(500))
                .nonstationary for s in range(100))
    assert walk >= 95
    assert noise >= 90


def test_kpss_bandwidth_and_hand_statistic():
    x = np.array([1.0, 3, 2, 5, 4, 6, 5, 8, 7, 9, 8, 10])
    r = kpss_stationarity(x)
    assert r.lags == math.floor(4 * (12 / 100) ** 0.25) == 2
    # direct transcription of the definition
    e = x - x.mean()
    n = len(x)
    lrv = sum(e * e) / n
    for l in (1, 2):
        lrv += 2 * (1 - l / 3) * sum(e[t] * e[t - l] for t in range(l, n)) / n
    S = np.cumsum(e)
    assert r.statistic == pytest.approx(sum(S * S) / (n * n * lrv), rel=1e-12)


# ------------------------------------------------------------------ estimation

def test_order_validation():
    with pytest.raises(ModelError):
        ArimaOrder(p=6)
    with pytest.raises(ModelError):
        ArimaOrder(P=1, m=0)
    with pytest.raises(ModelError):
        ArimaOrder(m=1)
    assert ArimaOrder(1, 1, 1, 1, 1, 1, 7).label() == "(1,1,1)(1,1,1)[7]+c"


def test_white_noise_null_order():
    y = 5 + np.random.default_rng(1).standard_normal(400)
    fit = estimate(y, ArimaOrder())
    assert fit.constant == pytest.approx(y.mean(), abs=1e-6)
    assert fit.sigma2 == pytest.approx(y.var(), rel=1e-6)
    assert fit.aic == pytest.approx(400 * math.log(fit.sigma2) + 2 * 2)


def test_ar1_estimate():
    fit = estimate(ar1(3, 2000), ArimaOrder(1, 0, 0, with_constant=False))
    assert 0.65 <= fit.ar[0] <= 0.75


def test_ma1_estimate():
    e = np.random.default_rng(4).standard_normal(2001)
    y = e[1:] + 0.5 * e[:-1]
    fit = estimate(y, ArimaOrder(0, 0, 1, with_constant=False))
    assert 0.44 <= fit.ma[0] <= 0.56


def test_objective_trace_is_monotone():
    y = ar1(5, 800)
    _, res = estimate(y, ArimaOrder(2, 0, 1), return_trace=True)
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))
    assert res.converged


def test_too_short_series():
    with pytest.raises(DataError, match="too short"):
        estimate(np.ones(12), ArimaOrder(1, 0, 1))


def test_nonconvergence_carries_best():
    with pytest.raises(ConvergenceError) as info:
        estimate(ar1(6, 500), ArimaOrder(3, 0, 2), max_iter=2)
    assert info.value.best is not None and np.isfinite(info.value.best_value)


def test_fits_are_stationary_and_invertible():
    for seed in range(5):
        y = ar1(seed, 400, phi=0.95)
        fit = estimate(y, ArimaOrder(2, 0, 2))
        for poly in (np.r_[1, -fit.ar], np.r_[1, fit.ma]):
            roots = np.roots(poly[::-1])
            assert np.all(np.abs(roots) > 1 + 1e-6)


def test_text_record_round_trip():
    fit = estimate(ar1(7, 300), ArimaOrder(1, 0, 1, 1, 0, 0, 7))
    again = ArimaFit.from_text(fit.to_text())
    assert again.to_text() == fit.to_text()
    assert np.array_equal(again.params, fit.params)
    assert np.array_equal(again.inv_hessian, fit.inv_hessian)
    with pytest.raises(DataError):
        ArimaFit.from_text("nonsense")


# ----------------------------------------------------------------- forecasting

def test_forecast_constant_and_random_walk():
    y = 2 + np.random.default_rng(2).standard_normal(200)
    fit = estimate(y, ArimaOrder())
    assert np.allclose(forecast(fit), fit.constant)
    walk = np.cumsum(np.random.default_rng(3).standard_normal(200))
    fit = estimate(walk, ArimaOrder(0, 1, 0, with_constant=False))
    assert np.array_equal(forecast(fit), np.full(7, walk[-1]))
    with pytest.raises(ModelError):
        forecast(fit, horizon=0)


def _handmade(order, ar=(), ma=(), sar=(), sma=(), c=0.0, series=None):
    return ArimaFit(order, np.array(ar, float), np.array(ma, float), np.array(sar, float),
                    np.array(sma, float), c, 1.0, 0.0, 0, series=series)


def test_forecast_ar1_closed_form():
    series = np.r_[np.zeros(20), 1.0]
    fit = _handmade(ArimaOrder(1, 0, 0, with_constant=False), ar=[0.7])
    # the residuals at the end are nonzero, but AR(1) forecasts ignore them
    np.testing.assert_allclose(forecast(fit, series), 0.7 ** np.arange(1, 8), rtol=0, atol=1e-12)


@given(st.floats(-0.9, 0.9), st.floats(-0.5, 0.5), st.floats(-2, 2), st.integers(0, 1))
def test_forecast_matches_noise_free_recursion(a1, a2, c, d):
    """Simulate an AR(2) without noise; forecasts must continue the same path."""
    phi = np.array([a1, a2])
    if not arima._roots_ok(np.r_[1, -phi]):
        return
    n = 60
    w = np.zeros(n + 7)
    w[:2] = [1.0, -0.5]
    mu = c
    for t in range(2, n + 7):
        w[t] = mu + phi[0] * (w[t - 1] - mu) + phi[1] * (w[t - 2] - mu)
    y = w if d == 0 else np.cumsum(np.r_[3.0, w])
    hist, future = (y[:n], y[n:n + 7]) if d == 0 else (y[:n + 1], y[n + 1:n + 8])
    fit = _handmade(ArimaOrder(2, d, 0), ar=phi, c=c)
    np.testing.assert_allclose(forecast(fit, hist), future, rtol=0, atol=1e-10)


def test_forecast_seasonal_integration_matches_recursion():
    # (0,0,0)(0,1,0)[7] without constant repeats last week's values
    y = np.random.default_rng(8).standard_normal(50)
    fit = _handmade(ArimaOrder(0, 0, 0, 0, 1, 0, 7, with_constant=False))
    np.testing.assert_allclose(forecast(fit, y), y[-7:], atol=1e-12)


# ---------------------------------------------------------------------- update

def test_update_without_observations_is_identity():
    fit = estimate(ar1(9, 500), ArimaOrder(1, 0, 0))
    assert arima.update(fit, []) is fit


def test_warm_update_reaches_the_cold_optimum():
    y = ar1(12, 1200) + 3.0
    fit = estimate(y[:1000], ArimaOrder(2, 0, 1))
    assert fit.inv_hessian.shape == (4, 4)
    for t in range(1000, 1200, 40):
        fit = arima.update(fit, y[t:t + 40])
    cold = estimate(y, ArimaOrder(2, 0, 1))
    assert fit.aic == pytest.approx(cold.aic, abs=1e-6)
    assert np.allclose(fit.params, cold.params, atol=1e-3)


def test_update_trajectory_stays_near_truth():
    y = ar1(10, 2000)
    fit = estimate(y[:1000], ArimaOrder(1, 0, 0, with_constant=False))
    lo, hi = fit.ar[0], fit.ar[0]
    for t in range(1000, 2000, 5):
        fit = arima.update(fit, y[t:t + 5])
        lo, hi = min(lo, fit.ar[0]), max(hi, fit.ar[0])
    assert 0.6 <= lo and hi <= 0.8
    assert fit.n_obs == 2000


def test_update_tracks_mean_shift():
    rng = np.random.default_rng(11)
    y = np.r_[rng.standard_normal(1000), 3 + rng.standard_normal(1000)]
    fit = estimate(y[:1000], ArimaOrder())
    start = fit.constant
    for t in range(1000, 1200):
        fit = arima.update(fit, y[t:t + 1])
    # the constant is a full-sample mean; after 200 days it has moved most of
    # the way from 0 toward the mean of the extended sample
    target = y[:1200].mean()
    assert abs(fit.constant - target) < 1e-6
    assert fit.constant - start > 0.4


# -------------------------------------------------------------------- stepwise

def test_stepwise_log_and_winner():
    fit = arima.stepwise_select(ar1(12, 600))
    aics = [a for _, a in fit.search_log if a is not None]
    assert fit.aic == min(aics)
    assert len(fit.search_log) <= 50
    assert fit.order.p >= 1


def test_stepwise_trend_is_differenced():
    t = np.arange(300, dtype=float)
    y = 0.5 * t + np.random.default_rng(13).standard_normal(300)
    assert arima.stepwise_select(y).order.d >= 1


def test_stepwise_seasonal_runs_and_respects_cap():
    rng = np.random.default_rng(14)
    y = np.tile([5, 5, 5, 5, 5, 3, 1.0], 60) + 0.3 * rng.standard_normal(420)
    fit = arima.stepwise_select(y, seasonal=True, m=7, max_models=12)
    assert fit.order.m == 7
    assert len(fit.search_log) <= 12
    with pytest.raises(DataError):
        arima.stepwise_select(np.ones(20))


def test_stepwise_ar2_majority():
    hits = 0
    for seed in range(100):
        e = np.random.default_rng(5000 + seed).standard_normal(2200)
        y = lfilter([1.0], [1.0, -0.5, 0.3], e)[200:]
        o = arima.stepwise_select(y).order
        hits += o.p == 2 and o.q <= 1
    assert hits > 50
