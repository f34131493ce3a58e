from datetime import date

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from eventcast.errors import DataValidationError
from eventcast.models.benchmark import ArimaFit, IngarchFit
from eventcast.models.forecast import ForecastReport, ForecastRow, HorizonScore, PipelineData
from eventcast.models.series import DailyTemperature, EventSeries, RegionId, RtSeries
from eventcast.services.benchmark_service import THETA_CAP, BenchmarkService, _outside_unit_circle
from eventcast.services.feature_service import FeatureService
from eventcast.services.forecast_service import build_rolling_plan


@pytest.fixture
def bench():
    return BenchmarkService()


def simulate_ingarch(c, a, b, n, rng):
    nu = np.empty(n)
    y = np.empty(n)
    nu[0] = c / (1.0 - a - b)
    y[0] = rng.poisson(np.exp(nu[0]))
    for t in range(1, n):
        nu[t] = c + a * nu[t - 1] + b * np.log(y[t - 1] + 1.0)
        y[t] = rng.poisson(np.exp(nu[t]))
    return y


def daily_pipeline(n_days: int, seed: int) -> PipelineData:
    rng = np.random.default_rng(seed)
    start = pd.Timestamp("2020-01-01")
    weekly = np.repeat(1.0 + 0.2 * np.sin(2 * np.pi * np.arange(n_days) / 7.0), 24)
    events = EventSeries(region=RegionId.PLAIN, start=start, counts=rng.poisson(5.0 * weekly))
    days = pd.date_range(start, periods=n_days, freq="D")
    temps = pd.Series(np.linspace(0.0, 10.0, n_days), index=days)
    rt = RtSeries(dates=days, rt=np.zeros(n_days), credible=np.zeros(n_days, dtype=bool))
    flu = pd.Series(0.0, index=days)
    frame = FeatureService().assemble_frame(events, temps, rt, flu)
    return PipelineData(events=events, temperature=DailyTemperature(values=temps), rt=rt, flu=flu, frame=frame)


# === NAIVE ===

def test_naive_repeats_the_origin_day(bench):
    daily = pd.Series([10.0, 12.0, 9.0], index=pd.date_range("2020-01-01", periods=3, freq="D"))
    assert bench.naive_forecast(daily, date(2020, 1, 2), 1) == 12.0
    assert bench.naive_forecast(daily, date(2020, 1, 2), 7) == 12.0


# === ARIMA ===

def test_unit_circle_check():
    assert _outside_unit_circle(np.array([0.5]), -1.0)
    assert not _outside_unit_circle(np.array([1.2]), -1.0)
    assert not _outside_unit_circle(np.array([1.0]), 1.0)
    assert _outside_unit_circle(np.zeros(2), 1.0)


def test_css_residuals_match_recursion(bench):
    rng = np.random.default_rng(0)
    x = rng.normal(5.0, 1.0, 200)
    mean, phi, theta = 5.0, 0.6, 0.3
    e = np.zeros_like(x)
    for t in range(x.size):
        prev_dev = x[t - 1] - mean if t else 0.0
        prev_e = e[t - 1] if t else 0.0
        e[t] = (x[t] - mean) - phi * prev_dev - theta * prev_e
    assert_allclose(bench.css_residuals(x, mean, np.array([phi]), np.array([theta])), e, atol=1e-12)


def test_ar1_is_detected_and_estimated(bench):
    rng = np.random.default_rng(1)
    noise = rng.normal(size=2000)
    x = np.zeros(2000)
    for t in range(1, 2000):
        x[t] = 0.7 * x[t - 1] + noise[t]
    x += 100.0
    fit = bench.fit_arima(x)
    assert fit.order[0] + fit.order[2] >= 1
    assert len(fit.candidates) == 16
    ar1 = bench._fit_order(x, 1, 0, 0)
    assert 0.6 <= ar1.ar[0] <= 0.8
    assert ar1.mean == pytest.approx(100.0, abs=0.5)


def test_random_walk_is_differenced_and_level_free(bench):
    walk = np.cumsum(np.random.default_rng(7).normal(size=500))
    assert bench.choose_differencing(walk) == 1
    fit = bench.fit_arima(walk)
    shifted = bench.fit_arima(walk + 1000.0)
    assert fit.order == shifted.order and fit.order[1] == 1
    assert_allclose(shifted.ar, fit.ar, atol=1e-6)
    assert_allclose(shifted.ma, fit.ma, atol=1e-6)


def test_white_noise_forecast_is_the_mean(bench):
    rng = np.random.default_rng(2)
    y = rng.normal(100.0, 10.0, 300)
    fit = bench.fit_arima(y)
    forecast = bench.arima_forecast(fit, y, 5)
    assert abs(forecast[-1] - 100.0) < 3 * 10.0 / np.sqrt(300)


def test_arima_forecast_recursions(bench):
    y = np.array([3.0, 5.0, 4.0, 6.0])
    drift = ArimaFit(order=(0, 1, 0), ar=np.zeros(0), ma=np.zeros(0), mean=2.0, sigma2=1.0, aicc=0.0, n=3)
    assert_allclose(bench.arima_forecast(drift, y, 3), [8.0, 10.0, 12.0])
    assert_allclose(bench.arima_forecast(drift, y + 50.0, 3), [58.0, 60.0, 62.0])
    ar = ArimaFit(order=(1, 0, 0), ar=np.array([0.5]), ma=np.zeros(0), mean=4.0, sigma2=1.0, aicc=0.0, n=3)
    assert_allclose(bench.arima_forecast(ar, y, 3), 4.0 + 2.0 * 0.5 ** np.arange(1, 4))


def test_arima_needs_history(bench):
    with pytest.raises(DataValidationError):
        bench.fit_arima(np.ones(10))


# === INGARCH ===

def test_ingarch_log_means_match_loop(bench):
    y = np.array([3.0, 0.0, 7.0, 2.0, 5.0])
    c, a, b, nu0 = 0.4, 0.5, 0.3, 1.0
    expected, nu = [], nu0
    for t in range(1, y.size):
        nu = c + a * nu + b * np.log(y[t - 1] + 1.0)
        expected.append(nu)
    assert_allclose(bench.ingarch_log_means(y, c, a, b, nu0), expected, atol=1e-12)


def test_ingarch_recovers_feedback(bench):
    y = simulate_ingarch(1.0, 0.5, 0.3, 2000, np.random.default_rng(3))
    fit = bench.fit_ingarch(y)
    assert abs(fit.a - 0.5) <= 0.1
    assert abs(fit.b - 0.3) <= 0.1
    assert fit.evaluations > 0


def test_ingarch_iid_counts_forecast_the_mean(bench):
    y = np.random.default_rng(4).poisson(50.0, 2000).astype(float)
    fit = bench.fit_ingarch(y)
    assert bench.ingarch_forecast(fit, y, 1)[0] == pytest.approx(y.mean(), rel=0.1)


def test_ingarch_constant_series(bench):
    fit = bench.fit_ingarch(np.full(60, 7.0))
    assert (fit.a, fit.b, fit.theta) == (0.0, 0.0, THETA_CAP)
    assert_allclose(bench.ingarch_forecast(fit, np.full(60, 7.0), 3), 7.0, atol=1e-6)


def test_ingarch_dispersion(bench):
    rng = np.random.default_rng(5)
    under = rng.binomial(100, 0.5, 2000).astype(float)
    assert bench.fit_ingarch(under).theta == THETA_CAP
    over = rng.negative_binomial(5, 5 / 55, 2000).astype(float)
    assert 3.5 < bench.fit_ingarch(over).theta < 7.0


def test_ingarch_rejects_bad_input(bench):
    with pytest.raises(DataValidationError):
        bench.fit_ingarch(np.ones(20))
    with pytest.raises(DataValidationError):
        bench.fit_ingarch(np.concatenate([np.ones(60), [-1.0]]))
    with pytest.raises(ValueError):
        IngarchFit(intercept=0.0, a=0.7, b=0.4, theta=1.0, n=10, loglik=0.0)


# === COMPARISON ===

def test_benchmark_compare_table():
    data = daily_pipeline(130, seed=6)
    plan = build_rolling_plan(date(2020, 1, 1), date(2020, 5, 9), [1, 2], refit_every=7, min_history_days=90, eval_days=20)
    gam_report = ForecastReport(
        rows=[ForecastRow(origin=o, horizon_days=h, target=o, predicted=1.0, observed=1.0, rel_error_pct=0.0) for o in plan.origins[:3] for h in (1, 2)],
        scores=[HorizonScore(horizon_days=h, mae_pct=1.5, n=3, skipped=0) for h in (1, 2)],
        failures={"2020-04-20": "boom"},
    )
    mean7 = lambda history, origin, h: float(history.iloc[-7:].mean())  # noqa: E731
    table = BenchmarkService(threads=2).benchmark_compare(data, plan, gam_report, {"mean7": mean7})
    assert table.methods == ["gam", "arima", "naive", "ingarch", "mean7"]
    assert len(table.rows) == 10
    gam = table.get("gam", 2)
    assert (gam.mae_pct, gam.n_origins, gam.failures) == (1.5, 3, 1)

    daily = data.events.daily_totals()
    for h in (1, 2):
        errors = [
            abs(daily[pd.Timestamp(o)] - daily[pd.Timestamp(o) + pd.Timedelta(days=h)])
            / daily[pd.Timestamp(o) + pd.Timedelta(days=h)]
            for o in plan.origins
        ]
        naive = table.get("naive", h)
        assert naive.mae_pct == pytest.approx(100.0 * np.mean(errors), rel=1e-12)
        assert naive.n_origins == 20 and naive.failures == 0
        for method in ("arima", "ingarch", "mean7"):
            row = table.get(method, h)
            assert row.n_origins == 20
            assert 0.0 < row.mae_pct < 50.0
