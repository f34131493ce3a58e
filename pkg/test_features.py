import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from eventcast.errors import ConfigError
from eventcast.models.series import FRAME_COLUMNS, CovidSeries, EventSeries, RegionId, RtSeries
from eventcast.services.feature_service import FeatureService, calendar_features, lag_columns


@pytest.fixture
def features():
    return FeatureService()


def renewal_epidemic(R, w, n_days, seed_cases, rng):
    """Poisson renewal process written out term by term."""
    I = np.zeros(n_days)
    I[: len(seed_cases)] = seed_cases
    for t in range(len(seed_cases), n_days):
        pressure = 0.0
        for s in range(1, len(w) + 1):
            if t - s >= 0:
                pressure += w[s - 1] * I[t - s]
        I[t] = rng.poisson(R * pressure)
    return I


def test_calendar_features():
    cal = calendar_features(pd.DatetimeIndex(["2020-01-06 00:00", "2020-04-05 13:00", "2020-12-31 23:00"]))
    assert cal["day"].tolist() == [1, 7, 4]
    assert cal["hour"].tolist() == [0, 13, 23]
    assert cal["quarter"].tolist() == [1, 2, 4]


def test_lags_match_brute_force():
    rng = np.random.default_rng(0)
    idx = pd.date_range("2020-01-01", periods=24 * 12, freq="h")
    y = pd.Series(rng.poisson(4.0, idx.size).astype(float), index=idx)
    totals = y.groupby(idx.normalize()).sum()
    lags = lag_columns(y, totals)
    for t in range(idx.size):
        for k in (1, 2, 3):
            back = t - 24 - (k - 1)
            expected = y.iloc[back] if back >= 0 else np.nan
            assert_allclose(lags[f"events_lag{k}"].iloc[t], expected)
        day = t // 24
        for d in (1, 2, 7):
            expected = y.iloc[(day - d) * 24:(day - d + 1) * 24].sum() if day >= d else np.nan
            assert_allclose(lags[f"events_lagday{d}"].iloc[t], expected)


def test_serial_interval_is_a_distribution(features):
    w = features.serial_interval()
    assert w.size == 30
    assert w.min() >= 0.0
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    mean = np.sum(np.arange(1, 31) * w)
    assert mean == pytest.approx(6.6, abs=0.3)
    with pytest.raises(ConfigError):
        features.serial_interval(mean=-1.0)


def test_constant_incidence_gives_rt_one(features):
    incidence = pd.Series(100.0, index=pd.date_range("2020-03-01", periods=200, freq="D"))
    rt = features.rt_from_incidence(incidence, features.serial_interval(), window=7)
    after = rt.rt[40:]
    assert np.all(np.abs(after - 1.0) <= 0.01)
    assert rt.credible[40:].all()


def test_renewal_epidemic_is_recovered(features):
    rng = np.random.default_rng(42)
    w = features.serial_interval()
    cases = renewal_epidemic(1.3, w, 120, [500.0] * 5, rng)
    incidence = pd.Series(cases, index=pd.date_range("2020-03-01", periods=120, freq="D"))
    rt = features.rt_from_incidence(incidence, w, window=7)
    assert np.all(np.abs(rt.rt[40:] - 1.3) <= 0.05)


def test_rt_is_scale_invariant(features):
    rng = np.random.default_rng(1)
    incidence = pd.Series(rng.poisson(30.0, 90).astype(float), index=pd.date_range("2020-03-01", periods=90, freq="D"))
    w = features.serial_interval()
    a = features.rt_from_incidence(incidence, w, 7).rt
    b = features.rt_from_incidence(incidence * 10.0, w, 7).rt
    both = ~np.isnan(a) & ~np.isnan(b)
    assert both.sum() > 60
    assert_allclose(a[both], b[both], rtol=1e-12)


def test_rt_needs_valid_inputs(features):
    incidence = pd.Series(1.0, index=pd.date_range("2020-03-01", periods=5, freq="D"))
    with pytest.raises(ConfigError):
        features.rt_from_incidence(incidence, features.serial_interval(), window=0)
    with pytest.raises(ConfigError):
        features.rt_from_incidence(incidence, np.array([0.5, 0.2]), window=7)


def test_incidence_clamps_corrections_and_starts_at_zero(features):
    covid = CovidSeries(
        table=pd.DataFrame(
            {
                "date": pd.date_range("2020-03-01", periods=4, freq="D"),
                "province": "PV",
                "total_positive": [2.0, 5.0, 4.0, 10.0],
            }
        )
    )
    assert features.daily_incidence(covid).tolist() == [0.0, 3.0, 0.0, 6.0]


def test_rt_column_uses_previous_day_and_zero_before_epidemic(features):
    rt = RtSeries(
        dates=pd.date_range("2020-03-01", periods=3, freq="D"),
        rt=np.array([np.nan, 1.2, 0.9]),
        credible=np.array([False, True, True]),
    )
    days = pd.DatetimeIndex(["2020-02-20", "2020-03-01", "2020-03-02", "2020-03-03", "2020-03-04"])
    values = features.rt_column(days, rt)
    assert values[0] == 0.0 and values[1] == 0.0
    assert np.isnan(values[2])
    assert values[3:].tolist() == [1.2, 0.9]


@pytest.fixture
def assembled(features):
    rng = np.random.default_rng(3)
    start = pd.Timestamp("2020-01-01")
    counts = rng.poisson(3.0, 24 * 10)
    events = EventSeries(region=RegionId.PLAIN, start=start, counts=counts)
    days = pd.date_range(start, periods=10, freq="D")
    temps = pd.Series(np.linspace(2.0, 6.0, 10), index=days)
    temps.iloc[8] = np.nan
    rt = RtSeries(dates=pd.date_range("2020-02-01", periods=5, freq="D"), rt=np.ones(5), credible=np.ones(5, dtype=bool))
    flu = pd.Series(np.arange(10.0), index=days)
    return events, features.assemble_frame(events, temps, rt, flu)


def test_assembled_frame_drops_incomplete_rows(assembled):
    events, frame = assembled
    assert frame.dropped == {"lags": 168, "temperature": 24, "rt": 0, "total": 192}
    assert len(frame) == 48
    assert frame.data.index.normalize().unique().tolist() == [pd.Timestamp("2020-01-08"), pd.Timestamp("2020-01-10")]
    assert list(frame.data.columns) == FRAME_COLUMNS + ["y"]
    assert (frame.data["rt"] == 0.0).all()


def test_assembled_frame_values(assembled):
    events, frame = assembled
    y = events.counts
    row = frame.data.loc["2020-01-10 05:00"]
    t = 9 * 24 + 5
    assert row["y"] == y[t]
    assert row["events_lag1"] == y[t - 24]
    assert row["events_lag3"] == y[t - 26]
    assert row["events_lagday7"] == y[2 * 24:3 * 24].sum()
    assert row["flu"] == 8.0
    assert row["day"] == 5 and row["quarter"] == 1


def test_export_frame(features, assembled, tmp_path):
    _, frame = assembled
    path = features.export_frame(frame, tmp_path / "frame.csv")
    exported = pd.read_csv(path)
    assert list(exported.columns) == ["timestamp"] + FRAME_COLUMNS + ["y"]
    assert len(exported) == 48
    assert exported["timestamp"].iloc[0] == "2020-01-08T00:00"
