import json
import math

import numpy as np
import pandas as pd
import pytest

from eventcast.errors import ConfigError, DataValidationError
from eventcast.models.config import RunConfig
from eventcast.models.synth import GroundTruth
from eventcast.services.data_service import DataService
from eventcast.services.pipeline_service import PipelineService
from eventcast.services.synth_service import PROVINCES, SynthService, make_rng


@pytest.fixture(scope="module")
def synth():
    return SynthService()


@pytest.fixture(scope="module")
def dataset(synth):
    return synth.generate(GroundTruth(), start="2020-01-01", n_days=120, seed=11)


def test_philox_stream_is_reproducible():
    assert make_rng(3).random(5).tolist() == make_rng(3).random(5).tolist()
    assert make_rng(3).random(5).tolist() != make_rng(4).random(5).tolist()


def test_same_seed_writes_identical_files(synth, tmp_path):
    first = synth.write_dataset(synth.generate(GroundTruth(), n_days=60, seed=7), tmp_path / "a")
    second = synth.write_dataset(synth.generate(GroundTruth(), n_days=60, seed=7), tmp_path / "b")
    assert set(first) == {"events", "weather", "covid", "flu", "regions", "truth"}
    for name in first:
        assert first[name].read_bytes() == second[name].read_bytes(), name
    other = synth.write_dataset(synth.generate(GroundTruth(), n_days=60, seed=8), tmp_path / "c")
    assert other["events"].read_bytes() != first["events"].read_bytes()


def test_flat_truth_mean(synth):
    ds = synth.generate(GroundTruth.flat(theta=10.0), n_days=200, seed=1)
    counts = ds.events.counts.astype(float)
    se = math.sqrt((10.0 + 10.0**2 / 10.0) / counts.size)
    assert abs(counts.mean() - 10.0) < 3 * se
    assert np.allclose(ds.eta, math.log(10.0))


def test_large_theta_is_poisson(synth):
    ds = synth.generate(GroundTruth.flat(theta=1e8), n_days=4200, seed=2)
    assert ds.events.counts.size >= 100_000
    assert 0.9 <= ds.meta["dispersion_index"] <= 1.1


def test_overdispersion_follows_theta(synth):
    ds = synth.generate(GroundTruth.flat(theta=2.0), n_days=200, seed=3)
    # var/mean = 1 + mu/theta = 6
    assert 5.0 < ds.meta["dispersion_index"] < 7.0


def test_short_range_is_rejected(synth):
    with pytest.raises(ConfigError):
        synth.generate(GroundTruth(), n_days=29)


def test_truth_validation():
    with pytest.raises(ValueError):
        GroundTruth(day_effects=[0.1] * 7)
    with pytest.raises(ValueError):
        GroundTruth(quarter_effects=[0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        GroundTruth(theta=0.0)


def test_written_files_ingest(synth, dataset, tmp_path):
    paths = synth.write_dataset(dataset, tmp_path)
    data = DataService()
    events = data.ingest_events(paths["events"])
    assert events.counts.tolist() == dataset.events.counts.tolist()
    regions = data.load_regions(paths["regions"])
    assert regions[dataset.region.id].provinces == {code: share for code, (share, _) in PROVINCES.items()}
    stations = data.ingest_weather(paths["weather"])
    assert sorted(s.station_id for s in stations) == ["ST-LO", "ST-PV"]
    covid = data.ingest_covid(paths["covid"])
    assert covid.region_totals().iloc[-1] == dataset.meta["epidemic_cases"]
    data.interpolate_flu(data.ingest_flu(paths["flu"]))

    truth = json.loads(paths["truth"].read_text())
    assert truth["seed"] == 11 and truth["days"] == 120
    assert truth["truth"]["theta"] == 10.0
    assert set(truth["meta"]) == {"mean_count", "dispersion_index", "epidemic_cases"}


def test_pipeline_reconstructs_the_true_log_mean(synth, dataset, tmp_path):
    synth.write_dataset(dataset, tmp_path)
    data = PipelineService(RunConfig(data_dir=str(tmp_path))).load()
    frame = data.frame.data
    truth = dataset.truth
    level = math.exp(truth.intercept)

    eta = (
        truth.intercept
        + truth.hour_effect(frame["hour"])
        + np.asarray(truth.day_effects)[frame["day"] - 1]
        + np.asarray(truth.quarter_effects)[frame["quarter"] - 1]
        + truth.interaction(frame["day"], frame["hour"])
        + truth.temperature * frame["temperature"]
        + truth.rt * frame["rt"]
        + truth.flu * frame["flu"]
    )
    for k, coef in enumerate(truth.lags, start=1):
        eta = eta + coef * (frame[f"events_lag{k}"] - level)
    for d, coef in zip((1, 2, 7), truth.lagdays):
        eta = eta + coef * (frame[f"events_lagday{d}"] - 24 * level)

    expected = pd.Series(dataset.eta, index=dataset.events.index).reindex(frame.index)
    assert len(frame) > 24 * 60
    assert (frame["rt"] > 0).any()
    # only station rounding and gap interpolation separate the two temperatures
    np.testing.assert_allclose(eta.to_numpy(), expected.to_numpy(), atol=2e-3)


def test_truth_keeps_the_calendar_mean_drawable():
    with pytest.raises(ValueError, match="hourly mean"):
        GroundTruth(intercept=math.log(800.0))
    with pytest.raises(ValueError, match="hourly mean"):
        GroundTruth(intercept=math.log(0.15))
    low, high = GroundTruth().calendar_mean_range()
    assert 0.1 <= low < 10.0 < high <= 1000.0


def test_covariates_pushing_the_mean_out_of_range_are_rejected(synth):
    # summer temperatures multiply a mean of 100 by more than 10
    with pytest.raises(DataValidationError, match="leaves"):
        synth.generate(GroundTruth(intercept=math.log(100.0), temperature=0.2), n_days=200, seed=1)
