import json
import logging
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import ConfigError, DataValidationError
from ..models.series import CovidSeries, EventSeries, FluSeries, Region, RegionId, WeatherSeries
from ..models.synth import MEAN_RANGE, GroundTruth, SyntheticDataset
from .data_service import DataService
from .feature_service import FeatureService

logger = logging.getLogger(__name__)

MIN_MEAN, MAX_MEAN = MEAN_RANGE
MIN_DAYS = 30
POPULATION = 2_000_000

# two provinces, one station each; offsets average to zero under the weights
PROVINCES: Dict[str, Tuple[float, float]] = {"PV": (0.7, 0.6), "LO": (0.3, -1.4)}

# ISO weeks reported in a flu season (October to April)
FLU_FIRST_WEEK = 42
FLU_LAST_WEEK = 17
FLU_PEAK_WEEK = 5


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream: identical draws on every platform for one seed."""
    return np.random.Generator(np.random.Philox(seed))


class SynthService:
    """Draws complete input datasets from a known negative-binomial log-mean."""

    def __init__(self, features: Optional[FeatureService] = None, data: Optional[DataService] = None):
        self.features = features or FeatureService()
        self.data = data or DataService()

    # === COVARIATES ===

    def _temperature(self, rng: np.random.Generator, truth: GroundTruth, hours: pd.DatetimeIndex) -> np.ndarray:
        doy = hours.dayofyear.to_numpy(dtype=float)
        seasonal = truth.temp_mean - truth.temp_amplitude * np.cos(2 * np.pi * (doy - 15.0) / 365.25)
        diurnal = 3.0 * np.sin(2 * np.pi * (hours.hour.to_numpy() - 9.0) / 24.0)
        n_days = len(hours) // 24
        # day-level weather noise, persistent within the day
        daily_noise = np.repeat(rng.normal(0.0, truth.temp_noise, n_days), 24)
        return seasonal + diurnal + daily_noise + rng.normal(0.0, 0.3, len(hours))

    def _stations(
        self, rng: np.random.Generator, truth: GroundTruth, hours: pd.DatetimeIndex, regional: np.ndarray
    ) -> List[WeatherSeries]:
        out = []
        n_days = len(hours) // 24
        for code, (_, offset) in PROVINCES.items():
            temp = regional + offset
            wet = rng.random(len(hours)) < 0.08
            rain = np.where(wet, rng.gamma(0.8, 1.5, len(hours)), 0.0)
            snow = np.where(temp < 0.0, rain * 10.0, 0.0)
            rain = np.where(temp < 0.0, 0.0, rain)
            missing = np.zeros(len(hours), dtype=bool)
            for day in np.flatnonzero(rng.random(n_days) < truth.station_dropout):
                first = day * 24 + int(rng.integers(0, 22))
                missing[first:first + 3] = True
            temp, rain, snow = (np.where(missing, np.nan, v) for v in (temp, rain, snow))
            out.append(
                WeatherSeries(
                    station_id=f"ST-{code}",
                    province=code,
                    timestamps=hours,
                    temp_c=np.round(temp, 2),
                    rain_mm=np.round(rain, 2),
                    snow_mm=np.round(snow, 1),
                    temp_missing=missing.copy(),
                    rain_missing=missing.copy(),
                    snow_missing=missing.copy(),
                )
            )
        return out

    def _epidemic(self, rng: np.random.Generator, truth: GroundTruth, days: pd.DatetimeIndex) -> CovidSeries:
        onset = min(truth.epidemic_start_day, len(days) // 2)
        w = self.features.serial_interval()
        schedule = sorted(truth.r_schedule)
        n = len(days) - onset
        incidence = np.zeros(n)
        incidence[0] = truth.epidemic_seed_cases
        for d in range(1, n):
            r = next(value for start, value in reversed(schedule) if start <= d)
            past = incidence[max(0, d - w.size):d][::-1]
            pressure = float(past @ w[: past.size])
            susceptible = max(0.0, 1.0 - incidence[:d].sum() / POPULATION)
            incidence[d] = rng.poisson(r * susceptible * pressure)
        weights = np.array([share for share, _ in PROVINCES.values()])
        split = np.array([rng.multinomial(int(i), weights) for i in incidence])
        rows = []
        for j, code in enumerate(PROVINCES):
            # a zero total the day before onset so the seed cases count as incidence
            cumulative = np.concatenate([[0], np.cumsum(split[:, j])])
            rows.append(pd.DataFrame({"date": days[onset - 1:], "province": code, "total_positive": cumulative.astype(float)}))
        table = pd.concat(rows).sort_values(["date", "province"]).reset_index(drop=True)
        return CovidSeries(table=table)

    def _flu(self, rng: np.random.Generator, truth: GroundTruth, days: pd.DatetimeIndex) -> FluSeries:
        thursdays = days[days.dayofweek == 3]
        weeks = [(int(t.isocalendar()[0]), int(t.isocalendar()[1])) for t in thursdays]
        in_season = [(y, wk) for y, wk in weeks if wk >= FLU_FIRST_WEEK or wk <= FLU_LAST_WEEK]
        # short windows outside the season still get a reporting series
        chosen = in_season if len(in_season) >= 2 else weeks
        if len(chosen) < 2:
            raise DataValidationError("synthetic range holds fewer than two ISO weeks")
        values = []
        for year, week in chosen:
            in_window = week >= FLU_FIRST_WEEK or week <= FLU_LAST_WEEK
            distance = week - FLU_PEAK_WEEK if week < 30 else week - 52 - FLU_PEAK_WEEK
            bump = truth.flu_peak * np.exp(-0.5 * (distance / truth.flu_width_weeks) ** 2) if in_window else 0.0
            noise = float(np.exp(rng.normal(0.0, 0.05)))
            values.append(round((truth.flu_baseline + bump) * noise if in_window else 0.0, 4))
        return FluSeries(weeks=chosen, incidence=np.array(values))

    # === EVENTS ===

    def generate(
        self,
        truth: GroundTruth,
        start: Union[str, date, pd.Timestamp] = "2019-01-01",
        n_days: int = 365,
        seed: int = 0,
        region: RegionId = RegionId.PLAIN,
    ) -> SyntheticDataset:
        """Simulate weather, an epidemic, flu and hourly counts with lag feedback.

        The temperature, rt and flu covariates entering the log-mean are the
        ones the feature pipeline reconstructs from the emitted files.
        """
        if n_days < MIN_DAYS:
            raise ConfigError(f"synthetic data needs at least {MIN_DAYS} days, got {n_days}")
        rng = make_rng(seed)
        start = pd.Timestamp(start).normalize()
        days = pd.date_range(start, periods=n_days, freq="D")
        hours = pd.date_range(start, periods=n_days * 24, freq="h")

        regional = self._temperature(rng, truth, hours)
        stations = self._stations(rng, truth, hours, regional)
        covid = self._epidemic(rng, truth, days)
        flu = self._flu(rng, truth, days)

        daily_temp = pd.Series(regional, index=hours).groupby(hours.normalize()).mean()
        rt = self.features.compute_rt(covid)
        flu_daily = self.data.interpolate_flu(flu)
        hour_days = hours.normalize()
        rt_prev = np.nan_to_num(self.features.rt_column(hour_days, rt), nan=0.0)
        flu_prev = np.nan_to_num(self.features.previous_day_values(hour_days, flu_daily), nan=0.0)

        h = hours.hour.to_numpy()
        d = hours.dayofweek.to_numpy() + 1
        q = hours.quarter.to_numpy()
        base = (
            truth.intercept
            + truth.hour_effect(h)
            + np.asarray(truth.day_effects)[d - 1]
            + np.asarray(truth.quarter_effects)[q - 1]
            + truth.interaction(d, h)
            + truth.temperature * daily_temp.reindex(hour_days).to_numpy()
            + truth.rt * rt_prev
            + truth.flu * flu_prev
        )

        # lags enter centered on the baseline level so feedback leaves the mean near exp(intercept)
        level = float(np.exp(truth.intercept))
        hour_coef = np.asarray(truth.lags)
        day_coef = np.asarray(truth.lagdays)
        counts = np.zeros(len(hours), dtype=np.int64)
        totals = np.zeros(n_days)
        eta = np.empty(len(hours))
        theta = truth.theta
        for t in range(len(hours)):
            feedback = 0.0
            if t >= 26:
                feedback += float(hour_coef @ (counts[[t - 24, t - 25, t - 26]] - level))
            day = t // 24
            if day >= 7:
                feedback += float(day_coef @ (totals[[day - 1, day - 2, day - 7]] - 24.0 * level))
            eta[t] = base[t] + feedback
            mu = float(np.exp(eta[t]))
            if not MIN_MEAN <= mu <= MAX_MEAN:
                raise DataValidationError(
                    f"synthetic mean {mu:.3g} at {hours[t]} leaves [{MIN_MEAN:g}, {MAX_MEAN:g}]"
                )
            counts[t] = rng.negative_binomial(theta, theta / (theta + mu))
            totals[day] += counts[t]

        events = EventSeries(region=region, start=start, counts=counts)
        meta = {
            "mean_count": float(counts.mean()),
            "dispersion_index": float(counts.var() / counts.mean()) if counts.mean() > 0 else float("nan"),
            "epidemic_cases": float(covid.region_totals().iloc[-1]),
        }
        logger.info(
            "generated %d day(s) for %s from seed %d: mean %.2f events/hour",
            n_days,
            region.value,
            seed,
            meta["mean_count"],
        )
        return SyntheticDataset(
            truth=truth,
            seed=seed,
            region=Region(id=region, provinces={code: share for code, (share, _) in PROVINCES.items()}),
            events=events,
            stations=stations,
            covid=covid,
            flu=flu,
            eta=eta,
            meta=meta,
        )

    # === FILES ===

    def write_dataset(self, dataset: SyntheticDataset, out_dir: Union[str, Path]) -> Dict[str, Path]:
        """Emit the five input CSVs in the ingestion schemas plus truth.json."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / f"{name}.csv" for name in ("events", "weather", "covid", "flu", "regions")}
        stamp = "%Y-%m-%dT%H:%M"

        ev = dataset.events
        pd.DataFrame(
            {"region": ev.region.value, "timestamp": ev.index.strftime(stamp), "count": ev.counts}
        ).to_csv(paths["events"], index=False, lineterminator="\n")

        weather = pd.concat(
            [
                pd.DataFrame(
                    {
                        "station": st.station_id,
                        "province": st.province,
                        "timestamp": st.timestamps.strftime(stamp),
                        "temp_c": st.temp_c,
                        "rain_mm": st.rain_mm,
                        "snow_mm": st.snow_mm,
                    }
                )
                for st in dataset.stations
            ]
        )
        weather.to_csv(paths["weather"], index=False, na_rep="", float_format="%.2f", lineterminator="\n")

        covid = dataset.covid.table.copy()
        covid["date"] = pd.DatetimeIndex(covid["date"]).strftime("%Y-%m-%d")
        covid["total_positive"] = covid["total_positive"].astype(np.int64)
        covid.to_csv(paths["covid"], index=False, lineterminator="\n")

        pd.DataFrame(
            {
                "year": [y for y, _ in dataset.flu.weeks],
                "week": [w for _, w in dataset.flu.weeks],
                "incidence": dataset.flu.incidence,
            }
        ).to_csv(paths["flu"], index=False, float_format="%.4f", lineterminator="\n")

        pd.DataFrame(
            {
                "region": dataset.region.id.value,
                "province": list(dataset.region.provinces),
                "weight": list(dataset.region.provinces.values()),
            }
        ).to_csv(paths["regions"], index=False, lineterminator="\n")

        truth = {
            "seed": dataset.seed,
            "start": ev.start.strftime("%Y-%m-%d"),
            "days": len(ev.counts) // 24,
            "region": ev.region.value,
            "truth": dataset.truth.model_dump(mode="json"),
            "meta": dataset.meta,
        }
        paths["truth"] = out / "truth.json"
        paths["truth"].write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
        logger.info("wrote synthetic dataset to %s", out)
        return paths
