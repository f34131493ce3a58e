import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd
from scipy.stats import gamma

from ..errors import ConfigError, DataValidationError
from ..models.series import FRAME_COLUMNS, CovariateFrame, CovidSeries, DailyTemperature, EventSeries, RtSeries

logger = logging.getLogger(__name__)

LAG_HOURS = {"events_lag1": 1, "events_lag2": 2, "events_lag3": 3}
LAG_DAYS = {"events_lagday1": 1, "events_lagday2": 2, "events_lagday7": 7}


def calendar_features(timestamps) -> pd.DataFrame:
    """hour 0-23, day 1-7 with Monday = 1, quarter 1-4."""
    idx = pd.DatetimeIndex(timestamps)
    return pd.DataFrame(
        {
            "hour": idx.hour.astype(np.int64),
            "day": (idx.dayofweek + 1).astype(np.int64),
            "quarter": idx.quarter.astype(np.int64),
        },
        index=idx,
    )


def lag_columns(hourly: pd.Series, daily_totals: pd.Series) -> pd.DataFrame:
    """The six event-lag covariates for every hour of a gap-free hourly series.

    events_lagk is the count k-1 hours before the same hour of the previous
    day; events_lagdayD is the total of the calendar day D days earlier.
    NaN wherever the needed history is missing.
    """
    out = pd.DataFrame(index=hourly.index)
    for col, k in LAG_HOURS.items():
        out[col] = hourly.shift(24 + k - 1)
    days = hourly.index.normalize()
    for col, d in LAG_DAYS.items():
        out[col] = daily_totals.reindex(days - pd.Timedelta(days=d)).to_numpy()
    return out


class FeatureService:
    def __init__(
        self,
        serial_mean: float = 6.6,
        serial_sd: float = 4.9,
        serial_max_days: int = 30,
        rt_window: int = 7,
        credible_min_cases: float = 12.0,
    ):
        self.serial_mean = serial_mean
        self.serial_sd = serial_sd
        self.serial_max_days = serial_max_days
        self.rt_window = rt_window
        self.credible_min_cases = credible_min_cases

    # === CALENDAR / LAGS ===

    def calendar_features(self, timestamps) -> pd.DataFrame:
        return calendar_features(timestamps)

    def event_lags(self, events: EventSeries) -> pd.DataFrame:
        lags = lag_columns(events.to_series().astype(float), events.daily_totals(complete_only=True))
        undefined = int(lags.isna().any(axis=1).sum())
        if undefined:
            logger.debug("%d hour(s) lack lag history", undefined)
        return lags

    # === EFFECTIVE REPRODUCTION NUMBER ===

    def serial_interval(self, mean: Optional[float] = None, sd: Optional[float] = None, max_days: Optional[int] = None) -> np.ndarray:
        """Discretized gamma weights w_1..w_S (index 0 holds a 1-day interval)."""
        mean = self.serial_mean if mean is None else mean
        sd = self.serial_sd if sd is None else sd
        max_days = self.serial_max_days if max_days is None else max_days
        if mean <= 0 or sd <= 0 or max_days < 1:
            raise ConfigError("serial interval needs positive mean, sd and length")
        dist = gamma(a=(mean / sd) ** 2, scale=sd * sd / mean)
        s = np.arange(1, max_days + 1)
        w = dist.cdf(s + 0.5) - dist.cdf(s - 0.5)
        return w / w.sum()

    @staticmethod
    def daily_incidence(covid: CovidSeries) -> pd.Series:
        cumulative = covid.region_totals()
        cumulative = cumulative.reindex(pd.date_range(cumulative.index[0], cumulative.index[-1], freq="D")).ffill()
        values = cumulative.to_numpy()
        # the first total carries the backlog before the record starts
        incidence = np.diff(values, prepend=values[:1])
        corrections = int(np.sum(incidence < 0))
        if corrections:
            logger.info("clamped %d negative daily increment(s) of total positives", corrections)
        return pd.Series(np.clip(incidence, 0.0, None), index=cumulative.index, name="incidence")

    def rt_from_incidence(self, incidence: pd.Series, serial_interval: np.ndarray, window: int) -> RtSeries:
        if window < 1:
            raise ConfigError(f"Rt window must be at least 1 day, got {window}")
        w = np.asarray(serial_interval, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError("serial interval weights must be non-negative and sum to 1")
        I = incidence.to_numpy(dtype=float)
        n = I.size
        # Lambda_d = sum_s w_s I_{d-s}; incidence before the first record is zero
        lam = np.convolve(I, np.concatenate([[0.0], w]))[:n]
        num = pd.Series(I).rolling(window, min_periods=1).sum().to_numpy()
        den = pd.Series(lam).rolling(window, min_periods=1).sum().to_numpy()
        with np.errstate(divide="ignore", invalid="ignore"):
            rt = np.where(den >= 1.0, num / den, np.nan)
        credible = (~np.isnan(rt)) & (np.arange(n) >= w.size) & (num >= self.credible_min_cases)
        return RtSeries(dates=pd.DatetimeIndex(incidence.index), rt=rt, credible=credible)

    def compute_rt(self, covid: CovidSeries, serial_interval: Optional[np.ndarray] = None, window: Optional[int] = None) -> RtSeries:
        """Ratio-of-sums renewal estimate of Rt on region-level positives."""
        w = self.serial_interval() if serial_interval is None else serial_interval
        rt = self.rt_from_incidence(self.daily_incidence(covid), w, self.rt_window if window is None else window)
        logger.info(
            "computed Rt for %d day(s), %d undefined, %d credible",
            len(rt.rt),
            int(np.isnan(rt.rt).sum()),
            int(rt.credible.sum()),
        )
        return rt

    # === FRAME ===

    @staticmethod
    def previous_day_values(days: pd.DatetimeIndex, daily: pd.Series) -> np.ndarray:
        return daily.reindex(days - pd.Timedelta(days=1)).to_numpy(dtype=float)

    def rt_column(self, days: pd.DatetimeIndex, rt: RtSeries) -> np.ndarray:
        values = self.previous_day_values(days, rt.to_series())
        # zero before the epidemic so one model form spans both periods
        values[(days - pd.Timedelta(days=1)) < rt.dates[0]] = 0.0
        return values

    def assemble_frame(
        self,
        events: EventSeries,
        temperature: Union[DailyTemperature, pd.Series],
        rt: RtSeries,
        flu_daily: pd.Series,
    ) -> CovariateFrame:
        temps = temperature.values if isinstance(temperature, DailyTemperature) else temperature
        hourly = events.to_series()
        idx = hourly.index
        days = idx.normalize()
        data = calendar_features(idx)
        data["temperature"] = temps.sort_index().reindex(days).to_numpy(dtype=float)
        lags = self.event_lags(events)
        for col in lags.columns:
            data[col] = lags[col].to_numpy()
        data["rt"] = self.rt_column(days, rt)
        flu = self.previous_day_values(days, flu_daily.sort_index())
        data["flu"] = np.nan_to_num(flu, nan=0.0)
        data["y"] = hourly.to_numpy(dtype=np.int64)
        data = data[FRAME_COLUMNS + ["y"]]
        data.index.name = "timestamp"

        reasons = {
            "lags": data[list(LAG_HOURS) + list(LAG_DAYS)].isna().any(axis=1),
            "temperature": data["temperature"].isna(),
            "rt": data["rt"].isna(),
        }
        dropped: Dict[str, int] = {}
        taken = pd.Series(False, index=data.index)
        for reason, mask in reasons.items():
            dropped[reason] = int((mask & ~taken).sum())
            taken |= mask
        dropped["total"] = int(taken.sum())
        kept = data[~taken]
        if kept.empty:
            raise DataValidationError(f"no complete covariate rows remain (dropped {dropped})")
        logger.info("assembled frame: %d row(s) kept, dropped %s", len(kept), dropped)
        return CovariateFrame(data=kept, dropped=dropped)

    def export_frame(self, frame: CovariateFrame, path: Union[str, Path]) -> Path:
        path = Path(path)
        out = frame.data[FRAME_COLUMNS + ["y"]].copy()
        out.index = out.index.strftime("%Y-%m-%dT%H:%M")
        out.to_csv(path, index_label="timestamp", float_format="%.10g", lineterminator="\n")
        return path
