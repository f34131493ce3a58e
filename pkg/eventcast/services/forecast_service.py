import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..errors import DataValidationError, EventcastError, ForecastError, MetricError
from ..models.forecast import (
    ExogenousForecast,
    ForecastReport,
    ForecastRow,
    HorizonScore,
    MaeResult,
    PipelineData,
    RollingPlan,
)
from ..models.gam import FitOptions, FittedModel, ModelSpec
from .feature_service import calendar_features, lag_columns
from .gam_service import GamService

logger = logging.getLogger(__name__)

HOUR = pd.Timedelta(hours=1)


def compute_mae(predicted: Sequence[float], observed: Sequence[float]) -> MaeResult:
    """Percentage MAE of E_i = (Yhat_i - Y_i) / Y_i; pairs with Y_i = 0 are excluded."""
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if predicted.shape != observed.shape:
        raise MetricError("predicted and observed lengths differ")
    keep = observed != 0
    if not keep.any():
        raise MetricError(f"all {observed.size} pair(s) have a zero observation")
    errors = 100.0 * (predicted[keep] - observed[keep]) / observed[keep]
    return MaeResult(
        mae_pct=float(np.mean(np.abs(errors))),
        errors_pct=errors,
        n=int(keep.sum()),
        excluded=int((~keep).sum()),
    )


def build_rolling_plan(
    first_day: date,
    last_day: date,
    horizons: Sequence[int],
    refit_every: int = 7,
    min_history_days: int = 365,
    eval_days: Optional[int] = None,
) -> RollingPlan:
    """Origins with enough history whose every horizon still lands inside the data."""
    if not horizons:
        raise ForecastError("at least one horizon is required")
    first = pd.Timestamp(first_day) + pd.Timedelta(days=min_history_days - 1)
    last = pd.Timestamp(last_day) - pd.Timedelta(days=max(horizons))
    if first > last:
        raise ForecastError(
            f"data {first_day}..{last_day} cannot hold {min_history_days} history day(s) "
            f"plus a {max(horizons)}-day horizon"
        )
    origins = [d.date() for d in pd.date_range(first, last, freq="D")]
    if eval_days is not None:
        origins = origins[:eval_days]
    groups = [origins[i:i + refit_every] for i in range(0, len(origins), refit_every)]
    return RollingPlan(
        horizons=sorted(set(horizons)),
        refit_every=refit_every,
        min_history_days=min_history_days,
        groups=groups,
    )


class GamForecaster:
    """Fits the GAM on an expanding window and forecasts hourly means recursively."""

    def __init__(
        self,
        spec: ModelSpec,
        options: Optional[FitOptions] = None,
        gam: Optional[GamService] = None,
        exogenous: Optional[ExogenousForecast] = None,
        fit_since: Optional[pd.Timestamp] = None,
    ):
        self.spec = spec
        self.gam = gam or GamService(options)
        self.options = options or self.gam.options
        self.exogenous = exogenous
        self.fit_since = fit_since

    def fit(self, data: PipelineData, origin: date) -> FittedModel:
        until = pd.Timestamp(origin) + pd.Timedelta(hours=23)
        return self.gam.fit(data.frame, self.spec, self.options, since=self.fit_since, until=until)

    # === EXOGENOUS CARRY-FORWARD ===

    @staticmethod
    def _last_defined(series: pd.Series, day: pd.Timestamp, default: float = 0.0) -> float:
        known = series[series.index <= day].dropna()
        return float(known.iloc[-1]) if len(known) else default

    def _exogenous_row(self, data: PipelineData, origin: pd.Timestamp, day: pd.Timestamp) -> Dict[str, float]:
        temps = data.temperature.values
        values = {
            "temperature": self._last_defined(temps, origin, np.nan),
            # rt and flu enter lagged one day, so origin's value is the last known
            "rt": self._rt_on(data, origin),
            "flu": float(data.flu.get(origin, 0.0)),
        }
        if self.exogenous is not None:
            for col in values:
                override = self.exogenous.value(day, col)
                if override is not None:
                    values[col] = override
        if np.isnan(values["temperature"]):
            raise ForecastError(f"no observed temperature on or before {origin.date()}")
        return values

    @staticmethod
    def _rt_on(data: PipelineData, day: pd.Timestamp) -> float:
        rt = data.rt.to_series()
        if len(rt) == 0 or day < rt.index[0]:
            return 0.0
        known = rt[rt.index <= day].dropna()
        return float(known.iloc[-1]) if len(known) else 0.0

    # === RECURSIVE PATH ===

    def path(self, model: FittedModel, data: PipelineData, origin: date, max_horizon: int) -> pd.Series:
        """Hourly means for days origin+1 .. origin+max_horizon.

        Lag covariates that fall after the origin are filled with the
        model's own (real-valued) predictions.
        """
        origin = pd.Timestamp(origin)
        origin_end = origin + pd.Timedelta(hours=23)
        observed = data.events.to_series().astype(float)
        if origin_end > observed.index[-1]:
            raise ForecastError(f"events end at {observed.index[-1]}, before origin {origin.date()}")
        if origin - pd.Timedelta(days=7) < observed.index[0]:
            raise ForecastError(f"origin {origin.date()} has less than 8 days of event history")
        series = observed[:origin_end]
        for step in range(1, max_horizon + 1):
            day = origin + pd.Timedelta(days=step)
            hours = pd.date_range(day, periods=24, freq="h")
            recent = series.iloc[-14 * 24:]
            extended = pd.concat([recent, pd.Series(np.nan, index=hours)])
            grouped = recent.groupby(recent.index.normalize())
            totals = grouped.sum()
            totals[grouped.size() < 24] = np.nan
            rows = calendar_features(hours)
            lags = lag_columns(extended, totals).loc[hours]
            for col in lags.columns:
                rows[col] = lags[col].to_numpy()
            for col, value in self._exogenous_row(data, origin, day).items():
                rows[col] = value
            if rows[list(lags.columns)].isna().any().any():
                raise ForecastError(f"missing event history for {day.date()}")
            mu = self.gam.predict(model, rows)
            series = pd.concat([series, pd.Series(mu, index=hours)])
        return series[origin_end + HOUR:]

    def horizon(self, model: FittedModel, data: PipelineData, origin: date, h: int) -> np.ndarray:
        """The 24 hourly means of day origin + h."""
        return self.path(model, data, origin, h).to_numpy()[-24:]


class ForecastService:
    def __init__(self, threads: int = 1):
        self.threads = threads

    def forecast_horizon(self, forecaster: GamForecaster, model: FittedModel, data: PipelineData, origin: date, h: int) -> np.ndarray:
        return forecaster.horizon(model, data, origin, h)

    def compute_mae(self, predicted: Sequence[float], observed: Sequence[float]) -> MaeResult:
        return compute_mae(predicted, observed)

    @staticmethod
    def observed_daily(data: PipelineData) -> pd.Series:
        return data.events.daily_totals(complete_only=True)

    def _run_group(self, forecaster, data: PipelineData, group: List[date], horizons: List[int], observed: pd.Series):
        rows: List[ForecastRow] = []
        failures: Dict[str, str] = {}
        try:
            model = forecaster.fit(data, group[0])
        except EventcastError as exc:
            logger.warning("fit at origin %s failed: %s", group[0], exc.message)
            return rows, {str(o): f"fit failed: {exc.message}" for o in group}
        for origin in group:
            try:
                path = forecaster.path(model, data, origin, max(horizons))
                daily = path.groupby(path.index.normalize()).sum()
                for h in horizons:
                    target = pd.Timestamp(origin) + pd.Timedelta(days=h)
                    y = observed.get(target, np.nan)
                    if np.isnan(y):
                        raise ForecastError(f"no complete observation for {target.date()}")
                    yhat = float(daily[target])
                    rows.append(
                        ForecastRow(
                            origin=origin,
                            horizon_days=h,
                            target=target.date(),
                            predicted=yhat,
                            observed=float(y),
                            rel_error_pct=100.0 * (yhat - y) / y if y != 0 else None,
                        )
                    )
            except EventcastError as exc:
                rows = [r for r in rows if r.origin != origin]
                failures[str(origin)] = exc.message
                logger.warning("origin %s skipped: %s", origin, exc.message)
        return rows, failures

    def rolling_evaluate(self, data: PipelineData, plan: RollingPlan, forecaster) -> ForecastReport:
        """Refit per plan group, forecast every horizon from every origin, score per horizon."""
        observed = self.observed_daily(data)
        logger.info(
            "rolling evaluation: %d origin(s) in %d refit group(s), horizons %s",
            len(plan.origins),
            len(plan.groups),
            plan.horizons,
        )
        with ThreadPoolExecutor(max_workers=max(1, self.threads)) as pool:
            results = list(
                pool.map(lambda g: self._run_group(forecaster, data, g, plan.horizons, observed), plan.groups)
            )
        rows: List[ForecastRow] = []
        failures: Dict[str, str] = {}
        for group_rows, group_failures in results:
            rows.extend(group_rows)
            failures.update(group_failures)
        rows.sort(key=lambda r: (r.origin, r.horizon_days))
        return ForecastReport(rows=rows, scores=self.score(rows, plan.horizons, len(failures)), failures=failures)

    @staticmethod
    def score(rows: List[ForecastRow], horizons: List[int], failed_origins: int) -> List[HorizonScore]:
        scores = []
        for h in horizons:
            hr = [r for r in rows if r.horizon_days == h]
            try:
                res = compute_mae([r.predicted for r in hr], [r.observed for r in hr])
                mae, n, excluded = res.mae_pct, res.n, res.excluded
            except MetricError:
                mae, n, excluded = None, 0, len(hr)
            scores.append(HorizonScore(horizon_days=h, mae_pct=mae, n=n, skipped=failed_origins + excluded))
        return scores

    # === EXOGENOUS FORECASTS ===

    def load_exogenous_forecasts(self, source: Union[str, Path, IO[str]]) -> ExogenousForecast:
        df = pd.read_csv(source, dtype=str, keep_default_na=False)
        if "date" not in df.columns:
            raise DataValidationError("exogenous forecasts need a date column")
        dates = pd.to_datetime(df["date"].str.strip(), format="ISO8601", errors="coerce")
        if dates.isna().any():
            line = int(np.flatnonzero(dates.isna().to_numpy())[0]) + 2
            raise DataValidationError(f"exogenous forecasts line {line}: malformed date")
        table = pd.DataFrame(index=pd.DatetimeIndex(dates).normalize())
        for col in ("temperature", "rt", "flu"):
            if col in df.columns:
                table[col] = pd.to_numeric(df[col].str.strip().replace("", np.nan), errors="coerce").to_numpy()
        if table.index.duplicated().any():
            raise DataValidationError("exogenous forecasts repeat a date")
        logger.info("loaded exogenous forecasts for %d day(s)", len(table))
        return ExogenousForecast(table=table)
