from datetime import date
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .series import CovariateFrame, DailyTemperature, EventSeries, RtSeries


DEFAULT_HORIZONS = [1, 2, 5, 7]


class ForecastTask(BaseModel):
    model_config = ConfigDict(frozen=True)

    origin: date  # last fully observed day
    horizons: List[int] = Field(default_factory=lambda: list(DEFAULT_HORIZONS))
    refit: bool = True  # fit a fresh model at this origin

    @field_validator("horizons")
    @classmethod
    def _non_empty(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("at least one horizon is required")
        if any(h < 1 for h in v):
            raise ValueError("horizons are positive day counts")
        return sorted(set(v))


class RollingPlan(BaseModel):
    """Origins in date order; each group shares one fit."""

    model_config = ConfigDict(frozen=True)

    horizons: List[int]
    refit_every: int = Field(default=7, ge=1)
    min_history_days: int = Field(default=365, ge=1)
    groups: List[List[date]]

    @property
    def origins(self) -> List[date]:
        return [o for g in self.groups for o in g]

    def tasks(self) -> List[ForecastTask]:
        out = []
        for group in self.groups:
            for i, origin in enumerate(group):
                out.append(ForecastTask(origin=origin, horizons=self.horizons, refit=i == 0))
        return out


class ForecastRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    origin: date
    horizon_days: int
    target: date
    predicted: float
    observed: float
    rel_error_pct: Optional[float]  # None when observed == 0


class HorizonScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon_days: int
    mae_pct: Optional[float]
    n: int
    skipped: int


class MaeResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mae_pct: float
    errors_pct: np.ndarray  # E_i for the included pairs, in percent
    n: int
    excluded: int


class ForecastReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: List[ForecastRow] = Field(default_factory=list)
    scores: List[HorizonScore] = Field(default_factory=list)
    failures: Dict[str, str] = Field(default_factory=dict)  # origin -> reason

    def rows_for(self, horizon: int) -> List[ForecastRow]:
        return [r for r in self.rows if r.horizon_days == horizon]

    def score(self, horizon: int) -> HorizonScore:
        for s in self.scores:
            if s.horizon_days == horizon:
                return s
        raise KeyError(horizon)

    def error_series(self, horizon: int) -> pd.Series:
        rows = [r for r in self.rows_for(horizon) if r.rel_error_pct is not None]
        return pd.Series(
            [r.rel_error_pct for r in rows],
            index=pd.DatetimeIndex([pd.Timestamp(r.target) for r in rows]),
            name=f"h{horizon}",
        )


class ExogenousForecast(BaseModel):
    """Externally supplied daily covariate values that replace carry-forward."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    table: pd.DataFrame  # indexed by day; columns temperature, rt, flu (NaN = not supplied)

    def value(self, day: pd.Timestamp, column: str) -> Optional[float]:
        if column not in self.table.columns or day not in self.table.index:
            return None
        v = self.table.at[day, column]
        return None if pd.isna(v) else float(v)


class PipelineData(BaseModel):
    """Raw regional inputs kept around so forecasts can rebuild covariates."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    events: EventSeries
    temperature: DailyTemperature
    rt: RtSeries
    flu: pd.Series
    frame: CovariateFrame
