from datetime import date
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


FRAME_COLUMNS = [
    "hour",
    "day",
    "quarter",
    "temperature",
    "events_lag1",
    "events_lag2",
    "events_lag3",
    "events_lagday1",
    "events_lagday2",
    "events_lagday7",
    "rt",
    "flu",
]


class RegionId(str, Enum):
    PLAIN = "Plain"
    METROPOLITAN = "Metropolitan"
    LAKES = "Lakes"
    ALPS = "Alps"


class Region(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: RegionId
    provinces: Dict[str, float]  # province code -> call-share weight

    @field_validator("provinces")
    @classmethod
    def _weights_sum_to_one(cls, v: Dict[str, float]) -> Dict[str, float]:
        if not v:
            raise ValueError("a region needs at least one province")
        if any(w < 0 or w > 1 for w in v.values()):
            raise ValueError("province weights must lie in [0, 1]")
        total = float(sum(v.values()))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"province weights sum to {total!r}, expected 1")
        return v


class EventSeries(BaseModel):
    """Gap-free hourly event counts for one region."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    region: RegionId
    start: pd.Timestamp
    counts: np.ndarray

    @field_validator("start", mode="before")
    @classmethod
    def _hour_resolution(cls, v: pd.Timestamp) -> pd.Timestamp:
        v = pd.Timestamp(v)
        if v != v.floor("h"):
            raise ValueError("start must be truncated to the hour")
        return v

    @field_validator("counts", mode="before")
    @classmethod
    def _non_negative(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.int64)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("counts must be a non-empty 1-d sequence")
        if np.any(v < 0):
            raise ValueError("counts must be non-negative")
        v.setflags(write=False)
        return v

    @property
    def end(self) -> pd.Timestamp:
        return self.start + pd.Timedelta(hours=len(self.counts) - 1)

    @property
    def index(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=len(self.counts), freq="h")

    def to_series(self) -> pd.Series:
        return pd.Series(self.counts, index=self.index, name="y")

    def daily_totals(self, complete_only: bool = True) -> pd.Series:
        s = self.to_series()
        grouped = s.groupby(s.index.normalize())
        totals = grouped.sum().astype(float)
        if complete_only:
            totals[grouped.size() < 24] = np.nan
        return totals


class WeatherSeries(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    station_id: str
    province: str
    timestamps: pd.DatetimeIndex
    temp_c: np.ndarray
    rain_mm: np.ndarray
    snow_mm: np.ndarray
    temp_missing: np.ndarray
    rain_missing: np.ndarray
    snow_missing: np.ndarray

    @model_validator(mode="after")
    def _check(self) -> "WeatherSeries":
        n = len(self.timestamps)
        if not (self.timestamps.is_monotonic_increasing and self.timestamps.is_unique):
            raise ValueError(f"station {self.station_id}: timestamps must be strictly increasing")
        for name in ("temp", "rain", "snow"):
            values = getattr(self, f"{name}_{'c' if name == 'temp' else 'mm'}")
            flags = getattr(self, f"{name}_missing")
            if len(values) != n or len(flags) != n:
                raise ValueError(f"station {self.station_id}: {name} length mismatch")
            if not np.array_equal(np.isnan(values), flags):
                raise ValueError(f"station {self.station_id}: {name} missing flags disagree with values")
        return self

    def temperature(self) -> pd.Series:
        return pd.Series(self.temp_c, index=self.timestamps, name=self.station_id)


class DailyTemperature(BaseModel):
    """Region-level daily mean temperature; NaN marks a missing day."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: pd.Series
    missing_days: List[date] = Field(default_factory=list)


class CovidSeries(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    # long format: date, province, total_positive
    table: pd.DataFrame

    @field_validator("table")
    @classmethod
    def _check_table(cls, v: pd.DataFrame) -> pd.DataFrame:
        missing = {"date", "province", "total_positive"} - set(v.columns)
        if missing:
            raise ValueError(f"covid table lacks columns {sorted(missing)}")
        if (v["total_positive"] < 0).any():
            raise ValueError("total_positive must be non-negative")
        return v

    def region_totals(self) -> pd.Series:
        """Daily total positives summed over every province."""
        totals = self.table.groupby("date")["total_positive"].sum().sort_index()
        totals.index = pd.DatetimeIndex(totals.index)
        return totals.astype(float)


class FluSeries(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    weeks: List[Tuple[int, int]]
    incidence: np.ndarray

    @model_validator(mode="after")
    def _check(self) -> "FluSeries":
        if len(self.weeks) != len(self.incidence):
            raise ValueError("one incidence value per week is required")
        if len(set(self.weeks)) != len(self.weeks):
            raise ValueError("duplicate flu weeks")
        if np.any(np.asarray(self.incidence) < 0):
            raise ValueError("flu incidence must be non-negative")
        return self


class RtSeries(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dates: pd.DatetimeIndex
    rt: np.ndarray  # NaN where undefined
    credible: np.ndarray

    @model_validator(mode="after")
    def _check(self) -> "RtSeries":
        defined = self.rt[~np.isnan(self.rt)]
        if np.any(defined < 0):
            raise ValueError("rt must be non-negative")
        if not (len(self.dates) == len(self.rt) == len(self.credible)):
            raise ValueError("rt arrays must share one length")
        return self

    def to_series(self) -> pd.Series:
        return pd.Series(self.rt, index=self.dates, name="rt")


class CovariateFrame(BaseModel):
    """Per-hour covariates plus the response `y`, indexed by timestamp."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: pd.DataFrame
    dropped: Dict[str, int] = Field(default_factory=dict)

    @field_validator("data")
    @classmethod
    def _check_data(cls, v: pd.DataFrame) -> pd.DataFrame:
        missing = [c for c in FRAME_COLUMNS + ["y"] if c not in v.columns]
        if missing:
            raise ValueError(f"frame lacks columns {missing}")
        if v[FRAME_COLUMNS + ["y"]].isna().any().any():
            raise ValueError("frame rows admitted to fitting must have no missing cells")
        if not v["hour"].between(0, 23).all():
            raise ValueError("hour must lie in 0..23")
        if not v["day"].between(1, 7).all():
            raise ValueError("day must lie in 1..7")
        if not v["quarter"].between(1, 4).all():
            raise ValueError("quarter must lie in 1..4")
        return v

    def __len__(self) -> int:
        return len(self.data)

    @property
    def y(self) -> np.ndarray:
        return self.data["y"].to_numpy(dtype=float)

    def window(self, since: Optional[pd.Timestamp] = None, until: Optional[pd.Timestamp] = None) -> "CovariateFrame":
        """Rows with since <= timestamp <= until."""
        data = self.data
        if since is not None:
            data = data[data.index >= pd.Timestamp(since)]
        if until is not None:
            data = data[data.index <= pd.Timestamp(until)]
        return CovariateFrame(data=data, dropped=dict(self.dropped))


class AlignmentReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    start: pd.Timestamp
    end: pd.Timestamp
    missing: Dict[str, List[Tuple[pd.Timestamp, pd.Timestamp]]] = Field(default_factory=dict)

    @property
    def hours(self) -> int:
        return int((self.end - self.start) / pd.Timedelta(hours=1)) + 1
