import math
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .series import CovidSeries, EventSeries, FluSeries, Region, WeatherSeries

# hourly means the generator may draw from
MEAN_RANGE = (0.1, 1000.0)


class GroundTruth(BaseModel):
    """Known log-mean structure the synthetic generator draws counts from."""

    model_config = ConfigDict(frozen=True)

    intercept: float = math.log(10.0)
    hour_amplitude: float = 0.6
    hour_phase: float = 7.5  # hour at which the sinusoid crosses zero upwards
    day_effects: List[float] = Field(default_factory=lambda: [0.12, 0.04, 0.02, 0.0, 0.03, -0.08, -0.13])
    quarter_effects: List[float] = Field(default_factory=lambda: [0.05, -0.03, 0.02, -0.04])
    interaction_amplitude: float = 0.15
    # weekday/weekend contrast modulating the interaction
    interaction_profile: List[float] = Field(default_factory=lambda: [-0.4, -0.4, -0.4, -0.4, -0.4, 1.0, 1.0])
    temperature: float = 0.004
    lags: Tuple[float, float, float] = (0.004, 0.002, 0.001)
    lagdays: Tuple[float, float, float] = (0.0004, 0.0002, 0.0002)
    rt: float = 0.05
    flu: float = 0.01
    theta: float = 10.0

    # covariate generators
    temp_mean: float = 13.0
    temp_amplitude: float = 10.0
    temp_noise: float = 1.5
    station_dropout: float = 0.02  # daily chance of a 3-hour sensor gap
    epidemic_start_day: int = 60
    epidemic_seed_cases: int = 50
    r_schedule: List[Tuple[int, float]] = Field(
        default_factory=lambda: [(0, 1.3), (40, 0.8), (100, 1.15), (150, 0.9), (220, 1.05)]
    )
    flu_peak: float = 8.0
    flu_width_weeks: float = 3.5
    flu_baseline: float = 0.5

    @field_validator("day_effects")
    @classmethod
    def _seven(cls, v: List[float]) -> List[float]:
        if len(v) != 7:
            raise ValueError("seven day effects are required")
        return v

    @field_validator("quarter_effects")
    @classmethod
    def _four(cls, v: List[float]) -> List[float]:
        if len(v) != 4:
            raise ValueError("four quarter effects are required")
        return v

    @model_validator(mode="after")
    def _centered(self) -> "GroundTruth":
        for name in ("day_effects", "quarter_effects", "interaction_profile"):
            if abs(sum(getattr(self, name))) > 1e-9:
                raise ValueError(f"{name} must be mean-centered")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        low, high = self.calendar_mean_range()
        if low < MEAN_RANGE[0] or high > MEAN_RANGE[1]:
            raise ValueError(
                f"calendar effects put the hourly mean in [{low:.3g}, {high:.3g}], "
                f"outside [{MEAN_RANGE[0]:g}, {MEAN_RANGE[1]:g}]"
            )
        return self

    def calendar_mean_range(self) -> Tuple[float, float]:
        """Smallest and largest mean the hour, day, quarter and interaction effects allow."""
        swing = (
            abs(self.hour_amplitude)
            + max(abs(v) for v in self.day_effects)
            + max(abs(v) for v in self.quarter_effects)
            + abs(self.interaction_amplitude) * max(abs(v) for v in self.interaction_profile)
        )
        return math.exp(self.intercept - swing), math.exp(self.intercept + swing)

    def hour_effect(self, hour) -> np.ndarray:
        h = np.asarray(hour, dtype=float)
        return self.hour_amplitude * np.sin(2 * np.pi * (h - self.hour_phase) / 24.0)

    def interaction(self, day, hour) -> np.ndarray:
        d = np.asarray(day, dtype=int)
        h = np.asarray(hour, dtype=float)
        profile = np.asarray(self.interaction_profile)[d - 1]
        return self.interaction_amplitude * profile * np.cos(2 * np.pi * (h - 3.0) / 24.0)

    @classmethod
    def flat(cls, intercept: float = math.log(10.0), theta: float = 10.0) -> "GroundTruth":
        """Truth with every effect switched off: counts are i.i.d. NB."""
        return cls(
            intercept=intercept,
            hour_amplitude=0.0,
            day_effects=[0.0] * 7,
            quarter_effects=[0.0] * 4,
            interaction_amplitude=0.0,
            temperature=0.0,
            lags=(0.0, 0.0, 0.0),
            lagdays=(0.0, 0.0, 0.0),
            rt=0.0,
            flu=0.0,
            theta=theta,
        )


class SyntheticDataset(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    truth: GroundTruth
    seed: int
    region: Region
    events: EventSeries
    stations: List[WeatherSeries]
    covid: CovidSeries
    flu: FluSeries
    eta: np.ndarray  # true log-mean per hour
    meta: Dict[str, float] = Field(default_factory=dict)
