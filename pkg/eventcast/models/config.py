from datetime import date
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .forecast import DEFAULT_HORIZONS
from .gam import FitOptions, ModelSpec


INPUT_FILES = {
    "events": "events.csv",
    "weather": "weather.csv",
    "covid": "covid.csv",
    "flu": "flu.csv",
    "regions": "regions.csv",
}


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # inputs
    data_dir: str = "data"
    events: Optional[str] = None
    weather: Optional[str] = None
    covid: Optional[str] = None
    flu: Optional[str] = None
    regions: Optional[str] = None
    exogenous: Optional[str] = None
    region: Optional[str] = None  # a region name, "all", or None when the file holds one region

    # model
    hour_dim: int = Field(default=24, ge=3)
    day_dim: int = Field(default=7, ge=3)
    quarter_dim: int = Field(default=4, ge=3)
    tensor_dims: List[int] = Field(default_factory=lambda: [7, 10])
    side_constraints: bool = True
    pirls_tol: float = Field(default=1e-8, gt=0)
    max_pirls_iter: int = Field(default=200, gt=0)
    max_outer_rounds: int = Field(default=20, gt=0)
    fit_since: Optional[date] = None
    fit_until: Optional[date] = None

    # features
    serial_mean: float = Field(default=6.6, gt=0)
    serial_sd: float = Field(default=4.9, gt=0)
    rt_window: int = 7

    # rolling plan
    horizons: List[int] = Field(default_factory=lambda: list(DEFAULT_HORIZONS))
    refit_every: int = Field(default=7, ge=1)
    min_history_days: int = Field(default=365, ge=1)
    eval_days: Optional[int] = Field(default=None, ge=1)
    benchmarks: bool = True

    # run
    output_dir: str = "output"
    seed: int = 0
    threads: int = Field(default=1, ge=1)

    @field_validator("tensor_dims")
    @classmethod
    def _two_margins(cls, v: List[int]) -> List[int]:
        if len(v) != 2 or any(d < 3 for d in v):
            raise ValueError("tensor_dims takes two margins of at least 3")
        return v

    @field_validator("horizons")
    @classmethod
    def _horizons(cls, v: List[int]) -> List[int]:
        if not v or any(h < 1 for h in v):
            raise ValueError("horizons must be positive day counts")
        return sorted(set(v))

    def input_path(self, name: str) -> Path:
        explicit = getattr(self, name)
        if explicit:
            return Path(explicit)
        return Path(self.data_dir) / INPUT_FILES[name]

    def model_spec(self) -> ModelSpec:
        return ModelSpec.default(
            hour_dim=self.hour_dim,
            day_dim=self.day_dim,
            quarter_dim=self.quarter_dim,
            tensor_dims=tuple(self.tensor_dims),
            side_constraints=self.side_constraints,
        )

    def fit_options(self) -> FitOptions:
        return FitOptions(
            pirls_tol=self.pirls_tol,
            max_pirls_iter=self.max_pirls_iter,
            max_outer_rounds=self.max_outer_rounds,
        )
