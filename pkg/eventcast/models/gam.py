from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .smooth import KnotVector, SmoothKind, SmoothSpec


DEFAULT_LINEAR = [
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


class ModelSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    smooths: List[SmoothSpec] = Field(default_factory=list)
    linear: List[str] = Field(default_factory=list)
    include_intercept: bool = True
    # drop interaction columns already spanned by the main effects
    side_constraints: bool = True

    @model_validator(mode="after")
    def _unique_columns(self) -> "ModelSpec":
        names = [s.name for s in self.smooths] + list(self.linear)
        if len(set(names)) != len(names):
            raise ValueError("term names must be unique")
        main = [c for s in self.smooths if s.kind != SmoothKind.TENSOR for c in s.covariates]
        used = main + list(self.linear)
        dup = sorted({c for c in used if used.count(c) > 1})
        if dup:
            raise ValueError(f"columns referenced by more than one term: {dup}")
        for s in self.smooths:
            if s.kind == SmoothKind.TENSOR:
                clash = [c for c in s.covariates if c in self.linear]
                if clash:
                    raise ValueError(f"{s.name}: tensor covariates {clash} also enter linearly")
        return self

    @classmethod
    def default(
        cls,
        hour_dim: int = 24,
        day_dim: int = 7,
        quarter_dim: int = 4,
        tensor_dims: tuple = (7, 10),
        side_constraints: bool = True,
    ) -> "ModelSpec":
        return cls(
            smooths=[
                SmoothSpec(name="hour", kind=SmoothKind.CRS, covariates=["hour"], dim=[hour_dim]),
                SmoothSpec(name="day", kind=SmoothKind.PSPLINE, covariates=["day"], dim=[day_dim]),
                SmoothSpec(name="quarter", kind=SmoothKind.CRS, covariates=["quarter"], dim=[quarter_dim]),
                SmoothSpec(
                    name="day_hour",
                    kind=SmoothKind.TENSOR,
                    covariates=["day", "hour"],
                    dim=list(tensor_dims),
                ),
            ],
            linear=list(DEFAULT_LINEAR),
            side_constraints=side_constraints,
        )

    @property
    def columns(self) -> List[str]:
        cols: List[str] = []
        for s in self.smooths:
            cols.extend(c for c in s.covariates if c not in cols)
        cols.extend(c for c in self.linear if c not in cols)
        return cols


class FitOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    pirls_tol: float = Field(default=1e-8, gt=0)
    max_pirls_iter: int = Field(default=200, gt=0)
    score_tol: float = Field(default=1e-7, gt=0)
    max_halvings: int = Field(default=30, ge=0)
    lambda_grid: List[float] = Field(default_factory=lambda: [-4.0, 0.0, 4.0, 8.0, 12.0])
    log_lambda_bounds: tuple = (-10.0, 20.0)
    lambda_max_evals: int = Field(default=200, gt=0)
    theta_bounds: tuple = (0.01, 1e6)
    max_outer_rounds: int = Field(default=20, gt=0)
    outer_tol: float = Field(default=1e-3, gt=0)
    rank_tol: float = Field(default=1e-10, gt=0)
    ridge_scale: float = Field(default=1e-10, gt=0)

    @model_validator(mode="after")
    def _bounds(self) -> "FitOptions":
        lo, hi = self.theta_bounds
        if not 0 < lo < hi:
            raise ValueError("theta bounds must satisfy 0 < low < high")
        if self.log_lambda_bounds[0] >= self.log_lambda_bounds[1]:
            raise ValueError("log lambda bounds must be increasing")
        return self


class TermInfo(BaseModel):
    """Everything needed to rebuild one term's design columns on new data."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    kind: str  # intercept, linear, crs, pspline, tensor
    covariates: List[str] = Field(default_factory=list)
    start: int
    stop: int
    penalty_index: List[int] = Field(default_factory=list)
    knots: List[KnotVector] = Field(default_factory=list)
    margin_kinds: List[SmoothKind] = Field(default_factory=list)
    degree: int = 3
    constraint: Optional[np.ndarray] = None
    keep: Optional[List[int]] = None  # surviving columns after side constraints
    mean: float = 0.0
    sd: float = 1.0

    @property
    def width(self) -> int:
        return self.stop - self.start

    @property
    def is_smooth(self) -> bool:
        return self.kind in (SmoothKind.CRS.value, SmoothKind.PSPLINE.value, SmoothKind.TENSOR.value)


class DesignMatrix(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    X: np.ndarray
    penalties: List[np.ndarray]  # full p x p, embedded at block offsets
    terms: List[TermInfo]
    interaction_columns: np.ndarray  # boolean mask, used for ridge weighting

    @property
    def n_coef(self) -> int:
        return int(self.X.shape[1])

    def term(self, name: str) -> TermInfo:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)


class PirlsResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    beta: np.ndarray
    mu: np.ndarray
    deviance: float
    penalized_deviance: float
    edf: np.ndarray  # per-coefficient influence diagonal
    edf_total: float
    iterations: int
    converged: bool
    trace: List[float]  # penalized deviance after each iteration
    ridge: float = 0.0


class FittedModel(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: ModelSpec
    terms: List[TermInfo]
    beta: np.ndarray
    lambdas: np.ndarray
    theta: float
    edf: Dict[str, float]
    edf_total: float
    deviance: float
    penalized_deviance: float
    gcv: float
    loglik: float
    converged: bool
    iterations: int
    outer_rounds: int = 0
    deviance_trace: List[float] = Field(default_factory=list)  # penalized, from the final PIRLS run
    ridge: float = 0.0
    n_obs: int
    train_start: Optional[pd.Timestamp] = None
    train_end: Optional[pd.Timestamp] = None

    @model_validator(mode="after")
    def _check(self) -> "FittedModel":
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if np.any(self.lambdas < 0):
            raise ValueError("smoothing parameters must be non-negative")
        return self

    def term(self, name: str) -> TermInfo:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)
