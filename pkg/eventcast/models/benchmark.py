from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ArimaFit(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    order: Tuple[int, int, int]
    ar: np.ndarray
    ma: np.ndarray
    mean: float  # level of the (possibly differenced) series
    sigma2: float
    aicc: float
    n: int
    candidates: Dict[str, float] = Field(default_factory=dict)  # "p,d,q" -> AICc

    @model_validator(mode="after")
    def _check(self) -> "ArimaFit":
        p, d, q = self.order
        if not (0 <= p <= 3 and 0 <= q <= 3 and d in (0, 1)):
            raise ValueError(f"order {self.order} outside the searched grid")
        if len(self.ar) != p or len(self.ma) != q:
            raise ValueError("coefficient counts disagree with the order")
        if not np.isfinite(self.aicc):
            raise ValueError("AICc must be finite")
        return self


class IngarchFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    intercept: float
    a: float  # feedback on log of the lagged mean
    b: float  # feedback on log of the lagged count + 1
    theta: float
    n: int
    loglik: float
    evaluations: int = 0

    @model_validator(mode="after")
    def _check(self) -> "IngarchFit":
        if abs(self.a) + abs(self.b) >= 1:
            raise ValueError("|a| + |b| must stay below 1")
        if not self.theta > 0:
            raise ValueError("dispersion must be positive")
        return self


class BenchmarkRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: str
    horizon_days: int
    mae_pct: Optional[float]
    n_origins: int
    failures: int


class BenchmarkTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: List[BenchmarkRow] = Field(default_factory=list)

    def get(self, method: str, horizon: int = 1) -> BenchmarkRow:
        for r in self.rows:
            if r.method == method and r.horizon_days == horizon:
                return r
        raise KeyError((method, horizon))

    @property
    def methods(self) -> List[str]:
        seen: List[str] = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen
