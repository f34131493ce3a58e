from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SmoothKind(str, Enum):
    CRS = "crs"
    PSPLINE = "pspline"
    TENSOR = "tensor"


class SmoothSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    kind: SmoothKind
    covariates: List[str]
    dim: List[int]  # basis count per margin
    penalty_order: int = 2
    degree: int = 3  # B-spline degree, P-splines only

    @model_validator(mode="after")
    def _check(self) -> "SmoothSpec":
        margins = 2 if self.kind == SmoothKind.TENSOR else 1
        if len(self.covariates) != margins or len(self.dim) != margins:
            raise ValueError(f"{self.name}: {self.kind.value} smooth takes exactly {margins} covariate(s)")
        if any(d < 3 for d in self.dim):
            raise ValueError(f"{self.name}: basis dimension must be at least 3 per margin")
        if self.penalty_order < 1:
            raise ValueError(f"{self.name}: penalty order must be positive")
        return self


class KnotVector(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    knots: np.ndarray
    boundary: str = "natural"  # natural (CRS) or clamped (B-spline)

    @field_validator("knots", mode="before")
    @classmethod
    def _increasing(cls, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a knot vector needs at least two knots")
        if np.any(np.diff(v) < 0):
            raise ValueError("knots must be non-decreasing")
        return v

    @property
    def span(self) -> tuple:
        return float(self.knots[0]), float(self.knots[-1])


class RealizedSmooth(BaseModel):
    """A basis evaluated on data together with its penalties.

    `constraint` is the d x (d-1) centering transform already folded into
    `basis` and `penalties`; None means the smooth is unconstrained.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    kind: SmoothKind
    covariates: List[str]
    basis: np.ndarray
    penalties: List[np.ndarray]
    knots: List[KnotVector]
    margin_kinds: List[SmoothKind] = Field(default_factory=list)
    degree: int = 3
    constraint: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _shapes(self) -> "RealizedSmooth":
        d = self.basis.shape[1]
        for S in self.penalties:
            if S.shape != (d, d):
                raise ValueError(f"{self.name}: penalty shape {S.shape} does not match basis width {d}")
        return self

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])
