import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.interpolate import BSpline
from scipy.linalg import solve_banded

from ..errors import SmoothError
from ..models.smooth import KnotVector, RealizedSmooth, SmoothKind, SmoothSpec

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float], pd.Series]


class SmootherService:
    """Spline bases, penalties and identifiability constraints."""

    def __init__(self, max_tensor_dim: int = 400):
        self.max_tensor_dim = max_tensor_dim

    # === CUBIC REGRESSION SPLINES ===

    def crs_knots(self, x: ArrayLike, dim: int, name: str = "x") -> KnotVector:
        values = np.unique(np.asarray(x, dtype=float))
        if dim < 3:
            raise SmoothError(f"{name}: a cubic regression spline needs dim >= 3, got {dim}")
        if values.size < dim:
            raise SmoothError(
                f"{name}: {values.size} distinct values cannot support {dim} basis functions"
            )
        knots = np.quantile(values, np.linspace(0.0, 1.0, dim))
        if np.any(np.diff(knots) <= 0):
            raise SmoothError(f"{name}: quantile knots are not strictly increasing")
        return KnotVector(knots=knots, boundary="natural")

    @staticmethod
    def _crs_matrices(knots: np.ndarray):
        # D maps knot values to second-difference quotients, B is the
        # tridiagonal integral operator; knot second derivatives are B^-1 D beta
        k = knots.size
        h = np.diff(knots)
        D = np.zeros((k - 2, k))
        for i in range(k - 2):
            D[i, i] = 1.0 / h[i]
            D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
            D[i, i + 2] = 1.0 / h[i + 1]
        ab = np.zeros((3, k - 2))
        ab[1] = (h[:-1] + h[1:]) / 3.0
        ab[0, 1:] = h[1:-1] / 6.0
        ab[2, :-1] = h[1:-1] / 6.0
        BinvD = solve_banded((1, 1), ab, D)
        F = np.vstack([np.zeros(k), BinvD, np.zeros(k)])
        S = D.T @ BinvD
        return F, 0.5 * (S + S.T)

    def crs_design(self, x: ArrayLike, knots: KnotVector, name: str = "x") -> np.ndarray:
        xk = knots.knots
        x = np.asarray(x, dtype=float)
        self._check_span(x, xk[0], xk[-1], name)
        F, _ = self._crs_matrices(xk)
        k = xk.size
        h = np.diff(xk)
        j = np.clip(np.searchsorted(xk, x, side="right") - 1, 0, k - 2)
        hj = h[j]
        right = xk[j + 1] - x
        left = x - xk[j]
        a_minus = right / hj
        a_plus = left / hj
        c_minus = (right ** 3 / hj - hj * right) / 6.0
        c_plus = (left ** 3 / hj - hj * left) / 6.0
        rows = np.arange(x.size)
        X = c_minus[:, None] * F[j] + c_plus[:, None] * F[j + 1]
        X[rows, j] += a_minus
        X[rows, j + 1] += a_plus
        return X

    def crs_basis(self, x: ArrayLike, dim: int, name: str = "x") -> RealizedSmooth:
        knots = self.crs_knots(x, dim, name)
        _, S = self._crs_matrices(knots.knots)
        return RealizedSmooth(
            name=name,
            kind=SmoothKind.CRS,
            covariates=[name],
            basis=self.crs_design(x, knots, name),
            penalties=[S],
            knots=[knots],
            margin_kinds=[SmoothKind.CRS],
        )

    # === B-SPLINES / P-SPLINES ===

    def bspline_knots(self, x: ArrayLike, dim: int, degree: int = 3, name: str = "x") -> KnotVector:
        x = np.asarray(x, dtype=float)
        if dim < degree + 1:
            raise SmoothError(f"{name}: dim {dim} is below degree + 1 = {degree + 1}")
        xl, xr = float(np.min(x)), float(np.max(x))
        if not xr > xl:
            raise SmoothError(f"{name}: B-spline basis needs a non-degenerate covariate range")
        inner = np.linspace(xl, xr, dim - degree + 1)
        knots = np.concatenate([np.repeat(xl, degree), inner, np.repeat(xr, degree)])
        return KnotVector(knots=knots, boundary="clamped")

    def bspline_design(self, x: ArrayLike, knots: KnotVector, degree: int = 3, name: str = "x") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = knots.knots
        self._check_span(x, t[degree], t[-degree - 1], name)
        return BSpline.design_matrix(x, t, degree).toarray()

    def bspline_basis(self, x: ArrayLike, dim: int, degree: int = 3, name: str = "x") -> np.ndarray:
        knots = self.bspline_knots(x, dim, degree, name)
        return self.bspline_design(x, knots, degree, name)

    def difference_penalty(self, dim: int, order: int = 2) -> np.ndarray:
        if order >= dim:
            raise SmoothError(f"difference order {order} must be below dim {dim}")
        D = np.diff(np.eye(dim), n=order, axis=0)
        return D.T @ D

    def pspline_basis(self, x: ArrayLike, dim: int, order: int = 2, degree: int = 3, name: str = "x") -> RealizedSmooth:
        knots = self.bspline_knots(x, dim, degree, name)
        return RealizedSmooth(
            name=name,
            kind=SmoothKind.PSPLINE,
            covariates=[name],
            basis=self.bspline_design(x, knots, degree, name),
            penalties=[self.difference_penalty(dim, order)],
            knots=[knots],
            margin_kinds=[SmoothKind.PSPLINE],
            degree=degree,
        )

    # === TENSOR PRODUCTS ===

    @staticmethod
    def row_kronecker(A: np.ndarray, B: np.ndarray) -> np.ndarray:
        n = A.shape[0]
        return (A[:, :, None] * B[:, None, :]).reshape(n, A.shape[1] * B.shape[1])

    def tensor_product(self, margin_a: RealizedSmooth, margin_b: RealizedSmooth, name: Optional[str] = None) -> RealizedSmooth:
        if margin_a.basis.shape[0] != margin_b.basis.shape[0]:
            raise SmoothError("tensor margins must be realized on the same rows")
        if margin_a.constraint is not None or margin_b.constraint is not None:
            raise SmoothError("tensor margins must be unconstrained")
        da, db = margin_a.dim, margin_b.dim
        if da * db > self.max_tensor_dim:
            raise SmoothError(f"tensor dimension {da}x{db} exceeds the limit {self.max_tensor_dim}")
        Sa, Sb = margin_a.penalties[0], margin_b.penalties[0]
        return RealizedSmooth(
            name=name or f"{margin_a.name}_{margin_b.name}",
            kind=SmoothKind.TENSOR,
            covariates=margin_a.covariates + margin_b.covariates,
            basis=self.row_kronecker(margin_a.basis, margin_b.basis),
            penalties=[np.kron(Sa, np.eye(db)), np.kron(np.eye(da), Sb)],
            knots=margin_a.knots + margin_b.knots,
            margin_kinds=margin_a.margin_kinds + margin_b.margin_kinds,
            degree=margin_a.degree,
        )

    # === CONSTRAINTS ===

    @staticmethod
    def centering_transform(basis: np.ndarray) -> np.ndarray:
        C = basis.sum(axis=0)[:, None]
        Q, _ = np.linalg.qr(C, mode="complete")
        return Q[:, 1:]

    def center_constraint(self, smooth: RealizedSmooth) -> RealizedSmooth:
        Z = self.centering_transform(smooth.basis)
        return smooth.model_copy(
            update={
                "basis": smooth.basis @ Z,
                "penalties": [Z.T @ S @ Z for S in smooth.penalties],
                "constraint": Z,
            }
        )

    # === REALIZATION / EVALUATION ===

    def realize(self, spec: SmoothSpec, data: pd.DataFrame, center: bool = True) -> RealizedSmooth:
        missing = [c for c in spec.covariates if c not in data.columns]
        if missing:
            raise SmoothError(f"{spec.name}: frame lacks covariates {missing}")
        if spec.kind == SmoothKind.CRS:
            smooth = self.crs_basis(data[spec.covariates[0]], spec.dim[0], spec.covariates[0])
        elif spec.kind == SmoothKind.PSPLINE:
            smooth = self.pspline_basis(
                data[spec.covariates[0]], spec.dim[0], spec.penalty_order, spec.degree, spec.covariates[0]
            )
        else:
            margins = [self.crs_basis(data[c], d, c) for c, d in zip(spec.covariates, spec.dim)]
            smooth = self.tensor_product(margins[0], margins[1])
        smooth = smooth.model_copy(update={"name": spec.name})
        logger.debug("realized %s: %d rows x %d columns", spec.name, *smooth.basis.shape)
        return self.center_constraint(smooth) if center else smooth

    def margin_design(self, kind: SmoothKind, knots: KnotVector, x: ArrayLike, degree: int = 3, name: str = "x") -> np.ndarray:
        if kind == SmoothKind.PSPLINE:
            return self.bspline_design(x, knots, degree, name)
        return self.crs_design(x, knots, name)

    def evaluate_smooth(
        self,
        smooth: RealizedSmooth,
        values: Union[Dict[str, ArrayLike], pd.DataFrame],
    ) -> np.ndarray:
        """Rebuild a realized smooth's (constrained) basis at new covariate values."""
        parts = []
        for cov, kind, knots in zip(smooth.covariates, smooth.margin_kinds, smooth.knots):
            parts.append(self.margin_design(kind, knots, np.asarray(values[cov], dtype=float), smooth.degree, cov))
        X = parts[0] if len(parts) == 1 else self.row_kronecker(parts[0], parts[1])
        return X if smooth.constraint is None else X @ smooth.constraint

    def dump_smooth(self, name: str, smooth: RealizedSmooth, path: Union[str, Path], grid_size: int = 25) -> Path:
        """Write knots, a sampled basis and the penalties as `section,row,col,value`."""
        records: List[tuple] = []
        for m, kv in enumerate(smooth.knots):
            records.extend(("knots", m, i, float(v)) for i, v in enumerate(kv.knots))
        grids = [np.linspace(*kv.span, grid_size) for kv in smooth.knots]
        if len(grids) == 2:
            ga, gb = np.meshgrid(grids[0], grids[1], indexing="ij")
            values = {smooth.covariates[0]: ga.ravel(), smooth.covariates[1]: gb.ravel()}
        else:
            values = {smooth.covariates[0]: grids[0]}
        B = self.evaluate_smooth(smooth, values)
        records.extend(("basis", i, j, float(B[i, j])) for i in range(B.shape[0]) for j in range(B.shape[1]))
        for k, S in enumerate(smooth.penalties):
            records.extend(
                (f"penalty{k}", i, j, float(S[i, j])) for i in range(S.shape[0]) for j in range(S.shape[1])
            )
        path = Path(path)
        if path.is_dir():
            path = path / f"smooth_{name}.csv"
        pd.DataFrame(records, columns=["section", "row", "col", "value"]).to_csv(
            path, index=False, float_format="%.12g", lineterminator="\n"
        )
        return path

    @staticmethod
    def _check_span(x: np.ndarray, lo: float, hi: float, name: str) -> None:
        if x.size and (np.min(x) < lo or np.max(x) > hi):
            raise SmoothError(f"{name}: values outside the knot span [{lo:g}, {hi:g}]")
