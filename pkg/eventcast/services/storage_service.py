import hashlib
import json
import logging
import platform
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import pydantic
import scipy
import statsmodels
from pydantic import ValidationError

from .. import __version__
from ..errors import DataValidationError
from ..models.benchmark import BenchmarkTable
from ..models.config import RunConfig
from ..models.forecast import ForecastReport
from ..models.gam import FittedModel, ModelSpec, TermInfo
from ..models.smooth import KnotVector, SmoothKind

logger = logging.getLogger(__name__)

MODEL_FORMAT = "eventcast-model/1"
PathLike = Union[str, Path]


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _floats(values) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


class StorageService:
    """Model files, report tables and run manifests."""

    # === MODEL FILES ===

    @staticmethod
    def _term_to_dict(term: TermInfo) -> Dict[str, Any]:
        out = term.model_dump(exclude={"knots", "constraint", "margin_kinds"})
        out["knots"] = [{"knots": _floats(k.knots), "boundary": k.boundary} for k in term.knots]
        out["margin_kinds"] = [k.value for k in term.margin_kinds]
        if term.constraint is not None:
            out["constraint"] = {"shape": list(term.constraint.shape), "values": _floats(term.constraint)}
        else:
            out["constraint"] = None
        return out

    @staticmethod
    def _term_from_dict(raw: Dict[str, Any]) -> TermInfo:
        raw = dict(raw)
        constraint = raw.pop("constraint", None)
        if constraint is not None:
            constraint = np.asarray(constraint["values"], dtype=float).reshape(constraint["shape"])
        knots = [KnotVector(**k) for k in raw.pop("knots", [])]
        kinds = [SmoothKind(k) for k in raw.pop("margin_kinds", [])]
        return TermInfo(knots=knots, margin_kinds=kinds, constraint=constraint, **raw)

    def save_model(self, model: FittedModel, path: PathLike) -> Path:
        """JSON model file; floats are written with repr so they load back bit-exact."""
        path = Path(path)
        doc = {
            "format": MODEL_FORMAT,
            "spec": model.spec.model_dump(mode="json"),
            "terms": [self._term_to_dict(t) for t in model.terms],
            "beta": _floats(model.beta),
            "lambdas": _floats(model.lambdas),
            "theta": float(model.theta),
            "edf": {k: float(v) for k, v in model.edf.items()},
            "edf_total": float(model.edf_total),
            "deviance": float(model.deviance),
            "penalized_deviance": float(model.penalized_deviance),
            "gcv": float(model.gcv),
            "loglik": float(model.loglik),
            "converged": bool(model.converged),
            "iterations": int(model.iterations),
            "outer_rounds": int(model.outer_rounds),
            "deviance_trace": _floats(model.deviance_trace),
            "ridge": float(model.ridge),
            "n_obs": int(model.n_obs),
            "train_start": model.train_start.isoformat() if model.train_start is not None else None,
            "train_end": model.train_end.isoformat() if model.train_end is not None else None,
        }
        path.write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n")
        logger.info("saved model with %d coefficient(s) to %s", len(model.beta), path)
        return path

    def load_model(self, path: PathLike) -> FittedModel:
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataValidationError(f"cannot read model file {path}: {exc}") from exc
        if doc.get("format") != MODEL_FORMAT:
            raise DataValidationError(f"{path} is not an {MODEL_FORMAT} file")
        try:
            return FittedModel(
                spec=ModelSpec.model_validate(doc["spec"]),
                terms=[self._term_from_dict(t) for t in doc["terms"]],
                beta=np.asarray(doc["beta"], dtype=float),
                lambdas=np.asarray(doc["lambdas"], dtype=float),
                theta=doc["theta"],
                edf=doc["edf"],
                edf_total=doc["edf_total"],
                deviance=doc["deviance"],
                penalized_deviance=doc["penalized_deviance"],
                gcv=doc["gcv"],
                loglik=doc["loglik"],
                converged=doc["converged"],
                iterations=doc["iterations"],
                outer_rounds=doc["outer_rounds"],
                deviance_trace=doc["deviance_trace"],
                ridge=doc["ridge"],
                n_obs=doc["n_obs"],
                train_start=pd.Timestamp(doc["train_start"]) if doc["train_start"] else None,
                train_end=pd.Timestamp(doc["train_end"]) if doc["train_end"] else None,
            )
        except (KeyError, TypeError, ValidationError) as exc:
            raise DataValidationError(f"model file {path} is malformed: {exc}") from exc

    # === TABLES ===

    @staticmethod
    def _write(df: pd.DataFrame, path: PathLike, float_format: str = "%.6f") -> Path:
        path = Path(path)
        df.to_csv(path, index=False, float_format=float_format, na_rep="", lineterminator="\n")
        return path

    def write_report(self, report: ForecastReport, path: PathLike) -> Path:
        df = pd.DataFrame(
            [
                {
                    "origin": r.origin.isoformat(),
                    "horizon_days": r.horizon_days,
                    "target": r.target.isoformat(),
                    "predicted": r.predicted,
                    "observed": r.observed,
                    "rel_error_pct": r.rel_error_pct,
                }
                for r in report.rows
            ],
            columns=["origin", "horizon_days", "target", "predicted", "observed", "rel_error_pct"],
        )
        return self._write(df, path)

    def write_mae(self, report: ForecastReport, path: PathLike) -> Path:
        df = pd.DataFrame(
            [s.model_dump() for s in report.scores],
            columns=["horizon_days", "mae_pct", "n", "skipped"],
        )
        return self._write(df, path)

    def write_failures(self, report: ForecastReport, path: PathLike) -> Optional[Path]:
        if not report.failures:
            return None
        df = pd.DataFrame(sorted(report.failures.items()), columns=["origin", "reason"])
        return self._write(df, path)

    def write_benchmarks(self, table: BenchmarkTable, path: PathLike) -> Path:
        df = pd.DataFrame(
            [r.model_dump() for r in table.rows],
            columns=["method", "horizon_days", "mae_pct", "n_origins", "failures"],
        )
        return self._write(df, path)

    def write_regions_mae(self, reports: Dict[str, ForecastReport], path: PathLike) -> Path:
        rows = [
            {"region": name, **s.model_dump()}
            for name, report in sorted(reports.items())
            for s in report.scores
        ]
        df = pd.DataFrame(rows, columns=["region", "horizon_days", "mae_pct", "n", "skipped"])
        return self._write(df, path)

    def write_table(self, table: pd.DataFrame, path: PathLike) -> Path:
        return self._write(table, path, float_format="%.10g")

    def write_summary(self, summary: pd.DataFrame, path: PathLike) -> Path:
        return self._write(summary, path, float_format="%.10g")

    # === MANIFEST ===

    @staticmethod
    def versions() -> Dict[str, str]:
        return {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "statsmodels": statsmodels.__version__,
            "pydantic": pydantic.VERSION,
            "eventcast": __version__,
        }

    def write_manifest(
        self,
        out_dir: PathLike,
        command: str,
        config: RunConfig,
        artifacts: List[Path],
        extra: Optional[Dict[str, Any]] = None,
    ) -> Path:
        out = Path(out_dir)
        doc = {
            "command": command,
            "config": config.model_dump(mode="json"),
            "config_sha256": config_hash(config),
            "seed": config.seed,
            "versions": self.versions(),
            "artifacts": sorted(str(Path(a).relative_to(out)) if Path(a).is_relative_to(out) else str(a) for a in artifacts),
        }
        if extra:
            doc.update(extra)
        path = out / "run_manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path
