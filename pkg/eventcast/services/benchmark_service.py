import itertools
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq, minimize
from scipy.signal import lfilter
from statsmodels.tsa.arima.estimators.hannan_rissanen import hannan_rissanen
from statsmodels.tsa.stattools import kpss

from ..errors import ConvergenceError, DataValidationError, EventcastError, MetricError
from ..models.benchmark import ArimaFit, BenchmarkRow, BenchmarkTable, IngarchFit
from ..models.forecast import ForecastReport, PipelineData, RollingPlan
from .forecast_service import compute_mae
from .gam_service import nb_loglik

logger = logging.getLogger(__name__)

# history (daily totals up to and including the origin), origin, horizon -> forecast
BenchmarkMethod = Callable[[pd.Series, date, int], float]

ROOT_TOL = 1e-6
MAX_ORDER = 3
MIN_LENGTH = 50
THETA_CAP = 1e8


def _outside_unit_circle(coefs: np.ndarray, sign: float) -> bool:
    """True when every root of 1 + sign * sum c_i z^i lies outside |z| = 1 + tol."""
    if coefs.size == 0 or not np.any(coefs):
        return True
    poly = np.concatenate([[1.0], sign * coefs])[::-1]
    roots = np.roots(poly)
    return bool(np.all(np.abs(roots) > 1.0 + ROOT_TOL))


class BenchmarkService:
    """Naive persistence, ARIMA and INGARCH(1,1) on daily totals."""

    def __init__(self, threads: int = 1):
        self.threads = threads

    # === NAIVE ===

    @staticmethod
    def naive_forecast(daily: pd.Series, origin: date, h: int) -> float:
        return float(daily[pd.Timestamp(origin)])

    # === ARIMA ===

    @staticmethod
    def choose_differencing(x: np.ndarray) -> int:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, pvalue, _, _ = kpss(x, regression="c", nlags="auto")
        return 1 if pvalue < 0.05 else 0

    @staticmethod
    def css_residuals(x: np.ndarray, mean: float, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
        return lfilter(np.concatenate([[1.0], -ar]), np.concatenate([[1.0], ma]), x - mean)

    def _initial_params(self, x: np.ndarray, p: int, q: int) -> Tuple[np.ndarray, np.ndarray]:
        if p == 0 and q == 0:
            return np.zeros(0), np.zeros(0)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                params, _ = hannan_rissanen(x, ar_order=p, ma_order=q, demean=True)
            ar = np.asarray(params.ar_params, dtype=float)
            ma = np.asarray(params.ma_params, dtype=float)
            if np.all(np.isfinite(ar)) and np.all(np.isfinite(ma)) and _outside_unit_circle(ar, -1.0) and _outside_unit_circle(ma, 1.0):
                return ar, ma
        except (ValueError, np.linalg.LinAlgError):
            pass
        return np.zeros(p), np.zeros(q)

    def _fit_order(self, x: np.ndarray, p: int, d: int, q: int) -> Optional[ArimaFit]:
        n_eff = x.size - p
        k = p + q + 2  # coefficients + mean + innovation variance
        if n_eff - k - 1 <= 0:
            return None
        ar0, ma0 = self._initial_params(x, p, q)
        start = np.concatenate([[float(np.mean(x))], ar0, ma0])

        def objective(params: np.ndarray) -> float:
            ar, ma = params[1:1 + p], params[1 + p:]
            if not (_outside_unit_circle(ar, -1.0) and _outside_unit_circle(ma, 1.0)):
                return 1e10
            e = self.css_residuals(x, params[0], ar, ma)[p:]
            css = float(e @ e)
            return np.log(css / n_eff) if css > 0 else -1e10

        if p + q == 0:
            best = start
        else:
            res = minimize(objective, start, method="Nelder-Mead", options={"maxfev": 4000, "xatol": 1e-8, "fatol": 1e-12})
            best = res.x
        ar, ma = best[1:1 + p], best[1 + p:]
        if not (_outside_unit_circle(ar, -1.0) and _outside_unit_circle(ma, 1.0)):
            return None
        e = self.css_residuals(x, best[0], ar, ma)[p:]
        sigma2 = float(e @ e) / n_eff
        if not sigma2 > 0:
            sigma2 = np.finfo(float).tiny
        loglik = -0.5 * n_eff * (np.log(2 * np.pi * sigma2) + 1.0)
        aicc = -2.0 * loglik + 2 * k + 2.0 * k * (k + 1) / (n_eff - k - 1)
        return ArimaFit(order=(p, d, q), ar=ar, ma=ma, mean=float(best[0]), sigma2=sigma2, aicc=aicc, n=n_eff)

    def fit_arima(self, daily) -> ArimaFit:
        """Automatic ARIMA: KPSS picks d, AICc picks (p, q) over 0..3 with CSS estimates."""
        y = np.asarray(daily, dtype=float)
        if y.size < MIN_LENGTH:
            raise DataValidationError(f"ARIMA needs at least {MIN_LENGTH} observations, got {y.size}")
        d = self.choose_differencing(y)
        x = np.diff(y) if d else y
        candidates: Dict[str, float] = {}
        best: Optional[ArimaFit] = None
        for p, q in itertools.product(range(MAX_ORDER + 1), repeat=2):
            fit = self._fit_order(x, p, d, q)
            candidates[f"{p},{d},{q}"] = fit.aicc if fit is not None else float("nan")
            if fit is None:
                continue
            if best is None or (fit.aicc, p + q, p) < (best.aicc, sum(best.order) - d, best.order[0]):
                best = fit
        if best is None:
            raise ConvergenceError(f"no causal and invertible ARIMA candidate with d={d}", trace=list(candidates.values()))
        logger.debug("selected ARIMA%s, AICc %.4f", best.order, best.aicc)
        return best.model_copy(update={"candidates": candidates})

    def arima_forecast(self, fit: ArimaFit, history, h: int) -> np.ndarray:
        """Forecasts for steps 1..h after the end of `history`, stored parameters re-filtered."""
        y = np.asarray(history, dtype=float)
        p, d, q = fit.order
        x = np.diff(y) if d else y
        e = list(self.css_residuals(x, fit.mean, fit.ar, fit.ma))
        dev = list(x - fit.mean)
        out = []
        for _ in range(h):
            nxt = sum(fit.ar[i] * dev[-1 - i] for i in range(p)) + sum(fit.ma[j] * e[-1 - j] for j in range(q))
            dev.append(nxt)
            e.append(0.0)
            out.append(fit.mean + nxt)
        out = np.asarray(out)
        return y[-1] + np.cumsum(out) if d else out

    # === INGARCH ===

    @staticmethod
    def ingarch_log_means(y: np.ndarray, intercept: float, a: float, b: float, nu0: float) -> np.ndarray:
        """nu_t = c + a nu_{t-1} + b log(y_{t-1} + 1) for t = 1..n-1, from nu_0."""
        u = intercept + b * np.log1p(y[:-1])
        return lfilter([1.0], [1.0, -a], u, zi=[a * nu0])[0]

    @staticmethod
    def moment_dispersion(y: np.ndarray, mu: np.ndarray, n_params: int = 3) -> float:
        target = y.size - n_params
        resid2 = (y - mu) ** 2

        def excess(theta: float) -> float:
            return float(np.sum(resid2 / (mu * (1.0 + mu / theta)))) - target

        lo = 1e-6
        if excess(THETA_CAP) <= 0:
            return THETA_CAP
        if excess(lo) >= 0:
            return lo
        return float(brentq(excess, lo, THETA_CAP, xtol=1e-10, rtol=1e-12))

    def fit_ingarch(self, daily) -> IngarchFit:
        """Log-linear INGARCH(1,1) by Poisson quasi-likelihood, dispersion by moments."""
        y = np.asarray(daily, dtype=float)
        if y.size < MIN_LENGTH:
            raise DataValidationError(f"INGARCH needs at least {MIN_LENGTH} observations, got {y.size}")
        if np.any(y < 0):
            raise DataValidationError("INGARCH counts must be non-negative")
        ybar = float(np.mean(y))
        if np.all(y == y[0]):
            level = max(float(y[0]), 1e-8)
            return IngarchFit(intercept=float(np.log(level)), a=0.0, b=0.0, theta=THETA_CAP, n=y.size - 1, loglik=0.0)
        nu0 = float(np.log(max(ybar, 1e-8)))
        trace: List[float] = []

        def objective(params: np.ndarray) -> float:
            c, a, b = params
            if abs(a) + abs(b) >= 1.0:
                return 1e10
            nu = self.ingarch_log_means(y, c, a, b, nu0)
            value = -float(np.mean(y[1:] * nu - np.exp(nu)))
            trace.append(value)
            return value if np.isfinite(value) else 1e10

        res = minimize(
            objective,
            np.array([nu0, 0.3, 0.3]),
            method="Nelder-Mead",
            options={"maxfev": 2000, "xatol": 1e-7, "fatol": 1e-10},
        )
        if not res.success:
            raise ConvergenceError(f"INGARCH fit stopped after {res.nfev} evaluations: {res.message}", trace=trace[-50:])
        c, a, b = (float(v) for v in res.x)
        mu = np.exp(self.ingarch_log_means(y, c, a, b, nu0))
        theta = self.moment_dispersion(y[1:], mu)
        return IngarchFit(
            intercept=c, a=a, b=b, theta=theta, n=y.size - 1, loglik=nb_loglik(y[1:], mu, theta), evaluations=int(res.nfev)
        )

    def ingarch_forecast(self, fit: IngarchFit, history, h: int) -> np.ndarray:
        """Means for steps 1..h; later steps feed log(mu + 1) for the unseen counts."""
        y = np.asarray(history, dtype=float)
        nu0 = float(np.log(max(float(np.mean(y)), 1e-8)))
        if y.size >= 2:
            nu = self.ingarch_log_means(y, fit.intercept, fit.a, fit.b, nu0)[-1]
        else:
            nu = nu0
        last = y[-1]
        out = []
        for _ in range(h):
            nu = fit.intercept + fit.a * nu + fit.b * np.log1p(last)
            mu = float(np.exp(nu))
            out.append(mu)
            last = mu
        return np.asarray(out)

    # === COMPARISON ===

    def _fitted_method(self, name: str) -> Tuple[Callable, Callable]:
        if name == "arima":
            return self.fit_arima, self.arima_forecast
        return self.fit_ingarch, self.ingarch_forecast

    def _run_method(self, name: str, daily: pd.Series, plan: RollingPlan, extra: Optional[BenchmarkMethod]):
        preds: Dict[Tuple[date, int], float] = {}
        failed: List[date] = []
        for group in plan.groups:
            fit = None
            fit_fn, forecast_fn = self._fitted_method(name) if extra is None and name != "naive" else (None, None)
            if fit_fn is not None:
                try:
                    fit = fit_fn(daily[: pd.Timestamp(group[0])].to_numpy())
                except EventcastError as exc:
                    logger.warning("%s fit at %s failed: %s", name, group[0], exc.message)
                    failed.extend(group)
                    continue
            for origin in group:
                history = daily[: pd.Timestamp(origin)]
                try:
                    if fit_fn is not None:
                        path = forecast_fn(fit, history.to_numpy(), max(plan.horizons))
                        for h in plan.horizons:
                            preds[(origin, h)] = float(path[h - 1])
                    else:
                        method = extra or self.naive_forecast
                        for h in plan.horizons:
                            preds[(origin, h)] = float(method(history, origin, h))
                except (EventcastError, KeyError, ValueError) as exc:
                    logger.warning("%s forecast at %s failed: %s", name, origin, exc)
                    failed.append(origin)
        return name, preds, failed

    def benchmark_compare(
        self,
        data: PipelineData,
        plan: RollingPlan,
        gam_report: Optional[ForecastReport] = None,
        extra_methods: Optional[Dict[str, BenchmarkMethod]] = None,
    ) -> BenchmarkTable:
        """MAE per method and horizon over the rolling plan's origins."""
        daily = data.events.daily_totals(complete_only=True).dropna()
        methods: List[Tuple[str, Optional[BenchmarkMethod]]] = [("arima", None), ("naive", None), ("ingarch", None)]
        methods += sorted((extra_methods or {}).items())
        with ThreadPoolExecutor(max_workers=max(1, self.threads)) as pool:
            results = list(pool.map(lambda m: self._run_method(m[0], daily, plan, m[1]), methods))

        rows: List[BenchmarkRow] = []
        if gam_report is not None:
            for s in gam_report.scores:
                origins = {r.origin for r in gam_report.rows_for(s.horizon_days)}
                rows.append(
                    BenchmarkRow(
                        method="gam",
                        horizon_days=s.horizon_days,
                        mae_pct=s.mae_pct,
                        n_origins=len(origins),
                        failures=len(gam_report.failures),
                    )
                )
        for name, preds, failed in results:
            for h in plan.horizons:
                pairs = [
                    (preds[(o, h)], daily.get(pd.Timestamp(o) + pd.Timedelta(days=h), np.nan))
                    for o in plan.origins
                    if (o, h) in preds
                ]
                pairs = [(p, y) for p, y in pairs if not np.isnan(y)]
                try:
                    mae = compute_mae([p for p, _ in pairs], [y for _, y in pairs]).mae_pct if pairs else None
                except MetricError:
                    mae = None
                rows.append(
                    BenchmarkRow(method=name, horizon_days=h, mae_pct=mae, n_origins=len(pairs), failures=len(set(failed)))
                )
        logger.info(
            "benchmarks at 1 day: %s",
            ", ".join(f"{r.method}={r.mae_pct:.3f}" for r in rows if r.horizon_days == min(plan.horizons) and r.mae_pct is not None),
        )
        return BenchmarkTable(rows=rows)
