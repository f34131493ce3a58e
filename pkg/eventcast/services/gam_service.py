import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cholesky
from scipy.linalg import qr as pivoted_qr
from scipy.linalg import solve_triangular
from scipy.optimize import minimize, minimize_scalar
from scipy.special import betaln, xlogy

from ..errors import ConvergenceError, DataValidationError, DesignError, SmoothError
from ..models.gam import DesignMatrix, FitOptions, FittedModel, ModelSpec, PirlsResult, TermInfo
from ..models.series import CovariateFrame
from ..models.smooth import RealizedSmooth, SmoothKind
from .smoother_service import SmootherService

logger = logging.getLogger(__name__)

FrameLike = Union[CovariateFrame, pd.DataFrame]

SIDE_TOL = 1e-7


# === NEGATIVE BINOMIAL FAMILY ===

def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DataValidationError("negative binomial inputs must be finite")


def nb_loglik(y, mu, theta: float) -> float:
    """Summed NB log-likelihood with mean mu and variance mu + mu^2/theta."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    _check_finite(y, mu, np.asarray(theta))
    if np.any(mu <= 0) or theta <= 0:
        raise DataValidationError("mu and theta must be positive")
    if np.any(y < 0):
        raise DataValidationError("counts must be non-negative")
    # log Gamma(y+theta) - log Gamma(theta) - log y! without cancellation at large theta
    coeff = -np.log(y + theta) - betaln(y + 1.0, theta)
    ll = coeff - theta * np.log1p(mu / theta) + y * (np.log(mu) - np.log(mu + theta))
    return float(np.sum(ll))


def nb_deviance(y, mu, theta: float) -> float:
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    d = xlogy(y, y / mu) - (y + theta) * np.log1p((y - mu) / (mu + theta))
    return float(2.0 * np.sum(d))


def nb_score_weights(y: np.ndarray, mu: np.ndarray, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """First derivative of the log-likelihood in eta and the Newton weight."""
    u = theta * (y - mu) / (mu + theta)
    w = theta * mu * (y + theta) / (mu + theta) ** 2
    return u, w


def gcv_score(deviance: float, edf: float, n: int) -> float:
    if edf >= n:
        return float("inf")
    return n * deviance / (n - edf) ** 2


def moment_theta(y: np.ndarray, bounds: Tuple[float, float] = (0.01, 1e6)) -> float:
    m, v = float(np.mean(y)), float(np.var(y))
    theta = m * m / (v - m) if v > m else bounds[1]
    return float(np.clip(theta, *bounds))


class GamService:
    def __init__(self, options: Optional[FitOptions] = None, smoother: Optional[SmootherService] = None):
        self.options = options or FitOptions()
        self.smoother = smoother or SmootherService()

    # === DESIGN ===

    def build_design(self, frame: FrameLike, spec: ModelSpec) -> DesignMatrix:
        data = frame.data if isinstance(frame, CovariateFrame) else frame
        missing = [c for c in spec.columns if c not in data.columns]
        if missing:
            raise DesignError(f"frame lacks model columns {missing}")
        n = len(data)
        if n == 0:
            raise DesignError("cannot build a design on an empty frame")

        blocks: List[np.ndarray] = []
        terms: List[TermInfo] = []
        penalties: List[Tuple[int, np.ndarray]] = []  # (term position, block penalty)
        col = 0

        if spec.include_intercept:
            blocks.append(np.ones((n, 1)))
            terms.append(TermInfo(name="(Intercept)", kind="intercept", start=0, stop=1))
            col = 1

        realized: Dict[str, RealizedSmooth] = {s.name: self.smoother.realize(s, data) for s in spec.smooths}

        for s in spec.smooths:
            smooth = realized[s.name]
            basis, block_pens, keep = smooth.basis, smooth.penalties, None
            if s.kind == SmoothKind.TENSOR and spec.side_constraints:
                lower = [b for b in blocks[:1]] if spec.include_intercept else []
                lower += [
                    realized[o.name].basis
                    for o in spec.smooths
                    if o.kind != SmoothKind.TENSOR and set(o.covariates) <= set(s.covariates)
                ]
                keep = self._side_constraint_columns(basis, lower)
                basis = basis[:, keep]
                block_pens = [S[np.ix_(keep, keep)] for S in block_pens]
                logger.debug("%s: side constraints keep %d of %d columns", s.name, len(keep), smooth.dim)
            width = basis.shape[1]
            pen_idx = []
            for S in block_pens:
                pen_idx.append(len(penalties))
                penalties.append((len(terms), self._scale_penalty(S, basis)))
            terms.append(
                TermInfo(
                    name=s.name,
                    kind=s.kind.value,
                    covariates=list(s.covariates),
                    start=col,
                    stop=col + width,
                    penalty_index=pen_idx,
                    knots=list(smooth.knots),
                    margin_kinds=list(smooth.margin_kinds),
                    degree=smooth.degree,
                    constraint=smooth.constraint,
                    keep=keep,
                )
            )
            blocks.append(basis)
            col += width

        for name in spec.linear:
            v = data[name].to_numpy(dtype=float)
            mean, sd = float(np.mean(v)), float(np.std(v))
            if not sd > 1e-12 * max(1.0, abs(mean)):
                raise DesignError(f"linear column '{name}' is constant on the fit window")
            blocks.append(((v - mean) / sd)[:, None])
            terms.append(TermInfo(name=name, kind="linear", covariates=[name], start=col, stop=col + 1, mean=mean, sd=sd))
            col += 1

        X = np.hstack(blocks) if blocks else np.zeros((n, 0))
        full = []
        for term_pos, S in penalties:
            t = terms[term_pos]
            P = np.zeros((col, col))
            P[t.start:t.stop, t.start:t.stop] = S
            full.append(P)
        interaction = np.zeros(col, dtype=bool)
        for t in terms:
            if t.kind == SmoothKind.TENSOR.value:
                interaction[t.start:t.stop] = True
        return DesignMatrix(X=X, penalties=full, terms=terms, interaction_columns=interaction)

    @staticmethod
    def _side_constraint_columns(basis: np.ndarray, lower: List[np.ndarray]) -> List[int]:
        if not lower:
            return list(range(basis.shape[1]))
        L = np.hstack(lower)
        Q, R, piv = pivoted_qr(L, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > SIDE_TOL * diag[0])) if diag.size else 0
        Q = Q[:, :rank]
        resid = basis - Q @ (Q.T @ basis)
        _, R2, piv2 = pivoted_qr(resid, mode="economic", pivoting=True)
        d2 = np.abs(np.diag(R2))
        scale = np.max(np.linalg.norm(basis, axis=0))
        kept = int(np.sum(d2 > SIDE_TOL * scale))
        return sorted(int(i) for i in piv2[:kept])

    @staticmethod
    def _scale_penalty(S: np.ndarray, basis: np.ndarray) -> np.ndarray:
        # comparable magnitudes so one log-lambda grid serves every term
        s_norm = np.linalg.norm(S, 1)
        if s_norm == 0:
            return S
        return S * (np.linalg.norm(basis, np.inf) ** 2 / s_norm)

    def design_rows(self, terms: Sequence[TermInfo], data: pd.DataFrame, clamp: bool = True) -> np.ndarray:
        """Rebuild design rows for new data from stored term descriptions."""
        n = len(data)
        cols = []
        for t in terms:
            missing = [c for c in t.covariates if c not in data.columns]
            if missing:
                raise DesignError(f"term '{t.name}' needs columns {missing}")
            if t.kind == "intercept":
                cols.append(np.ones((n, 1)))
            elif t.kind == "linear":
                v = data[t.covariates[0]].to_numpy(dtype=float)
                cols.append(((v - t.mean) / t.sd)[:, None])
            else:
                cols.append(self._smooth_rows(t, data, clamp))
        return np.hstack(cols) if cols else np.zeros((n, 0))

    def _smooth_rows(self, t: TermInfo, data: pd.DataFrame, clamp: bool) -> np.ndarray:
        parts = []
        for cov, kind, knots in zip(t.covariates, t.margin_kinds, t.knots):
            x = data[cov].to_numpy(dtype=float)
            lo, hi = self._margin_span(kind, knots.knots, t.degree)
            if clamp:
                outside = (x < lo) | (x > hi)
                if outside.any():
                    logger.warning("%s: %d value(s) of %s clamped to [%g, %g]", t.name, int(outside.sum()), cov, lo, hi)
                    x = np.clip(x, lo, hi)
            parts.append(self.smoother.margin_design(kind, knots, x, t.degree, cov))
        B = parts[0] if len(parts) == 1 else self.smoother.row_kronecker(parts[0], parts[1])
        if t.constraint is not None:
            B = B @ t.constraint
        if t.keep is not None:
            B = B[:, t.keep]
        return B

    @staticmethod
    def _margin_span(kind: SmoothKind, knots: np.ndarray, degree: int) -> Tuple[float, float]:
        if kind == SmoothKind.PSPLINE:
            return float(knots[degree]), float(knots[-degree - 1])
        return float(knots[0]), float(knots[-1])

    # === PIRLS ===

    @staticmethod
    def _penalty_root(S: np.ndarray) -> np.ndarray:
        if S.size == 0 or not np.any(S):
            return np.zeros((0, S.shape[0]))
        vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
        keep = vals > vals.max() * 1e-13
        return (vecs[:, keep] * np.sqrt(vals[keep])).T

    @staticmethod
    def _gram_root(Xw: np.ndarray) -> np.ndarray:
        """Square root R with R^T R = Xw^T Xw, from the p x p cross-product."""
        G = Xw.T @ Xw
        try:
            return cholesky(G, lower=False)
        except LinAlgError:
            vals, vecs = np.linalg.eigh(G)
            return np.sqrt(np.clip(vals, 0.0, None))[:, None] * vecs.T

    def pirls(
        self,
        design: DesignMatrix,
        lambdas: Sequence[float],
        theta: float,
        y: np.ndarray,
        options: Optional[FitOptions] = None,
        beta0: Optional[np.ndarray] = None,
    ) -> PirlsResult:
        """Penalized IRLS for the NB log-link model at fixed (lambda, theta).

        The first iteration of a cold start solves the working least-squares problem
        outright; later iterations take Newton steps beta + H^-1 g built from the p x p
        weighted cross-product, with step halving on the penalized deviance. The run
        only counts as converged when the penalized score is below tolerance.
        """
        opts = options or self.options
        X = design.X
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.size != len(design.penalties):
            raise DesignError(f"{len(design.penalties)} smoothing parameters expected, got {lambdas.size}")
        S_lam = np.zeros((p, p))
        for lam, S in zip(lambdas, design.penalties):
            S_lam += lam * S
        E = self._penalty_root(S_lam)
        ridge_w = self._ridge_weights(design)
        score_tol = opts.score_tol * max(1.0, n / 1000.0)

        def penalized(beta: np.ndarray, mu: np.ndarray) -> float:
            return nb_deviance(y, mu, theta) + float(beta @ S_lam @ beta)

        def trial(beta: np.ndarray) -> Tuple[np.ndarray, float]:
            mu = np.exp(X @ beta)
            if not (np.all(np.isfinite(mu)) and np.all(mu > 0)):
                return mu, np.inf
            return mu, penalized(beta, mu)

        if beta0 is not None and beta0.shape == (p,):
            beta = beta0.copy()
            eta = X @ beta
            mu = np.exp(eta)
            pdev = penalized(beta, mu)
        else:
            beta = None
            ybar = max(float(np.mean(y)), 0.1)
            mu = (y + ybar) / 2.0
            eta = np.log(mu)
            pdev = np.inf

        trace: List[float] = []
        ridge = 0.0
        converged = False
        R1 = R2 = piv = None
        it = 0
        for it in range(1, opts.max_pirls_iter + 1):
            u, w = nb_score_weights(y, mu, theta)
            sw = np.sqrt(w)
            if beta is None:
                z = eta + u / w
                R = np.linalg.qr(np.column_stack([sw[:, None] * X, sw * z]), mode="r")
                R = R[: p + 1]
                R1, f = R[:p, :p], R[:p, p]
                beta_new, R2, piv, ridge = self._solve(R1, f, E, ridge_w, opts)
            else:
                R1 = self._gram_root(sw[:, None] * X)
                R2, piv, ridge = self._factor(R1, E, ridge_w, opts)
                grad = X.T @ u - S_lam @ beta - ridge * ridge_w * beta
                beta_new = beta + self._hessian_solve(R2, piv, grad)

            # step halving on the penalized deviance
            mu_new, pdev_new = trial(beta_new)
            halvings = 0
            while beta is not None and not pdev_new <= pdev * (1 + 1e-12) and halvings < opts.max_halvings:
                beta_new = 0.5 * (beta + beta_new)
                mu_new, pdev_new = trial(beta_new)
                halvings += 1
            if beta is None and not np.isfinite(pdev_new):
                raise ConvergenceError("penalized deviance became non-finite", trace=trace)

            stalled = beta is not None and not pdev_new <= pdev * (1 + 1e-12)
            if stalled:
                beta_new, mu_new, pdev_new = beta, mu, pdev
            change = abs(pdev - pdev_new) / (abs(pdev_new) + 0.1) if np.isfinite(pdev) else np.inf
            beta, mu, pdev = beta_new, mu_new, pdev_new
            eta = X @ beta
            trace.append(pdev)

            u_new, _ = nb_score_weights(y, mu, theta)
            shrink = S_lam @ beta + ridge * ridge_w * beta
            score = X.T @ u_new - shrink
            # rounding in S_lam @ beta grows with lambda
            tol = score_tol + 1e-10 * np.max(np.abs(S_lam) @ np.abs(beta) + np.abs(shrink), initial=0.0)
            score_ok = bool(np.max(np.abs(score), initial=0.0) < tol)
            logger.debug("pirls iteration %d: penalized deviance %.10g (halvings %d)", it, pdev, halvings)
            if score_ok and (stalled or change < opts.pirls_tol):
                converged = True
                break
            if stalled:
                raise ConvergenceError(
                    f"step halving could not reduce the penalized deviance at iteration {it} "
                    f"(max score {np.max(np.abs(score)):.3g}, tolerance {tol:.3g})",
                    trace=trace,
                )

        if not converged:
            raise ConvergenceError(
                f"PIRLS did not converge in {opts.max_pirls_iter} iterations", trace=trace
            )

        edf = self._influence_diagonal(R1, R2, piv)
        deviance = nb_deviance(y, mu, theta)
        return PirlsResult(
            beta=beta,
            mu=mu,
            deviance=deviance,
            penalized_deviance=pdev,
            edf=edf,
            edf_total=float(np.sum(edf)),
            iterations=it,
            converged=converged,
            trace=trace,
            ridge=ridge,
        )

    @staticmethod
    def _ridge_weights(design: DesignMatrix) -> np.ndarray:
        return np.where(design.interaction_columns, 1.0, 1e-3)

    @staticmethod
    def _factor(R1: np.ndarray, E: np.ndarray, ridge_w: np.ndarray, opts: FitOptions):
        """Pivoted QR of [R1; E], with ridge rows appended when it is rank deficient."""
        p = R1.shape[1]
        A = np.vstack([R1, E])
        Q, R2, piv = pivoted_qr(A, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R2))
        ridge = 0.0
        if diag.size < p or np.any(diag < opts.rank_tol * diag[0]):
            ridge = opts.ridge_scale * (np.sum(R1 * R1) + np.sum(E * E))
            A = np.vstack([A, np.diag(np.sqrt(ridge * ridge_w))])
            Q, R2, piv = pivoted_qr(A, mode="economic", pivoting=True)
            logger.debug("rank deficient penalized system, ridge %.3g added", ridge)
        return R2, piv, ridge

    def _solve(self, R1: np.ndarray, f: np.ndarray, E: np.ndarray, ridge_w: np.ndarray, opts: FitOptions):
        R2, piv, ridge = self._factor(R1, E, ridge_w, opts)
        # normal equations through the factor: (R1^T R1 + E^T E + ridge) beta = R1^T f
        beta = self._hessian_solve(R2, piv, R1.T @ f)
        return beta, R2, piv, ridge

    @staticmethod
    def _hessian_solve(R2: np.ndarray, piv: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Solve (A^T A) x = g given the pivoted factor A[:, piv] = Q R2."""
        v = solve_triangular(R2, g[piv], trans="T")
        x = np.empty_like(g, dtype=float)
        x[piv] = solve_triangular(R2, v)
        return x

    @staticmethod
    def _influence_diagonal(R1: np.ndarray, R2: np.ndarray, piv: np.ndarray) -> np.ndarray:
        p = R1.shape[1]
        Rinv = solve_triangular(R2, np.eye(p))
        V = np.empty((p, p))
        V[np.ix_(piv, piv)] = Rinv @ Rinv.T
        F = V @ (R1.T @ R1)
        return np.diag(F).copy()

    @staticmethod
    def _influence_trace(R1: np.ndarray, R2: np.ndarray, piv: np.ndarray) -> float:
        # tr(H^-1 R1^T R1) = ||R2^-T (R1 P)^T||_F^2
        M = solve_triangular(R2, R1[:, piv].T, trans="T")
        return float(np.sum(M * M))

    # === SMOOTHNESS AND DISPERSION SELECTION ===

    def _working_model(self, design: DesignMatrix, y: np.ndarray, beta: np.ndarray, theta: float):
        """Quadratic approximation of the deviance around beta: (R1, score, deviance)."""
        X = design.X
        mu = np.exp(X @ beta)
        u, w = nb_score_weights(y, mu, theta)
        return self._gram_root(np.sqrt(w)[:, None] * X), X.T @ u, nb_deviance(y, mu, theta)

    def working_gcv(
        self,
        design: DesignMatrix,
        y: np.ndarray,
        beta: np.ndarray,
        theta: float,
        options: Optional[FitOptions] = None,
    ):
        """GCV as a function of log lambda for the working model anchored at beta.

        Each evaluation costs one p x p factorization: the deviance at the penalized
        optimum is taken from the quadratic expansion of the deviance around beta and
        the effective degrees of freedom from the anchored weights.
        """
        opts = options or self.options
        y = np.asarray(y, dtype=float)
        n = y.size
        R1, g, dev0 = self._working_model(design, y, beta, theta)
        G = R1.T @ R1
        roots = [self._penalty_root(S) for S in design.penalties]
        ridge_w = self._ridge_weights(design)

        def score(rho: np.ndarray) -> float:
            lam = np.exp(np.clip(np.asarray(rho, dtype=float), *opts.log_lambda_bounds))
            E = np.vstack([np.sqrt(l) * Ej for l, Ej in zip(lam, roots)]) if roots else np.zeros((0, beta.size))
            S_lam = sum((l * S for l, S in zip(lam, design.penalties)), np.zeros((beta.size, beta.size)))
            R2, piv, ridge = self._factor(R1, E, ridge_w, opts)
            step = self._hessian_solve(R2, piv, g - S_lam @ beta - ridge * ridge_w * beta)
            dev = dev0 + float(step @ G @ step) - 2.0 * float(step @ g)
            return gcv_score(max(dev, 0.0), self._influence_trace(R1, R2, piv), n)

        return score

    def select_lambda_theta(
        self,
        design: DesignMatrix,
        y: np.ndarray,
        options: Optional[FitOptions] = None,
        theta0: Optional[float] = None,
    ) -> Tuple[np.ndarray, float, PirlsResult, int]:
        """Alternate a GCV simplex search over log lambda with a profile search over log theta.

        Within a round the simplex scores the working model of the current fit, so a
        function evaluation is a p x p solve rather than a PIRLS run. The model is
        refit by PIRLS after the simplex and again after the theta step, and the next
        round re-anchors the working model at that refit.
        """
        opts = options or self.options
        y = np.asarray(y, dtype=float)
        n = y.size
        m = len(design.penalties)
        lo_t, hi_t = np.log(opts.theta_bounds[0]), np.log(opts.theta_bounds[1])
        log_theta = float(np.log(theta0 if theta0 is not None else moment_theta(y, opts.theta_bounds)))
        rho = np.zeros(m)
        warm: Dict[str, np.ndarray] = {}

        def fit_at(r: np.ndarray, lt: float) -> PirlsResult:
            try:
                res = self.pirls(design, np.exp(r), float(np.exp(lt)), y, opts, warm.get("beta"))
            except ConvergenceError as exc:
                raise ConvergenceError(
                    f"{exc.message} at log lambda {np.round(r, 4).tolist()}", trace=exc.trace
                ) from exc
            warm["beta"] = res.beta
            return res

        rounds = 0
        result = fit_at(rho, log_theta)
        gcv = gcv_score(result.deviance, result.edf_total, n)
        for rounds in range(1, opts.max_outer_rounds + 1):
            rho_old, lt_old, gcv_old = rho.copy(), log_theta, gcv
            if m:
                approx = self.working_gcv(design, y, result.beta, float(np.exp(log_theta)), opts)
                if rounds == 1:
                    scores = [approx(np.full(m, g)) for g in opts.lambda_grid]
                    rho = np.full(m, opts.lambda_grid[int(np.argmin(scores))])
                width = 2.0 if rounds == 1 else 0.5
                hi = opts.log_lambda_bounds[1]
                steps = np.where(rho + width <= hi, width, -width)
                simplex = np.vstack([rho] + [rho + steps[i] * np.eye(m)[i] for i in range(m)])
                start = approx(rho)
                res = minimize(
                    approx,
                    rho,
                    method="Nelder-Mead",
                    bounds=[opts.log_lambda_bounds] * m,
                    options={
                        "initial_simplex": simplex,
                        "maxfev": opts.lambda_max_evals,
                        "xatol": 1e-4,
                        "fatol": 1e-9 * abs(start) if np.isfinite(start) else 1e-10,
                    },
                )
                rho = np.clip(res.x, *opts.log_lambda_bounds)
                result = fit_at(rho, log_theta)

            mu = result.mu
            prof = minimize_scalar(
                lambda lt: -nb_loglik(y, mu, float(np.exp(lt))),
                bounds=(lo_t, hi_t),
                method="bounded",
                options={"xatol": 1e-5},
            )
            log_theta = float(prof.x)
            result = fit_at(rho, log_theta)
            gcv = gcv_score(result.deviance, result.edf_total, n)
            delta = max(np.max(np.abs(rho - rho_old), initial=0.0), abs(log_theta - lt_old))
            logger.info(
                "outer round %d: log lambda %s, theta %.4g, gcv %.6g",
                rounds,
                np.round(rho, 3).tolist(),
                np.exp(log_theta),
                gcv,
            )
            stalled = abs(gcv - gcv_old) <= 1e-9 * abs(gcv) and abs(log_theta - lt_old) < opts.outer_tol
            if delta < opts.outer_tol or stalled:
                break
        return np.exp(rho), float(np.exp(log_theta)), result, rounds

    # === MODEL FITTING / PREDICTION ===

    def constant_columns(self, frame: FrameLike, spec: ModelSpec) -> List[str]:
        data = frame.data if isinstance(frame, CovariateFrame) else frame
        out = []
        for name in spec.linear:
            v = data[name].to_numpy(dtype=float)
            if not np.std(v) > 1e-12 * max(1.0, abs(float(np.mean(v)))):
                out.append(name)
        return out

    def fit(
        self,
        frame: CovariateFrame,
        spec: ModelSpec,
        options: Optional[FitOptions] = None,
        since: Optional[pd.Timestamp] = None,
        until: Optional[pd.Timestamp] = None,
        drop_constant: bool = False,
    ) -> FittedModel:
        opts = options or self.options
        window = frame.window(since, until) if (since is not None or until is not None) else frame
        if len(window) == 0:
            raise DesignError("no frame rows fall inside the fit window")
        if drop_constant:
            constant = self.constant_columns(window, spec)
            if constant:
                logger.warning("dropping constant linear columns %s", constant)
                spec = spec.model_copy(update={"linear": [c for c in spec.linear if c not in constant]})
        design = self.build_design(window, spec)
        y = window.y
        logger.info("fitting %d rows x %d coefficients", *design.X.shape)
        lambdas, theta, res, rounds = self.select_lambda_theta(design, y, opts)
        edf = {t.name: float(np.sum(res.edf[t.start:t.stop])) for t in design.terms}
        return FittedModel(
            spec=spec,
            terms=design.terms,
            beta=res.beta,
            lambdas=lambdas,
            theta=theta,
            edf=edf,
            edf_total=res.edf_total,
            deviance=res.deviance,
            penalized_deviance=res.penalized_deviance,
            gcv=gcv_score(res.deviance, res.edf_total, len(y)),
            loglik=nb_loglik(y, res.mu, theta),
            converged=res.converged,
            iterations=res.iterations,
            outer_rounds=rounds,
            deviance_trace=res.trace,
            ridge=res.ridge,
            n_obs=len(y),
            train_start=window.data.index[0],
            train_end=window.data.index[-1],
        )

    def linear_predictor(self, model: FittedModel, frame: FrameLike) -> np.ndarray:
        data = frame.data if isinstance(frame, CovariateFrame) else frame
        return self.design_rows(model.terms, data) @ model.beta

    def predict(self, model: FittedModel, frame: FrameLike) -> np.ndarray:
        return np.exp(self.linear_predictor(model, frame))

    def partial_effect(self, model: FittedModel, term: str, grid: Union[Sequence[float], Dict[str, Sequence[float]]]) -> pd.DataFrame:
        """Centered contribution of one term on a grid (a day x hour surface for tensors)."""
        try:
            t = model.term(term)
        except KeyError:
            raise DesignError(f"unknown term '{term}'") from None
        if t.kind == "intercept":
            raise DesignError("the intercept has no partial effect")
        if t.kind == SmoothKind.TENSOR.value:
            if not isinstance(grid, dict):
                raise DesignError(f"{term}: a tensor grid needs one axis per covariate")
            a, b = np.meshgrid(
                np.asarray(grid[t.covariates[0]], dtype=float),
                np.asarray(grid[t.covariates[1]], dtype=float),
                indexing="ij",
            )
            values = pd.DataFrame({t.covariates[0]: a.ravel(), t.covariates[1]: b.ravel()})
        else:
            x = grid[t.covariates[0]] if isinstance(grid, dict) else grid
            values = pd.DataFrame({t.covariates[0]: np.asarray(x, dtype=float)})
        if t.is_smooth:
            for cov, kind, knots in zip(t.covariates, t.margin_kinds, t.knots):
                lo, hi = self._margin_span(kind, knots.knots, t.degree)
                v = values[cov].to_numpy()
                if v.min() < lo or v.max() > hi:
                    raise SmoothError(f"{term}: grid for {cov} leaves the knot span [{lo:g}, {hi:g}]")
            B = self._smooth_rows(t, values, clamp=False)
        else:
            B = ((values[t.covariates[0]].to_numpy() - t.mean) / t.sd)[:, None]
        values["effect"] = B @ model.beta[t.start:t.stop]
        return values

    def effect_grid(self, model: FittedModel, term: str, size: int = 200, surface_size: int = 50):
        """Evenly spaced grid over a term's knot span (mean +- 2 sd for linear terms)."""
        try:
            t = model.term(term)
        except KeyError:
            raise DesignError(f"unknown term '{term}'") from None
        if t.is_smooth:
            spans = [self._margin_span(k, kv.knots, t.degree) for k, kv in zip(t.margin_kinds, t.knots)]
        elif t.kind == "linear":
            spans = [(t.mean - 2.0 * t.sd, t.mean + 2.0 * t.sd)]
        else:
            raise DesignError("the intercept has no partial effect")
        if len(spans) == 2:
            return {cov: np.linspace(lo, hi, surface_size) for cov, (lo, hi) in zip(t.covariates, spans)}
        return np.linspace(spans[0][0], spans[0][1], size)

    def model_summary(self, model: FittedModel) -> pd.DataFrame:
        rows = []
        for t in model.terms:
            lam = ";".join(f"{model.lambdas[i]:.6g}" for i in t.penalty_index)
            rows.append(
                {
                    "term": t.name,
                    "kind": t.kind,
                    "columns": t.width,
                    "edf": round(model.edf.get(t.name, 0.0), 6),
                    "lambda": lam,
                }
            )
        summary = pd.DataFrame(rows)
        summary.attrs.update(
            theta=model.theta,
            deviance=model.deviance,
            gcv=model.gcv,
            iterations=model.iterations,
            outer_rounds=model.outer_rounds,
            ridge=model.ridge,
            converged=model.converged,
        )
        return summary
