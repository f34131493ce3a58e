import time

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import minimize
from scipy.stats import nbinom

from eventcast.errors import ConvergenceError, DataValidationError, DesignError
from eventcast.models.config import RunConfig
from eventcast.models.gam import DesignMatrix, FitOptions, ModelSpec
from eventcast.models.smooth import SmoothKind, SmoothSpec
from eventcast.models.synth import GroundTruth
from eventcast.services.gam_service import GamService, gcv_score, nb_deviance, nb_loglik
from eventcast.services.pipeline_service import PipelineService
from eventcast.services.storage_service import StorageService
from eventcast.services.synth_service import SynthService

TWO_PI = 2.0 * np.pi
DAY_EFFECT = np.array([0.0, 0.1, 0.2, 0.5, 0.3, -0.2, -0.4])  # Monday..Sunday


def toy_problem(gam, n=200, dim=10, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 10.0, n)
    z = rng.normal(size=n)
    y = rng.poisson(np.exp(1.0 + np.sin(x / 2.0) + 0.3 * z)).astype(float)
    data = pd.DataFrame({"x": x, "z": z})
    spec = ModelSpec(
        smooths=[SmoothSpec(name="sx", kind=SmoothKind.PSPLINE, covariates=["x"], dim=[dim])],
        linear=["z"],
    )
    return gam.build_design(data, spec), y, x


def hour_day_eta(data: pd.DataFrame) -> np.ndarray:
    day = data["day"].to_numpy(dtype=int)
    return 1.5 + np.sin(TWO_PI * data["hour"].to_numpy() / 24.0) + DAY_EFFECT[day - 1]


HOUR_DAY_SPEC = ModelSpec(
    smooths=[
        SmoothSpec(name="hour", kind=SmoothKind.CRS, covariates=["hour"], dim=[24]),
        SmoothSpec(name="day", kind=SmoothKind.PSPLINE, covariates=["day"], dim=[7]),
    ],
    linear=["temperature"],
)


@pytest.fixture(scope="module")
def gam():
    return GamService()


@pytest.fixture(scope="module")
def fitted(gam, frame_factory):
    frame = frame_factory(n_days=120, seed=11, eta=hour_day_eta, theta=10.0)
    return frame, gam.fit(frame, HOUR_DAY_SPEC)


# === FAMILY ===

def test_nb_loglik_matches_scipy():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 40, 500).astype(float)
    mu = rng.uniform(0.2, 30.0, 500)
    for theta in (0.5, 2.5, 80.0):
        ref = nbinom.logpmf(y, theta, theta / (theta + mu)).sum()
        assert nb_loglik(y, mu, theta) == pytest.approx(ref, rel=1e-10)


def test_nb_loglik_poisson_limit():
    assert nb_loglik([0.0], [1.0], 1e8) == pytest.approx(-1.0, abs=1e-6)


def test_nb_loglik_rejects_bad_input():
    with pytest.raises(DataValidationError):
        nb_loglik([1.0, np.nan], [1.0, 1.0], 2.0)
    with pytest.raises(DataValidationError):
        nb_loglik([1.0], [0.0], 2.0)
    with pytest.raises(DataValidationError):
        nb_loglik([-1.0], [1.0], 2.0)


def test_deviance_is_twice_the_saturated_loglik_gap():
    rng = np.random.default_rng(1)
    y = rng.integers(1, 30, 300).astype(float)
    mu = rng.uniform(0.5, 25.0, 300)
    theta = 3.0
    assert nb_deviance(y, y, theta) == pytest.approx(0.0, abs=1e-10)
    gap = 2.0 * (nb_loglik(y, y, theta) - nb_loglik(y, mu, theta))
    assert nb_deviance(y, mu, theta) == pytest.approx(gap, rel=1e-9)


def test_gcv_score_guards_saturated_fits():
    assert gcv_score(10.0, 5.0, 105) == pytest.approx(105 * 10.0 / 100.0 ** 2)
    assert gcv_score(10.0, 105.0, 105) == float("inf")


# === DESIGN ===

def test_default_design_column_counts(gam, frame_factory):
    frame = frame_factory(n_days=365, seed=2)
    plain = gam.build_design(frame, ModelSpec.default(side_constraints=False))
    assert plain.n_coef == 111
    assert plain.term("day_hour").width == 69
    constrained = gam.build_design(frame, ModelSpec.default())
    assert constrained.term("day_hour").width == 54
    assert constrained.n_coef == 96
    assert len(constrained.penalties) == 5
    assert constrained.interaction_columns.sum() == 54


def test_design_rejects_constant_linear_column(gam, frame_factory):
    frame = frame_factory(n_days=30, seed=3)
    data = frame.data.assign(flu=0.0)
    spec = ModelSpec(linear=["temperature", "flu"])
    with pytest.raises(DesignError, match="flu"):
        gam.build_design(data, spec)
    assert gam.constant_columns(data, spec) == ["flu"]


def test_design_rows_rebuild_training_design(gam, frame_factory):
    frame = frame_factory(n_days=365, seed=4)
    design = gam.build_design(frame, ModelSpec.default())
    assert_allclose(gam.design_rows(design.terms, frame.data), design.X, atol=1e-10)


# === PIRLS ===

def test_intercept_only_fit_is_the_sample_mean(gam):
    y = np.random.default_rng(5).negative_binomial(4, 0.4, 400).astype(float)
    design = gam.build_design(pd.DataFrame(index=range(400)), ModelSpec())
    res = gam.pirls(design, [], 4.0, y)
    assert np.exp(res.beta[0]) == pytest.approx(y.mean(), rel=1e-8)


@pytest.mark.parametrize(
    "n, dim, theta, lam",
    [(200, 10, 5.0, 1.0), (500, 30, 1.5, 0.1), (2000, 60, 20.0, 10.0), (1000, 120, 5.0, 1.0)],
)
def test_penalized_score_vanishes_at_convergence(gam, n, dim, theta, lam):
    design, y, _ = toy_problem(gam, n=n, dim=dim, seed=n + dim)
    res = gam.pirls(design, [lam], theta, y)
    assert res.converged
    S = lam * design.penalties[0]

    def objective(beta):
        return nb_loglik(y, np.exp(design.X @ beta), theta) - 0.5 * beta @ S @ beta

    grad = np.empty_like(res.beta)
    for j in range(res.beta.size):
        h = 1e-6 * max(1.0, abs(res.beta[j]))
        step = np.zeros_like(res.beta)
        step[j] = h
        grad[j] = (objective(res.beta + step) - objective(res.beta - step)) / (2.0 * h)
    assert np.max(np.abs(grad)) < 1e-5


def test_pirls_trace_never_rises_after_the_first_step(gam):
    design, y, _ = toy_problem(gam, n=800, dim=40, seed=21)
    res = gam.pirls(design, [0.5], 3.0, y)
    trace = np.asarray(res.trace)
    assert trace.size >= 2
    assert np.all(np.diff(trace[1:]) <= 1e-12 * np.abs(trace[1:-1]))
    assert trace[-1] == pytest.approx(res.penalized_deviance)


def test_pirls_that_runs_out_of_iterations_raises_with_its_trace(gam):
    design, y, _ = toy_problem(gam, n=300, dim=12, seed=22)
    with pytest.raises(ConvergenceError) as err:
        gam.pirls(design, [1.0], 5.0, y, FitOptions(max_pirls_iter=1))
    assert len(err.value.trace) == 1


def test_stalled_step_halving_without_a_small_score_raises(gam):
    design, y, _ = toy_problem(gam, n=300, dim=12, seed=23)
    # a start this far off makes the first full Newton step overshoot
    start = np.zeros(design.n_coef)
    start[0] = 8.0
    with pytest.raises(ConvergenceError, match="step halving") as err:
        gam.pirls(design, [1.0], 5.0, y, FitOptions(max_halvings=0), beta0=start)
    assert err.value.trace


def test_extra_covariate_never_raises_the_penalized_deviance(gam):
    design, y, x = toy_problem(gam, n=600, dim=15, seed=24)
    smooth = SmoothSpec(name="sx", kind=SmoothKind.PSPLINE, covariates=["x"], dim=[15])
    smaller = gam.build_design(pd.DataFrame({"x": x}), ModelSpec(smooths=[smooth]))
    for lam, theta in ((0.1, 2.0), (10.0, 8.0)):
        nested = gam.pirls(smaller, [lam], theta, y)
        full = gam.pirls(design, [lam], theta, y)
        assert full.penalized_deviance <= nested.penalized_deviance * (1 + 1e-10)


def test_working_gcv_matches_the_refit_at_its_anchor(gam):
    design, y, _ = toy_problem(gam, n=600, dim=20, seed=25)
    res = gam.pirls(design, [3.0], 4.0, y)
    approx = gam.working_gcv(design, y, res.beta, 4.0)
    assert approx(np.log([3.0])) == pytest.approx(gcv_score(res.deviance, res.edf_total, y.size), rel=1e-6)
    # nearby smoothing parameters are tracked to first order
    other = gam.pirls(design, [4.0], 4.0, y)
    assert approx(np.log([4.0])) == pytest.approx(gcv_score(other.deviance, other.edf_total, y.size), rel=1e-2)


def test_large_theta_matches_penalized_poisson(gam):
    design, y, _ = toy_problem(gam, n=400, dim=12, seed=6)
    res = gam.pirls(design, [2.0], 1e8, y)
    X, S = design.X, 2.0 * design.penalties[0]

    def f(b):
        eta = X @ b
        return np.sum(np.exp(eta) - y * eta) + 0.5 * b @ S @ b

    def jac(b):
        return X.T @ (np.exp(X @ b) - y) + S @ b

    def hess(b):
        return X.T @ (np.exp(X @ b)[:, None] * X) + S

    ref = minimize(f, np.zeros(X.shape[1]), jac=jac, hess=hess, method="trust-exact", options={"gtol": 1e-12})
    assert_allclose(res.beta, ref.x, atol=1e-4)


def test_heavy_penalty_leaves_an_affine_component(gam):
    design, y, x = toy_problem(gam, n=300, dim=12, seed=7)
    res = gam.pirls(design, [1e12], 5.0, y)
    t = design.term("sx")
    component = design.X[:, t.start:t.stop] @ res.beta[t.start:t.stop]
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, component, rcond=None)
    assert np.max(np.abs(component - A @ coef)) < 1e-6


def test_centering_with_intercept_matches_uncentered_fit(gam):
    rng = np.random.default_rng(8)
    x = rng.uniform(0.0, 5.0, 250)
    y = rng.poisson(np.exp(0.5 + np.cos(x))).astype(float)
    data = pd.DataFrame({"x": x})
    spec = SmoothSpec(name="x", kind=SmoothKind.PSPLINE, covariates=["x"], dim=[9])
    raw = gam.smoother.realize(spec, data, center=False)
    centered = gam.smoother.realize(spec, data, center=True)

    def design(X, S):
        p = X.shape[1]
        P = np.zeros((p, p))
        P[-S.shape[0]:, -S.shape[0]:] = S
        return DesignMatrix(X=X, penalties=[P], terms=[], interaction_columns=np.zeros(p, dtype=bool))

    free = gam.pirls(design(raw.basis, raw.penalties[0]), [3.0], 4.0, y)
    with_intercept = gam.pirls(
        design(np.column_stack([np.ones(250), centered.basis]), centered.penalties[0]), [3.0], 4.0, y
    )
    assert_allclose(with_intercept.mu, free.mu, rtol=1e-6)


# === FITTED MODELS ===

def test_fit_reports_consistent_deviance(gam, fitted):
    frame, model = fitted
    assert model.converged
    assert model.n_obs == len(frame)
    mu = gam.predict(model, frame)
    assert nb_deviance(frame.y, mu, model.theta) == pytest.approx(model.deviance, rel=1e-8)
    assert model.train_start == frame.data.index[0]
    assert 3.0 < model.theta < 40.0


def test_fit_recovers_hour_and_day_effects(gam, fitted):
    _, model = fitted
    hours = np.arange(24.0)
    hour = gam.partial_effect(model, "hour", hours)["effect"].to_numpy()
    assert abs(hour.mean()) < 1e-6
    assert np.corrcoef(hour, np.sin(TWO_PI * hours / 24.0))[0, 1] > 0.98
    day = gam.partial_effect(model, "day", np.arange(1.0, 8.0))["effect"].to_numpy()
    assert int(np.argmax(day)) == int(np.argmax(DAY_EFFECT))


def test_effect_grid_spans(gam, fitted):
    _, model = fitted
    grid = gam.effect_grid(model, "hour", size=200)
    assert grid.size == 200 and grid[0] == 0.0 and grid[-1] == 23.0
    temp = model.term("temperature")
    lin = gam.effect_grid(model, "temperature", size=5)
    assert lin[0] == pytest.approx(temp.mean - 2 * temp.sd)
    with pytest.raises(DesignError):
        gam.effect_grid(model, "(Intercept)")
    with pytest.raises(DesignError):
        gam.partial_effect(model, "nope", [1.0])


def test_model_summary_lists_every_term(gam, fitted):
    _, model = fitted
    summary = gam.model_summary(model)
    assert summary["term"].tolist() == ["(Intercept)", "hour", "day", "temperature"]
    assert summary.loc[summary["term"] == "hour", "columns"].item() == 23
    assert summary["edf"].sum() == pytest.approx(model.edf_total, abs=1e-5)
    assert summary.attrs["theta"] == model.theta


def test_saved_model_predicts_identically(gam, fitted, tmp_path):
    frame, model = fitted
    storage = StorageService()
    loaded = storage.load_model(storage.save_model(model, tmp_path / "model.json"))
    np.testing.assert_array_equal(gam.predict(loaded, frame), gam.predict(model, frame))
    assert loaded.theta == model.theta
    assert loaded.train_end == model.train_end


def test_malformed_model_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(DataValidationError):
        StorageService().load_model(path)


def test_fit_window_must_hold_rows(gam, fitted):
    frame, _ = fitted
    with pytest.raises(DesignError):
        gam.fit(frame, HOUR_DAY_SPEC, since=pd.Timestamp("2030-01-01"))


def test_poisson_counts_select_large_theta(gam, frame_factory):
    frame = frame_factory(
        n_days=365, seed=12, theta=None, eta=lambda d: 4.6 + 0.5 * np.sin(TWO_PI * d["hour"].to_numpy() / 24.0)
    )
    spec = ModelSpec(smooths=[SmoothSpec(name="hour", kind=SmoothKind.CRS, covariates=["hour"], dim=[12])])
    model = GamService(FitOptions(max_outer_rounds=5)).fit(frame, spec)
    assert model.theta >= 1e3


def test_tensor_surface_slice_matches_the_training_columns(gam, frame_factory):
    frame = frame_factory(n_days=42, seed=13, eta=hour_day_eta, theta=10.0)
    spec = ModelSpec(smooths=[s for s in ModelSpec.default().smooths if s.name != "quarter"])
    model = gam.fit(frame, spec, FitOptions(max_outer_rounds=3))
    t = model.term("day_hour")
    design = gam.build_design(frame, spec)
    for day in (2, 6):
        rows = np.flatnonzero(frame.data["day"].to_numpy() == day)[:24]
        hours = frame.data["hour"].to_numpy()[rows]
        expected = design.X[rows, t.start:t.stop] @ model.beta[t.start:t.stop]
        surface = gam.partial_effect(model, "day_hour", {"day": [float(day)], "hour": hours})
        assert_allclose(surface["effect"].to_numpy(), expected, atol=1e-10)


# === SYNTHETIC YEAR ===

@pytest.fixture(scope="module")
def synth_year(tmp_path_factory):
    synth = SynthService()
    dataset = synth.generate(GroundTruth(), start="2019-01-01", n_days=380, seed=5)
    path = tmp_path_factory.mktemp("synth_year")
    synth.write_dataset(dataset, path)
    return dataset.truth, PipelineService(RunConfig(data_dir=str(path))).load().frame


@pytest.mark.slow
def test_default_fit_on_a_year_takes_under_ten_seconds(synth_year):
    _, frame = synth_year
    assert len(frame.data) >= 8760
    started = time.perf_counter()
    model = GamService().fit(frame, ModelSpec.default())
    elapsed = time.perf_counter() - started
    assert model.converged
    assert elapsed < 10.0, f"fit took {elapsed:.1f} s"


@pytest.mark.slow
def test_fit_recovers_the_synthetic_hour_and_day_effects(synth_year):
    truth, frame = synth_year
    gam = GamService()
    model = gam.fit(frame, ModelSpec.default())
    hours = np.arange(24.0)
    hour = gam.partial_effect(model, "hour", hours)["effect"].to_numpy()
    assert np.corrcoef(hour, truth.hour_effect(hours))[0, 1] > 0.98
    day = gam.partial_effect(model, "day", np.arange(1.0, 8.0))["effect"].to_numpy()
    assert int(np.argmax(day)) == int(np.argmax(truth.day_effects))
