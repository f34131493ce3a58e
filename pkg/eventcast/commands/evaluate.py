import argparse
import logging
from pathlib import Path
from typing import Dict, List, Tuple

from ..models.config import RunConfig
from ..models.forecast import ForecastReport, PipelineData
from ..services.benchmark_service import BenchmarkService
from ..services.forecast_service import ForecastService, GamForecaster, build_rolling_plan
from ..services.gam_service import GamService
from ..services.pipeline_service import PipelineService
from ..services.plot_service import PlotService
from ..services.storage_service import StorageService
from .common import (
    INPUT_FLAGS,
    MODEL_FLAGS,
    add_input_args,
    add_model_args,
    add_plan_args,
    finish,
    output_dir,
    parse_day,
    resolve_config,
)

logger = logging.getLogger(__name__)

PLAN_FLAGS = ("horizons", "refit_every", "min_history_days", "eval_days", "exogenous", "benchmarks", "fit_since")


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "evaluate",
        help="rolling-origin evaluation of the GAM (and the benchmarks)",
        description=(
            "Refits the model on an expanding window, forecasts every horizon from every origin and scores "
            "relative MAE per horizon. Writes report.csv, mae.csv, errors.svg, forecast.svg and benchmark.csv."
        ),
    )
    add_input_args(parser)
    add_model_args(parser)
    add_plan_args(parser)
    parser.add_argument("--since", dest="fit_since", help="ignore rows before this day when fitting")
    parser.add_argument(
        "--no-benchmarks",
        dest="benchmarks",
        action="store_const",
        const=False,
        help="skip the naive, ARIMA and INGARCH comparison",
    )
    parser.set_defaults(handler=run)


def plan_for(config: RunConfig, data: PipelineData):
    daily = data.events.daily_totals(complete_only=True).dropna()
    return build_rolling_plan(
        daily.index[0].date(),
        daily.index[-1].date(),
        config.horizons,
        refit_every=config.refit_every,
        min_history_days=config.min_history_days,
        eval_days=config.eval_days,
    )


def evaluate_region(config: RunConfig, pipeline: PipelineService, data: PipelineData, out: Path) -> Tuple[ForecastReport, List[Path]]:
    plan = plan_for(config, data)
    forecaster = GamForecaster(
        config.model_spec(),
        config.fit_options(),
        gam=GamService(config.fit_options()),
        exogenous=pipeline.exogenous(),
        fit_since=parse_day(config.fit_since),
    )
    report = ForecastService(config.threads).rolling_evaluate(data, plan, forecaster)
    storage = StorageService()
    plots = PlotService()
    artifacts = [
        storage.write_report(report, out / "report.csv"),
        storage.write_mae(report, out / "mae.csv"),
        storage.write_failures(report, out / "failures.csv"),
        plots.plot_errors(report, out / "errors.svg"),
        plots.plot_forecasts(report, out / "forecast.svg"),
    ]
    if config.benchmarks:
        table = BenchmarkService(config.threads).benchmark_compare(data, plan, report)
        artifacts.append(storage.write_benchmarks(table, out / "benchmark.csv"))
    for score in report.scores:
        logger.info(
            "%s, %d day(s) ahead: MAE %s over %d day(s)",
            data.events.region.value,
            score.horizon_days,
            "n/a" if score.mae_pct is None else f"{score.mae_pct:.3f}%",
            score.n,
        )
    return report, artifacts


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args, INPUT_FLAGS + MODEL_FLAGS + PLAN_FLAGS)
    pipeline = PipelineService(config)
    root = output_dir(config)
    if config.region != "all":
        report, artifacts = evaluate_region(config, pipeline, pipeline.load(), root)
        return finish("evaluate", config, root, artifacts, origins=len({r.origin for r in report.rows}))

    reports: Dict[str, ForecastReport] = {}
    artifacts: List[Path] = []
    for name in pipeline.region_names():
        report, written = evaluate_region(config, pipeline, pipeline.load(name), output_dir(config, name))
        reports[name] = report
        artifacts.extend(written)
    artifacts.append(StorageService().write_regions_mae(reports, root / "regions_mae.csv"))
    return finish("evaluate", config, root, artifacts, regions=sorted(reports))
