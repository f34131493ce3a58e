import argparse
import logging

from ..services.benchmark_service import BenchmarkService
from ..services.forecast_service import ForecastService, GamForecaster
from ..services.gam_service import GamService
from ..services.pipeline_service import PipelineService
from ..services.storage_service import StorageService
from .common import INPUT_FLAGS, MODEL_FLAGS, add_input_args, add_model_args, add_plan_args, finish, output_dir, resolve_config
from .evaluate import plan_for

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "benchmark",
        help="score naive persistence, ARIMA and INGARCH on daily totals",
        description="Runs the benchmark models over the rolling plan and writes benchmark.csv.",
    )
    add_input_args(parser)
    add_model_args(parser)
    add_plan_args(parser)
    parser.add_argument("--with-gam", action="store_true", help="also run the GAM evaluation and include it in the table")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(
        args, INPUT_FLAGS + MODEL_FLAGS + ("horizons", "refit_every", "min_history_days", "eval_days", "exogenous")
    )
    pipeline = PipelineService(config)
    data = pipeline.load()
    plan = plan_for(config, data)
    gam_report = None
    if args.with_gam:
        forecaster = GamForecaster(
            config.model_spec(),
            config.fit_options(),
            gam=GamService(config.fit_options()),
            exogenous=pipeline.exogenous(),
        )
        gam_report = ForecastService(config.threads).rolling_evaluate(data, plan, forecaster)
    table = BenchmarkService(config.threads).benchmark_compare(data, plan, gam_report)
    out = output_dir(config)
    artifacts = [StorageService().write_benchmarks(table, out / "benchmark.csv")]
    return finish("benchmark", config, out, artifacts, methods=table.methods)
