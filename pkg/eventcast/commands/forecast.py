import argparse
import logging

import pandas as pd

from ..errors import ForecastError
from ..services.forecast_service import GamForecaster
from ..services.gam_service import GamService
from ..services.pipeline_service import PipelineService
from ..services.storage_service import StorageService
from .common import (
    INPUT_FLAGS,
    MODEL_FLAGS,
    add_input_args,
    add_model_args,
    finish,
    output_dir,
    parse_day,
    resolve_config,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "forecast",
        help="forecast hourly and daily events after one origin",
        description="Forecasts the days after an origin with a saved model, or fits one on the history up to the origin.",
    )
    add_input_args(parser)
    add_model_args(parser)
    parser.add_argument("--model", help="model.json from `fit`; fitted on the fly when omitted")
    parser.add_argument("--origin", help="last observed day (default: last complete day of the events)")
    parser.add_argument("--days", type=int, default=7, help="number of days to forecast (default 7)")
    parser.add_argument("--exogenous", help="CSV of date,temperature,rt,flu values to use instead of carry-forward")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args, INPUT_FLAGS + MODEL_FLAGS + ("exogenous",))
    if args.days < 1:
        raise ForecastError("--days must be at least 1")
    pipeline = PipelineService(config)
    data = pipeline.load()
    daily = data.events.daily_totals(complete_only=True).dropna()
    origin = parse_day(args.origin) or daily.index[-1]
    forecaster = GamForecaster(
        config.model_spec(),
        config.fit_options(),
        gam=GamService(config.fit_options()),
        exogenous=pipeline.exogenous(),
    )
    storage = StorageService()
    model = storage.load_model(args.model) if args.model else forecaster.fit(data, origin.date())
    path = forecaster.path(model, data, origin.date(), args.days)

    hourly = pd.DataFrame(
        {
            "timestamp": path.index.strftime("%Y-%m-%dT%H:%M"),
            "horizon_days": (path.index.normalize() - origin).days,
            "mean": path.to_numpy(),
        }
    )
    totals = path.groupby(path.index.normalize()).sum()
    daily_out = pd.DataFrame(
        {
            "date": totals.index.strftime("%Y-%m-%d"),
            "horizon_days": (totals.index - origin).days,
            "predicted": totals.to_numpy(),
        }
    )
    out = output_dir(config)
    artifacts = [
        storage.write_table(hourly, out / "forecast_hourly.csv"),
        storage.write_table(daily_out, out / "forecast_daily.csv"),
    ]
    logger.info("forecast %d day(s) from origin %s", args.days, origin.date())
    return finish("forecast", config, out, artifacts, origin=origin.date().isoformat())
