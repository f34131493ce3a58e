import argparse
import logging

import pandas as pd

from ..services.feature_service import FeatureService
from ..services.pipeline_service import PipelineService
from ..services.storage_service import StorageService
from .common import INPUT_FLAGS, add_input_args, finish, output_dir, resolve_config

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "ingest",
        help="validate the inputs and export the hourly covariate frame",
        description="Reads every input file, aggregates weather, computes Rt and writes frame.csv and rt.csv.",
    )
    add_input_args(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args, INPUT_FLAGS)
    pipeline = PipelineService(config)
    features = FeatureService(config.serial_mean, config.serial_sd, rt_window=config.rt_window)
    artifacts = []
    dropped = {}
    for name in pipeline.region_names():
        data = pipeline.load(name)
        out = output_dir(config, name) if config.region == "all" else output_dir(config)
        artifacts.append(features.export_frame(data.frame, out / "frame.csv"))
        rt = pd.DataFrame(
            {
                "date": data.rt.dates.strftime("%Y-%m-%d"),
                "rt": data.rt.rt,
                "credible": data.rt.credible.astype(int),
            }
        )
        artifacts.append(StorageService().write_table(rt, out / "rt.csv"))
        dropped[name] = data.frame.dropped
        logger.info("%s: %d hourly row(s) ready for fitting", name, len(data.frame))
    return finish("ingest", config, output_dir(config), artifacts, dropped=dropped)
