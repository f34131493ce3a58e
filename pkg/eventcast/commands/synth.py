import argparse
import logging
from pathlib import Path

from ..errors import ConfigError
from ..models.series import RegionId
from ..models.synth import GroundTruth
from ..services.synth_service import SynthService
from .common import finish, resolve_config

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "synth",
        help="generate a seeded synthetic dataset",
        description="Draws hourly events and every covariate input from a known model and writes them as input CSVs.",
    )
    parser.add_argument("--days", type=int, default=365, help="number of days to generate (default 365)")
    parser.add_argument("--start", default="2019-01-01", help="first day (default 2019-01-01)")
    parser.add_argument("--theta", type=float, help="negative-binomial dispersion of the counts (default 10)")
    parser.add_argument("--flat", action="store_true", help="switch every effect off: i.i.d. counts")
    parser.add_argument(
        "--region",
        default=RegionId.PLAIN.value,
        choices=[r.value for r in RegionId],
        help="region name written to the files",
    )
    parser.add_argument("--out", help="directory for the dataset (default: the configured data directory)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args, ())
    truth = GroundTruth.flat() if args.flat else GroundTruth()
    if args.theta is not None:
        if not args.theta > 0:
            raise ConfigError("--theta must be positive")
        truth = truth.model_copy(update={"theta": args.theta})
    out = Path(args.out or config.data_dir)
    service = SynthService()
    dataset = service.generate(truth, start=args.start, n_days=args.days, seed=config.seed, region=RegionId(args.region))
    paths = service.write_dataset(dataset, out)
    return finish("synth", config, out, list(paths.values()), days=args.days)
