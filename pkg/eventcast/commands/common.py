import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

from ..config import load_config, parse_int_list
from ..errors import ConfigError
from ..models.config import RunConfig
from ..services.storage_service import StorageService

logger = logging.getLogger(__name__)

# argparse dest -> RunConfig field, for flags shared by several commands
INPUT_FLAGS = ("data_dir", "events", "weather", "covid", "flu", "regions", "region")
MODEL_FLAGS = ("hour_dim", "day_dim", "quarter_dim", "tensor_dims", "side_constraints", "max_outer_rounds")


def add_run_args(parser: argparse.ArgumentParser) -> None:
    """Options accepted before or after the subcommand; SUPPRESS keeps a later parser from erasing them."""
    group = parser.add_argument_group("run")
    group.add_argument("--config", default=argparse.SUPPRESS, help="key=value config file")
    group.add_argument("--output-dir", default=argparse.SUPPRESS, help="directory for artifacts (default output)")
    group.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    group.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker cap for evaluation and benchmarks")
    verbosity = group.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="warnings and errors only")


def add_input_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("inputs")
    group.add_argument("--data-dir", help="directory holding events.csv, weather.csv, covid.csv, flu.csv, regions.csv")
    group.add_argument("--events", help="events CSV (region,timestamp,count)")
    group.add_argument("--weather", help="weather CSV (station,province,timestamp,temp_c,rain_mm,snow_mm)")
    group.add_argument("--covid", help="COVID CSV (date,province,total_positive)")
    group.add_argument("--flu", help="flu CSV (year,week,incidence)")
    group.add_argument("--regions", help="region weights CSV (region,province,weight)")
    group.add_argument("--region", help="region to model; 'all' where the command supports it")


def add_model_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--hour-dim", type=int, help="basis size of the hour smooth")
    group.add_argument("--day-dim", type=int, help="basis size of the day-of-week smooth")
    group.add_argument("--quarter-dim", type=int, help="basis size of the quarter smooth")
    group.add_argument("--tensor-dims", type=parse_int_list, help="day,hour margins of the interaction")
    group.add_argument(
        "--no-side-constraints",
        dest="side_constraints",
        action="store_const",
        const=False,
        help="keep interaction columns already spanned by the main effects (111 instead of 96 columns at default sizes)",
    )
    group.add_argument("--max-outer-rounds", type=int, help="cap on smoothing/dispersion alternations")


def add_plan_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("rolling plan")
    group.add_argument("--horizons", type=parse_int_list, help="comma-separated horizons in days (default 1,2,5,7)")
    group.add_argument("--refit-every", type=int, help="origins per refit (default 7)")
    group.add_argument("--min-history-days", type=int, help="history required before the first origin (default 365)")
    group.add_argument("--eval-days", type=int, help="limit the evaluation to the first N origins")
    group.add_argument("--exogenous", help="CSV of date,temperature,rt,flu values to use instead of carry-forward")


def resolve_config(args: argparse.Namespace, fields: Iterable[str]) -> RunConfig:
    overrides: Dict[str, Any] = {f: getattr(args, f, None) for f in fields}
    overrides.update(
        threads=getattr(args, "threads", None),
        seed=getattr(args, "seed", None),
        output_dir=getattr(args, "output_dir", None),
    )
    return load_config(getattr(args, "config", None), overrides)


def output_dir(config: RunConfig, *parts: str) -> Path:
    out = Path(config.output_dir, *parts)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def parse_day(value) -> Optional[pd.Timestamp]:
    if value is None:
        return None
    try:
        return pd.Timestamp(value).normalize()
    except ValueError as exc:
        raise ConfigError(f"cannot parse date {value!r}") from exc


def day_end(value) -> Optional[pd.Timestamp]:
    """Last hour of the given day."""
    day = parse_day(value)
    return None if day is None else day + pd.Timedelta(hours=23)


def finish(command: str, config: RunConfig, out: Path, artifacts: List[Path], **extra: Any) -> int:
    storage = StorageService()
    artifacts = [a for a in artifacts if a is not None]
    manifest = storage.write_manifest(out, command, config, artifacts, extra or None)
    logger.info("%s wrote %d artifact(s) to %s", command, len(artifacts), out)
    print(manifest)
    return 0
