import argparse
import logging

from ..services.gam_service import GamService
from ..services.pipeline_service import PipelineService
from ..services.storage_service import StorageService
from .common import INPUT_FLAGS, MODEL_FLAGS, add_input_args, add_model_args, day_end, finish, output_dir, parse_day, resolve_config

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "fit",
        help="fit the negative-binomial GAM and save it",
        description=(
            "Fits the hourly model on the covariate frame and writes model.json and summary.csv. "
            "With the default bases the design has 96 columns: tensor columns already spanned by the "
            "intercept and the hour and day main effects are dropped. --no-side-constraints keeps all 111."
        ),
    )
    add_input_args(parser)
    add_model_args(parser)
    parser.add_argument("--since", dest="fit_since", help="first day of the fit window")
    parser.add_argument("--until", dest="fit_until", help="last day of the fit window")
    parser.add_argument(
        "--drop-constant",
        action="store_true",
        help="drop linear covariates that are constant in the window (rt before the pandemic)",
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args, INPUT_FLAGS + MODEL_FLAGS + ("fit_since", "fit_until"))
    data = PipelineService(config).load()
    gam = GamService(config.fit_options())
    model = gam.fit(
        data.frame,
        config.model_spec(),
        since=parse_day(config.fit_since),
        until=day_end(config.fit_until),
        drop_constant=args.drop_constant,
    )
    out = output_dir(config)
    storage = StorageService()
    summary = gam.model_summary(model)
    artifacts = [storage.save_model(model, out / "model.json"), storage.write_summary(summary, out / "summary.csv")]
    logger.info(
        "fitted %d coefficient(s) on %d row(s): theta %.4g, edf %.2f, %s",
        len(model.beta),
        model.n_obs,
        model.theta,
        model.edf_total,
        "converged" if model.converged else "NOT converged",
    )
    return finish("fit", config, out, artifacts, theta=model.theta, edf_total=model.edf_total, converged=model.converged)
