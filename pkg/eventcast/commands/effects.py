import argparse
import logging
from typing import List

from ..errors import DesignError
from ..models.gam import FittedModel
from ..services.gam_service import GamService
from ..services.pipeline_service import PipelineService
from ..services.plot_service import PlotService
from ..services.storage_service import StorageService
from .common import (
    INPUT_FLAGS,
    MODEL_FLAGS,
    add_input_args,
    add_model_args,
    day_end,
    finish,
    output_dir,
    parse_day,
    resolve_config,
)

logger = logging.getLogger(__name__)

GRID_SIZE = 200


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "effects",
        help="export partial-effect curves and surfaces",
        description=(
            "Writes effects_<term>.csv and effects_<term>.svg for each requested term; "
            "two-covariate terms give a surface and a heat map."
        ),
    )
    add_input_args(parser)
    add_model_args(parser)
    parser.add_argument("--model", help="model.json from `fit`; fitted on the fly when omitted")
    parser.add_argument(
        "--term",
        action="append",
        default=None,
        help="term to export; repeat for several, or 'all' (default)",
    )
    parser.add_argument("--since", dest="fit_since", help="first day of the fit window when fitting on the fly")
    parser.add_argument("--until", dest="fit_until", help="last day of the fit window when fitting on the fly")
    parser.add_argument("--drop-constant", action="store_true", help="drop linear covariates constant in the window")
    parser.set_defaults(handler=run)


def selected_terms(model: FittedModel, requested: List[str]) -> List[str]:
    available = [t.name for t in model.terms if t.kind != "intercept"]
    if not requested or "all" in requested:
        return available
    unknown = [t for t in requested if t not in available]
    if unknown:
        raise DesignError(f"unknown term(s) {unknown}; the model has {available}")
    return list(dict.fromkeys(requested))


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args, INPUT_FLAGS + MODEL_FLAGS + ("fit_since", "fit_until"))
    gam = GamService(config.fit_options())
    storage = StorageService()
    if args.model:
        model = storage.load_model(args.model)
    else:
        data = PipelineService(config).load()
        model = gam.fit(
            data.frame,
            config.model_spec(),
            since=parse_day(config.fit_since),
            until=day_end(config.fit_until),
            drop_constant=args.drop_constant,
        )
    out = output_dir(config)
    plots = PlotService()
    artifacts = []
    for name in selected_terms(model, args.term):
        term = model.term(name)
        effect = gam.partial_effect(model, name, gam.effect_grid(model, name, size=GRID_SIZE))
        effect["effect"] = effect["effect"] - effect["effect"].mean()
        if len(term.covariates) == 2:
            artifacts.append(storage.write_table(effect, out / f"effects_{name}.csv"))
            artifacts.append(plots.plot_surface(effect, name, term.covariates, out / f"effects_{name}.svg"))
        else:
            curve = effect.rename(columns={term.covariates[0]: "x"})[["x", "effect"]]
            artifacts.append(storage.write_table(curve, out / f"effects_{name}.csv"))
            artifacts.append(plots.plot_effect(effect, name, out / f"effects_{name}.svg"))
        logger.info("exported partial effect of %s", name)
    return finish("effects", config, out, artifacts)
