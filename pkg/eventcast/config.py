"""RunConfig loading: defaults < environment < config file < command-line flags."""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from pydantic import ValidationError

from .errors import ConfigError
from .models.config import RunConfig

logger = logging.getLogger(__name__)

ENV_KEYS = {
    "EVENTCAST_OUTPUT_DIR": "output_dir",
    "EVENTCAST_THREADS": "threads",
    "EVENTCAST_SEED": "seed",
    "EVENTCAST_DATA_DIR": "data_dir",
}

LIST_KEYS = {"horizons", "tensor_dims"}


def _coerce(key: str, value: str) -> Any:
    value = value.strip()
    if key in LIST_KEYS:
        return [v.strip() for v in value.split(",") if v.strip()]
    if value.lower() in ("none", "null", ""):
        return None
    return value


def parse_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Flat key=value lines; '#' starts a comment."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    values: Dict[str, Any] = {}
    known = set(RunConfig.model_fields)
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path} line {number}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path} line {number}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    return {field: environ[name] for name, field in ENV_KEYS.items() if environ.get(name)}


def load_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    values: Dict[str, Any] = {}
    values.update(env_overrides(environ))
    if config_file:
        values.update(parse_config_file(config_file))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        config = RunConfig(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"{where}: {first['msg']}") from exc
    logger.debug("resolved config: %s", config.model_dump(mode="json"))
    return config


def parse_int_list(value: str) -> List[int]:
    """argparse type for comma-separated integers."""
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"expected comma-separated integers, got {value!r}") from exc
