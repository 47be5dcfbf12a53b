"""Settings construction and artifact loading shared by the subcommands"""

import argparse
import json
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError

from app.config import Settings, config_hash, load_settings
from app.core.enums import CodeFeature, Method
from app.core.exceptions import ConfigurationException
from app.core.models import EllipseGaussian, IdmParams
from app.services.code_predictor import KnnStore
from app.services.estimation import load_store
from app.utils.logger import set_log_level, setup_logger

logger = setup_logger(__name__)


def _deep_merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def _prune(tree: dict[str, Any]) -> dict[str, Any]:
    """Drop unset flags so they do not shadow lower configuration layers"""
    pruned = {}
    for key, value in tree.items():
        if isinstance(value, dict):
            value = _prune(value)
            if value:
                pruned[key] = value
        elif value is not None:
            pruned[key] = value
    return pruned


def get_settings(args: argparse.Namespace, overrides: Optional[dict[str, Any]] = None) -> Settings:
    """
    Effective settings of a run: defaults < config file < environment < flags

    Logs the configuration hash and seed so every run can be reproduced.

    Raises:
        ConfigurationException: Missing config file or invalid values
    """
    config_file = getattr(args, "config", None)
    if config_file is not None and not Path(config_file).is_file():
        raise ConfigurationException(
            f"Config file not found: {config_file}", config_key="config", config_value=config_file
        )

    flags = {"seed": args.seed, "workers": args.workers, "log_level": args.log_level}
    tree = _prune(_deep_merge(flags, overrides or {}))
    try:
        config = load_settings(config_file, **tree)
    except ValidationError as e:
        raise ConfigurationException(
            "Invalid configuration",
            details={"validation_errors": [
                {"field": ".".join(str(loc) for loc in err["loc"]), "message": err["msg"]}
                for err in e.errors()
            ]},
        )

    set_log_level(config.log_level)
    logger.info(
        f"{args.command}: config_hash={config_hash(config)} "
        f"seed={config.seed} workers={config.workers}"
    )
    return config


def require_path(value: Optional[Path], key: str) -> Path:
    """A path flag (or its configured fallback) that must name an existing file"""
    if value is None:
        raise ConfigurationException(f"Missing required path: {key}", config_key=key)
    path = Path(value)
    if not path.is_file():
        raise ConfigurationException(f"File not found: {path}", config_key=key, config_value=path)
    return path


def _json_argument(text: str, key: str) -> Any:
    """Inline JSON, or the path of a JSON file"""
    candidate = Path(text)
    source = candidate.read_text(encoding="utf-8") if candidate.is_file() else text
    try:
        return json.loads(source)
    except json.JSONDecodeError as e:
        raise ConfigurationException(f"Invalid JSON for {key}", config_key=key, config_value=text,
                                     details={"json_error": str(e)})


def parse_params(text: str) -> IdmParams:
    try:
        return IdmParams.model_validate(_json_argument(text, "params"))
    except ValidationError as e:
        raise ConfigurationException("Invalid IDM parameters", config_key="params",
                                     details={"errors": str(e)})


def parse_ellipse(text: str, key: str) -> EllipseGaussian:
    try:
        return EllipseGaussian.model_validate(_json_argument(text, key))
    except ValidationError as e:
        raise ConfigurationException(f"Invalid ellipse for {key}", config_key=key,
                                     details={"errors": str(e)})


def parse_bounds(path: Optional[Path]) -> Optional[dict[str, Any]]:
    """Bounds override file: a JSON object of parameter -> [lower, upper]"""
    if path is None:
        return None
    return _json_argument(str(require_path(path, "bounds")), "bounds")


def parse_features(text: Optional[str]) -> Optional[list[CodeFeature]]:
    if text is None:
        return None
    try:
        return [CodeFeature(token.strip()) for token in text.split(",") if token.strip()]
    except ValueError:
        raise ConfigurationException("Unknown driving-code feature", config_key="features",
                                     config_value=text)


def parse_methods(text: Optional[str]) -> Optional[list[Method]]:
    if text is None:
        return None
    try:
        return [Method.parse(token) for token in text.split(",") if token.strip()]
    except ValueError:
        raise ConfigurationException("Unknown method", config_key="methods", config_value=text)


def _int_range(token: str) -> list[int]:
    """'3' or the inclusive range '1..5'"""
    if ".." not in token:
        return [int(token)]
    first, last = (int(part) for part in token.split("..", 1))
    if last < first:
        raise ValueError(f"Empty range {token}")
    return list(range(first, last + 1))


def parse_int_list(text: Optional[str], key: str) -> Optional[list[int]]:
    """Comma-separated integers and inclusive a..b ranges, e.g. '1..3,5'"""
    if text is None:
        return None
    try:
        return [
            value for token in text.split(",") if token.strip()
            for value in _int_range(token.strip())
        ]
    except ValueError:
        raise ConfigurationException(f"Expected integers or a..b ranges for {key}",
                                     config_key=key, config_value=text)


def get_store(path: Path, config: Settings) -> KnnStore:
    entries = load_store(require_path(path, "store"))
    logger.info(f"Loaded store with {len(entries)} entries")
    return KnnStore.from_entries(entries, config.knn)
