"""
Run configuration loading

Precedence, lowest to highest:
1. built-in experiment defaults (EXPERIMENT_DEFAULTS)
2. top-level keys of the TOML config file
3. the [<experiment>] table of the TOML config file
4. --set key=value overrides (values parsed as TOML literals, else kept as strings)
5. dedicated CLI flags (--out, --jobs, --seed, --format)
"""

import logging
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from typing import Any, Dict, Iterable, Optional

from pydantic import ValidationError

from spincool.exceptions import ConfigError
from spincool.schema.params import EXPERIMENTS, RunConfig

logger = logging.getLogger(__name__)

EXPERIMENT_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "fig1": {},
    "fig2": {"spin_counts": [1, 2, 3, 4], "lambda_points": 31},
    "fig3": {"spin_counts": [1, 2, 3, 4], "iterations": 10},
    "fig6": {"iterations": 10},
    "collective": {"n_spins": 50, "coupling": 0.028, "basis": "collective", "iterations": 5},
    "open": {
        "n_spins": 1,
        "nbar": 3.0,
        "fock_dim": 60,
        "iterations": 5,
        "gamma": 1e-3,
        "spin_relaxation": 1e-3,
        "dephasing": 1e-2,
    },
    "optimize": {"n_spins": 2},
    "estimate-coupling": {},
}


def parse_override(item: str) -> tuple:
    """Split 'key=value' and parse value as a TOML literal (strings need no quotes)."""
    if "=" not in item:
        raise ConfigError(f"Malformed --set '{item}', expected key=value")
    key, raw = item.split("=", 1)
    key, raw = key.strip(), raw.strip()
    if not key:
        raise ConfigError(f"Malformed --set '{item}', empty key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML in {path}: {e}") from e


def load_config(
    experiment: str,
    config_path: Optional[str] = None,
    overrides: Iterable[str] = (),
    flags: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Resolve and validate the configuration of one experiment.

    Args:
        experiment: Experiment name (see EXPERIMENTS)
        config_path: Optional TOML file
        overrides: 'key=value' strings from --set
        flags: Dedicated CLI flags; None values are ignored

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: On unknown experiments, unreadable files, malformed overrides, or
            values failing validation
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"Unknown experiment '{experiment}'. Available: {', '.join(EXPERIMENTS)}")

    merged: Dict[str, Any] = dict(EXPERIMENT_DEFAULTS[experiment])
    if config_path:
        document = read_config_file(config_path)
        merged.update({k: v for k, v in document.items() if k not in EXPERIMENTS})
        section = document.get(experiment, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{experiment}] in {config_path} must be a table")
        merged.update(section)
    for item in overrides:
        key, value = parse_override(item)
        merged[key] = value
    merged.update({k: v for k, v in (flags or {}).items() if v is not None})
    merged["experiment"] = experiment

    try:
        config = RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration for {experiment}: {e}") from e
    logger.debug(f"Resolved config for {experiment}: {config.resolved()}")
    return config

