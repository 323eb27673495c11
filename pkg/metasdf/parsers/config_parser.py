"""
Experiment configuration from JSON files and command-line overrides
"""
import json
from typing import Any, Dict, Optional

from metasdf.config import ExperimentConfig
from metasdf.errors import ConfigError


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a JSON config file

    Args:
        path: Path to the file

    Returns:
        Dictionary of config values
    """
    try:
        with open(path, "r") as f:
            values = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(values, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return values


def parse_experiment_config(config_path: Optional[str] = None,
                            overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from an optional file plus flag overrides

    Flag values that are None are treated as "not given".

    Args:
        config_path: JSON file, or None
        overrides: Values from the command line

    Returns:
        Validated (not yet dimension-resolved) ExperimentConfig
    """
    values: Dict[str, Any] = load_config_file(config_path) if config_path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return ExperimentConfig.from_dict(values)
