"""
Settings - environment and preset configuration
WIREBENCH_* environment variables and YAML presets layered under the CLI flags.
"""
from pathlib import Path
from typing import Any, Dict, Union

import yaml
from pydantic_settings import BaseSettings, SettingsConfigDict

from errors import ConfigurationError
from schedule import parse_size

SIZE_FIELDS = ("min_size", "max_size", "halve_from", "mtu")
PRESETS_DIR = Path(__file__).parent / "presets"


class WirebenchSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="WIREBENCH_", extra="ignore")

    out: Path = Path("results")
    log_level: str = "INFO"


def load_preset(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a YAML preset of BenchmarkConfig fields. A bare name such as 'desk'
    resolves to the bundled presets directory.
    """
    path = Path(path)
    if not path.exists() and not path.suffix:
        path = PRESETS_DIR / f"{path.name}.yaml"
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as exc:
        raise ConfigurationError(f"preset {path} not found") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"preset {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"preset {path} must be a mapping of config fields")

    for name in SIZE_FIELDS:
        if isinstance(data.get(name), str):
            data[name] = parse_size(data[name])
    return data
