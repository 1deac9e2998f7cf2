"""
This module loads the run configuration of the merge pipeline.

The configuration is a single TOML file validated into RunConfig; every
section is optional and falls back to the desk-scale defaults. No environment
variables are read.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from automerge.errors import ConfigError
from automerge.models import RunConfig


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """
    Parses and validates TOML text.

    Args:
        text (str): TOML document.
        source (str): Name used in error messages.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ConfigError: On TOML syntax errors (with line and column) or schema violations.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        details = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
                            for err in exc.errors())
        raise ConfigError(f"{source}: {details}") from exc


def load_config(path: Optional[Path] = None) -> RunConfig:
    """
    Loads the configuration file, or the defaults when no path is given.

    Raises:
        ConfigError: If the file cannot be read or is invalid.
    """
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, source=str(path))
