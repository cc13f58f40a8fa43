"""
Run configuration for pulseforge.

This module parses ``key = value`` run configuration files, validates them
against the keys a subcommand accepts, merges command-line overrides and
echoes the resolved configuration next to a run's outputs.
"""

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from .errors import InvalidConfig, IoError

RESOLVED_CONFIG_NAME = "run.resolved.cfg"
GLOBAL_KEYS = ("seed", "log_level", "out_dir", "threads")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_\-]*)\s*=\s*(.*)$")


@dataclass
class RunConfig:
    """Configuration data structure for one pulseforge run."""

    seed: int = 0
    log_level: str = "INFO"
    out_dir: Optional[Path] = None
    threads: Optional[int] = None
    params: Dict[str, str] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, str]:
        """Flatten to string values, globals included."""
        values = dict(self.params)
        values["seed"] = str(self.seed)
        values["log_level"] = self.log_level
        if self.out_dir is not None:
            values["out_dir"] = str(self.out_dir)
        if self.threads is not None:
            values["threads"] = str(self.threads)
        return values


def _normalize_key(key: str) -> str:
    return key.strip().replace("-", "_")


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _to_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError as e:
        raise InvalidConfig(f"{key} must be an integer: {value!r}", module="cli") from e


def _apply(config: RunConfig, key: str, value: str) -> None:
    if key == "seed":
        config.seed = _to_int(key, value)
    elif key == "log_level":
        config.log_level = value.upper()
    elif key == "out_dir":
        config.out_dir = Path(value)
    elif key == "threads":
        config.threads = _to_int(key, value)
    else:
        config.params[key] = value


def parse_config(config_path: Path) -> RunConfig:
    """
    Parse a run configuration file.

    Args:
        config_path: Path to the ``key = value`` configuration file

    Returns:
        RunConfig with globals in typed fields and every other key in ``params``

    Raises:
        FileNotFoundError: If config file doesn't exist
        InvalidConfig: If the file is empty or a line is malformed
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    content = config_path.read_text().strip()
    if not content:
        raise InvalidConfig("Config file is empty", module="cli")

    config = RunConfig()
    for number, line in enumerate(content.split("\n"), start=1):
        line = line.split("#")[0].strip()  # Remove comments
        if not line:
            continue
        match = _LINE.match(line)
        if not match:
            raise InvalidConfig(
                f"{config_path}:{number}: expected 'key = value', got {line!r}",
                module="cli",
            )
        _apply(config, _normalize_key(match.group(1)), _unquote(match.group(2)))

    return config


def validate_config(config: RunConfig, allowed_keys: Iterable[str]) -> bool:
    """
    Validate configuration settings.

    Args:
        config: Configuration object to validate
        allowed_keys: Subcommand keys accepted in ``params``

    Returns:
        True if configuration is valid

    Raises:
        InvalidConfig: If configuration is invalid with details
    """
    allowed = {_normalize_key(key) for key in allowed_keys}
    unknown = sorted(set(config.params) - allowed)
    if unknown:
        raise InvalidConfig(f"Unknown config keys: {', '.join(unknown)}", module="cli")

    if config.seed < 0:
        raise InvalidConfig(f"seed must be non-negative: {config.seed}", module="cli")

    if config.threads is not None and config.threads < 1:
        raise InvalidConfig(f"threads must be positive: {config.threads}", module="cli")

    if config.log_level.upper() not in LOG_LEVELS:
        raise InvalidConfig(f"Unknown log level: {config.log_level}", module="cli")

    return True


def merge_overrides(config: RunConfig, overrides: Mapping[str, object]) -> RunConfig:
    """
    Return a copy of ``config`` with non-None ``overrides`` applied on top.

    Command-line values win over file values.
    """
    merged = replace(config, params=dict(config.params), inputs=dict(config.inputs))
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        _apply(merged, _normalize_key(key), str(value))
    return merged


def format_config(config: RunConfig) -> str:
    """
    Render ``config`` as sorted ``key = value`` lines.

    Input paths are echoed as comments so the file can be fed back as a config.
    """
    values = config.as_dict()
    lines = [f"# input {key} = {config.inputs[key]}\n" for key in sorted(config.inputs)]
    lines += [f"{key} = {values[key]}\n" for key in sorted(values)]
    return "".join(lines)


def write_resolved(config: RunConfig, out_dir: Path) -> Path:
    """
    Echo the fully-resolved configuration into ``out_dir``.

    Raises:
        IoError: If the file cannot be written
    """
    path = Path(out_dir) / RESOLVED_CONFIG_NAME
    try:
        path.write_text(format_config(config))
    except OSError as e:
        raise IoError(f"Failed to write resolved config: {path}") from e
    return path
