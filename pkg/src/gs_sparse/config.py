"""Configuration loading and merging."""

import os
from pathlib import Path
from typing import Any, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from .enums import LogFormat
from .schemas import GsConfig

# Configuration priority (highest to lowest):
# 1. CLI arguments (--params, --log-level, --log-format)
# 2. Environment variables (GS_ prefix)
# 3. .env file
# 4. pyproject.toml [tool.gs-sparse]
# 5. Default values

TCM_KEYS = ("banks", "gather_base_cycles", "conflict_penalty_cycles")
COST_KEYS = (
    "weight_load_cycles",
    "index_load_cycles",
    "mac_cycles",
    "outer_overhead_cycles",
    "reduction_cycles",
    "dense_load_cycles",
    "dense_mac_cycles",
)
TOP_KEYS = ("log_level", "log_format")


def loadPyprojectConfig(projectDir: Path) -> dict[str, Any]:
    """Load configuration from pyproject.toml [tool.gs-sparse] section."""
    pyprojectPath = projectDir / "pyproject.toml"

    if not pyprojectPath.exists():
        return {}

    try:
        import tomllib
    except ImportError:
        import tomli as tomllib  # type: ignore

    try:
        with open(pyprojectPath, "rb") as f:
            data = tomllib.load(f)
    except Exception:
        return {}

    section = data.get("tool", {}).get("gs-sparse", {})
    flat: dict[str, Any] = {}
    for key, value in section.items():
        if key in ("tcm", "cost") and isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    return flat


def loadDotenvConfig(projectDir: Path) -> dict[str, Any]:
    """Load configuration from .env file (GS_ prefixed keys)."""
    envPath = projectDir / ".env"

    if not envPath.exists():
        return {}

    values = dotenv_values(envPath)
    return _parseEnvValues(
        {k[3:]: v for k, v in values.items() if k.startswith("GS_") and v is not None}
    )


def loadEnvConfig() -> dict[str, Any]:
    """Load configuration from environment variables with GS_ prefix."""
    envValues = {
        k[3:]: v for k, v in os.environ.items() if k.startswith("GS_") and v is not None
    }
    return _parseEnvValues(envValues)


def _parseEnvValues(values: dict[str, Any]) -> dict[str, Any]:
    """Parse environment variable values to appropriate types."""
    result: dict[str, Any] = {}
    keyMapping = {key.upper(): key for key in TCM_KEYS + COST_KEYS + TOP_KEYS}

    for envKey, value in values.items():
        configKey = keyMapping.get(envKey.upper())
        if configKey is None:
            continue

        if configKey == "log_format":
            try:
                result[configKey] = LogFormat(str(value).lower())
            except ValueError:
                pass
        elif configKey == "log_level":
            result[configKey] = value
        else:
            try:
                result[configKey] = int(value)
            except (ValueError, TypeError):
                pass

    return result


def parseParams(pairs: Optional[list[str]]) -> dict[str, Any]:
    """
    Parse `key=value` cost overrides.

    Raises:
        ValueError: malformed pair, unknown key or non-integer value
    """
    result: dict[str, Any] = {}
    for pair in pairs or []:
        for item in pair.split(","):
            if not item.strip():
                continue
            key, sep, value = item.partition("=")
            key = key.strip().replace("-", "_")
            if not sep:
                raise ValueError(f"Malformed parameter {item!r}; expected key=value")
            if key not in TCM_KEYS + COST_KEYS:
                raise ValueError(
                    f"Unknown parameter {key!r}; expected one of {', '.join(TCM_KEYS + COST_KEYS)}"
                )
            try:
                result[key] = int(value)
            except ValueError:
                raise ValueError(f"Parameter {key} must be an integer, got {value!r}") from None
    return result


def mergeConfigs(*configs: dict[str, Any]) -> dict[str, Any]:
    """Merge multiple configurations, later ones take precedence."""
    result: dict[str, Any] = {}

    for config in configs:
        for key, value in config.items():
            if value is not None:
                result[key] = value

    return result


def _nest(flat: dict[str, Any]) -> dict[str, Any]:
    """Route flat keys into the tcm and cost sections."""
    nested: dict[str, Any] = {"tcm": {}, "cost": {}}
    for key, value in flat.items():
        if key in TCM_KEYS:
            nested["tcm"][key] = value
        elif key in COST_KEYS:
            nested["cost"][key] = value
        else:
            nested[key] = value
    return nested


def loadConfig(
    projectDir: Optional[Path] = None,
    cliArgs: Optional[dict[str, Any]] = None,
) -> GsConfig:
    """
    Load and merge configuration from all sources.

    Args:
        projectDir: Directory holding pyproject.toml and .env
        cliArgs: Flat CLI overrides (None values are ignored)

    Returns:
        Merged GsConfig

    Raises:
        ValueError: If configuration is invalid
    """
    if projectDir is None:
        try:
            projectDir = Path.cwd()
        except FileNotFoundError:
            projectDir = Path.home()

    cliConfig = {k: v for k, v in (cliArgs or {}).items() if v is not None}
    mergedConfig = mergeConfigs(
        loadPyprojectConfig(projectDir),
        loadDotenvConfig(projectDir),
        loadEnvConfig(),
        cliConfig,
    )

    try:
        return GsConfig(**_nest(mergedConfig))
    except ValidationError as e:
        raise ValueError(f"Invalid configuration: {e}") from e


def getConfigSummary(config: GsConfig) -> dict[str, Any]:
    """Flat view of the effective configuration for display."""
    summary: dict[str, Any] = {}
    summary.update(config.tcm.model_dump(by_alias=True))
    summary.update(config.cost.model_dump(by_alias=True))
    summary["log_level"] = config.logLevel
    summary["log_format"] = config.logFormat.value
    return summary
