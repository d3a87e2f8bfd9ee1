"""
Configuration Management Module
Application defaults plus the line-oriented run config reader
"""
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, Union

from loguru import logger
from pydantic import ValidationError
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from models.errors import ConfigError
from models.schemas import RunConfig


class Settings(BaseSettings):
    """Application defaults (environment variables are not consulted)"""

    # Application Info
    APP_NAME: str = "h-Monotone Map Toolkit"
    APP_VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"

    # Quadrature
    DEFAULT_QUAD_ORDER: int = 16
    MAX_QUAD_ORDER: int = 64
    QUAD_TOLERANCE: float = 1e-6
    QUAD_ERROR_MODE: str = "halving"

    # Cost certification
    ELLIPTICITY_MARGIN: float = 1e-3
    ELLIPTICITY_SAMPLES: int = 1024
    HOMOGENEITY_TRIALS: int = 200

    # Monotonicity checks
    MONOTONE_GRAPH_CAP: int = 10_000
    CYCLIC_EVAL_CAP: int = 1_000_000
    WITNESS_CAP: int = 10_000
    RELATIVE_TOLERANCE: float = 1e-9

    # Transport oracle
    ASSIGNMENT_CAP: int = 512
    EXHAUSTIVE_CAP: int = 9
    TIE_BREAK_CAP: int = 16

    # Rectifier
    EPSILON_GRID_CAP: int = 100_000
    EPSILON_GRID_DIVISIONS: int = 8
    SHRINK_TARGET: float = 0.5
    MIN_RADIUS: float = 1e-6

    # Measure tools
    MONTE_CARLO_SAMPLES: int = 10_000

    # Paths
    REPORTS_DIR: Path = Path("./reports")
    LOGS_DIR: Path = Path("./logs")

    # Reproducibility
    DEFAULT_SEED: int = 0

    model_config = SettingsConfigDict(case_sensitive=True, extra="ignore")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings,)


# Global settings instance
settings = Settings()


def _parse_scalar(text: str) -> Any:
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text.strip("\"'")


def _parse_value(text: str) -> Any:
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
        return [_parse_scalar(item.strip()) for item in text.split(",") if item.strip()]
    if "," in text:
        return [_parse_scalar(item.strip()) for item in text.split(",") if item.strip()]
    return _parse_scalar(text)


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, Any]:
    """Parse `key = value` lines with dotted keys into a nested dict

    Args:
        text: Config file contents; `#` starts a comment, `[section]` headers
            prefix the keys that follow them
        source: Name used in error messages

    Returns:
        Nested dictionary ready for schema validation
    """
    tree: Dict[str, Any] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        dotted = f"{section}.{key}" if section else key
        node = tree
        parts = dotted.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"{source}:{lineno}: '{part}' is both a value and a section")
            node = child
        if parts[-1] in node:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{dotted}'")
        node[parts[-1]] = _parse_value(value)
    return tree


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load and validate a run config; CLI overrides win over file values"""
    tree: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        tree = parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
        logger.info(f"Loaded run config from {path}")

    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(tree.get(key), dict):
            tree[key] = {**tree[key], **value}
        elif value is not None:
            tree[key] = value

    tree.setdefault("quad_order", settings.DEFAULT_QUAD_ORDER)
    tree.setdefault("seed", settings.DEFAULT_SEED)
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as exc:
        raise ConfigError(f"Invalid run config: {exc}") from exc
