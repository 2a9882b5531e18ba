"""Service layer: configuration, persistence, pipeline, HTTP API, CLI."""

from .config import ApiConfig, ConfigError, PlatformConfig, load_config, resolve_config_path
from .service import PlatformService

__all__ = [
    "ApiConfig",
    "ConfigError",
    "PlatformConfig",
    "PlatformService",
    "load_config",
    "resolve_config_path",
]
