"""Movable-antenna covert dual-functional radar-communication design toolkit."""

__version__ = "0.1.0"

from .config import ConfigError, SystemConfig, default_config, emit_config, load_config

__all__ = [
    "ConfigError",
    "SystemConfig",
    "default_config",
    "emit_config",
    "load_config",
    "__version__",
]
