"""Environment configuration (.env) and the one-time logging setup."""

import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import find_dotenv, load_dotenv

DEFAULT_CACHE_DIR = ".pil_cache"
DEFAULT_PATH_BUDGET = 2**28
DEFAULT_WORKERS = 1

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

log_level_map = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}


@dataclass(frozen=True)
class Settings:
    log_level: int
    cache_dir: str
    path_budget: int
    workers: int


def load_environment() -> Optional[str]:
    """Loads the nearest .env file into os.environ.

    Returns:
        Optional[str]: Path of the loaded file, or None if no file was found.
    """
    dotenv_path = find_dotenv(usecwd=True)
    if dotenv_path:
        load_dotenv(dotenv_path=dotenv_path)
        return dotenv_path
    return None


def _int_from_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logging.getLogger(__name__).warning(
            f"Ignoring non-integer {name}={raw!r}; using default {default}"
        )
        return default
    return value if value > 0 else default


def parse_log_level(name: Optional[str]) -> int:
    """Maps a level name to a logging constant, INFO for unknown names."""
    if not name:
        return logging.INFO
    return log_level_map.get(name.strip().upper(), logging.INFO)


def get_settings() -> Settings:
    """Reads the package settings from the environment (after load_environment)."""
    return Settings(
        log_level=parse_log_level(os.getenv("LOG_LEVEL", "INFO")),
        cache_dir=os.getenv("PIL_CACHE_DIR") or DEFAULT_CACHE_DIR,
        path_budget=_int_from_env("PIL_PATH_BUDGET", DEFAULT_PATH_BUDGET),
        workers=_int_from_env("PIL_WORKERS", DEFAULT_WORKERS),
    )


def configure_logging(level: int) -> None:
    """Configures the root logger. This should be the only basicConfig call."""
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger(__name__).info(
        f"Logging configured with level: {logging.getLevelName(level)}"
    )
