"""
Configuration management utilities.

This module handles application configuration and environment variables.
"""

import logging
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name, "")
    if not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r, using %d", name, raw, default)
        return default


class Config:
    """Application configuration class."""

    # Application settings
    APP_NAME: str = os.getenv("APP_NAME", "opnorm-lab")
    APP_VERSION: str = os.getenv("APP_VERSION", "0.1.0")
    DEBUG: bool = os.getenv("DEBUG", "False").lower() == "true"
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()

    # Compute settings
    THREADS: int = _int_env("OPNORM_LAB_THREADS", os.cpu_count() or 1)
    DEFAULT_REPS: int = _int_env("OPNORM_LAB_DEFAULT_REPS", 500)
    K_MAX: int = _int_env("OPNORM_LAB_K_MAX", 8)

    # Output settings
    OUTPUT_DIR: str = os.getenv("OPNORM_LAB_OUTPUT_DIR", ".")

    @classmethod
    def worker_count(cls, requested: int | None = None) -> int:
        """
        Resolve the number of worker threads.

        Args:
            requested (int, optional): Explicit request, e.g. from a CLI flag.

        Returns:
            int: A positive worker count capped by OPNORM_LAB_THREADS.
        """
        cap = max(1, cls.THREADS)
        if requested is None:
            return cap
        return max(1, min(requested, cap))

    @classmethod
    def validate_config(cls) -> bool:
        """
        Validate that all configuration values are usable.

        Returns:
            bool: True if configuration is valid, False otherwise.
        """
        problems = []

        if cls.THREADS < 1:
            problems.append("OPNORM_LAB_THREADS")
        if cls.DEFAULT_REPS < 1:
            problems.append("OPNORM_LAB_DEFAULT_REPS")
        if cls.K_MAX < 1:
            problems.append("OPNORM_LAB_K_MAX")
        if not isinstance(logging.getLevelName(cls.LOG_LEVEL), int):
            problems.append("LOG_LEVEL")

        if problems:
            logger.error("Invalid environment variables: %s", ", ".join(problems))
            return False

        return True


# Global configuration instance
config = Config()
