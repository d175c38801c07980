"""
Logging setup for opnorm-lab.
"""

import logging
import sys
from typing import Optional

from opnorm_lab.utils.config import config

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%H:%M:%S"


def setup_logging(level: Optional[str] = None) -> None:
    """
    Install a single stderr handler on the package logger.

    Args:
        level (str, optional): Level name; defaults to Config.LOG_LEVEL,
            or DEBUG when Config.DEBUG is set.
    """
    if level is None:
        level = "DEBUG" if config.DEBUG else config.LOG_LEVEL

    root = logging.getLogger("opnorm_lab")
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())
    root.propagate = False
