"""
Activity logging for the relational inference toolkit.
Timestamped, leveled lines on stderr; stdout stays reserved for results.
"""

import logging
import sys

SUCCESS = 25
logging.addLevelName(SUCCESS, "SUCCESS")

_ROOT_NAME = "gdp"
_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "SUCCESS": SUCCESS,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


class ActivityFormatter(logging.Formatter):
    """Formats records as ``[HH:MM:SS] LEVEL message``."""

    def __init__(self):
        super().__init__("[%(asctime)s] %(levelname)-7s %(message)s", datefmt="%H:%M:%S")


def get_logger(name=None):
    """Return the toolkit logger or one of its children."""
    if not name:
        return logging.getLogger(_ROOT_NAME)
    return logging.getLogger(f"{_ROOT_NAME}.{name}")


def setup_logging(verbosity=0, stream=None):
    """Install the activity handler once; repeated calls only adjust the level."""
    logger = get_logger()
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    elif verbosity < 0:
        level = logging.ERROR
    else:
        level = SUCCESS
    logger.setLevel(level)

    if not any(getattr(h, "_gdp_activity", False) for h in logger.handlers):
        handler = logging.StreamHandler(stream or sys.stderr)
        handler.setFormatter(ActivityFormatter())
        handler._gdp_activity = True
        logger.addHandler(handler)
        logger.propagate = False
    return logger


def log_activity(message: str, level="INFO", name=None):
    """Log a message under a level name: DEBUG, INFO, SUCCESS, WARNING or ERROR."""
    get_logger(name).log(_LEVELS.get(level.upper(), logging.INFO), message)
