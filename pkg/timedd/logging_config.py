"""Package logger."""
import logging

from timedd.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"

logger = logging.getLogger("timedd")

if not logger.handlers:
    _handler = logging.StreamHandler()
    _handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(_handler)

logger.setLevel(settings.LOG_LEVEL.upper())
logger.propagate = False


def set_level(level: str) -> None:
    """Change the package log level at runtime (used by the CLI)."""
    logger.setLevel(level.upper())
