"""
Utility functions
"""
import logging
import sys
from pathlib import Path
from typing import Optional

from loguru import logger

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>"
)


def setup_logging(log_level: str = "INFO", log_dir: Optional[Path] = None):
    """Setup logging configuration

    Logs go to stderr so report files and stdout stay byte-stable.
    """
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level=log_level)
    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
        logger.add(Path(log_dir) / "run_{time}.log", format=LOG_FORMAT, level="DEBUG")
    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
    logging.captureWarnings(True)


class InterceptHandler(logging.Handler):
    """Intercept standard logging and redirect to loguru"""

    def emit(self, record):
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def format_float(value: float, digits: int = 12) -> str:
    """Format a float reproducibly for summaries"""
    return f"{value:.{digits}g}"
