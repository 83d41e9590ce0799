"""Structured logging for the deobfuscation toolkit."""
import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

# stdout carries JSON results, so log output always goes to stderr
console = Console(stderr=True)


def setup_logger(name: Optional[str] = None, level: int = logging.INFO) -> logging.Logger:
    """Set up a logger with rich formatting.

    Args:
        name: Logger name (None configures the root logger so every
            ``logging.getLogger(__name__)`` in the packages inherits it)
        level: Logging level

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Remove existing handlers
    logger.handlers = []

    handler = RichHandler(
        console=console,
        show_time=True,
        show_path=False,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)

    return logger
