"""
Logging setup shared by the command-line entry points.
"""
import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "WARNING", log_file: Optional[str] = None) -> None:
    """
    Install a rich handler on stderr and, optionally, a plain file handler.

    Raises:
        ValueError: If level is not a logging level name.
    """
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level '{level}'")
    handlers: list = [RichHandler(console=Console(stderr=True), show_path=False,
                                  rich_tracebacks=True)]
    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handlers.append(file_handler)
    logging.basicConfig(level=numeric, format="%(message)s", datefmt="[%X]",
                        handlers=handlers, force=True)
