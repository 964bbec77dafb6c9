import logging
import time
from argparse import Namespace
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Iterator, Union

import coloredlogs
from rich.emoji import Emoji
from rich.text import Text

from lcpformer import __version__

# Displayed logs format
LOG_FORMAT = "%(asctime)s (%(levelname).1s) %(name)s %(message)s"
LOG_FORMAT_DEBUG = "%(asctime)s.%(msecs)03d (%(levelname).1s) %(name)s %(message)s - %(filename)s:%(funcName)s:%(lineno)d"

# Log file rotation
LOG_FILE_SIZE = 1024 * 1024
LOG_FILE_COUNT = 5


class LcpLogWrapper:
    """
    Emoji-prefixed logging on one named logger; commands and training runs use children of the root instance.
    """

    def __init__(self, logger: logging.Logger):
        self.logger = logger

    def __log(self, level: int, emoji: Union[str, Emoji, Text], line: str):
        self.logger.log(level, f"{Emoji(emoji) if isinstance(emoji, str) else emoji} - {line}", stacklevel=3)

    def log(self, level: int, emoji: str, line: str):
        self.__log(level, emoji, line)

    def info(self, emoji: str, line: str):
        self.__log(logging.INFO, emoji, line)

    def debug(self, line: str):
        self.__log(logging.DEBUG, "bug", line)

    def error(self, line: str):
        self.__log(logging.ERROR, "skull", line)

    def warning(self, line: str):
        self.__log(logging.WARNING, "exclamation", line)

    def child(self, name: str) -> "LcpLogWrapper":
        return LcpLogWrapper(logging.getLogger(f"{self.logger.name}.[{name}]"))

    @contextmanager
    def timed(self, emoji: str, label: str) -> Iterator[None]:
        # Info line with the elapsed wall time once the wrapped section succeeds
        started = time.perf_counter()
        yield
        self.info(emoji, f"{label} ({time.perf_counter() - started:.2f}s)")


# Root logger (silent until logging_setup installs handlers)
LcpLogger = LcpLogWrapper(logging.getLogger("lcpformer"))
LcpLogger.logger.addHandler(logging.NullHandler())


def _file_handler(path: Path) -> logging.Handler:
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = RotatingFileHandler(path, maxBytes=LOG_FILE_SIZE, backupCount=LOG_FILE_COUNT, encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT_DEBUG, datefmt=coloredlogs.DEFAULT_DATE_FORMAT))
    return handler


def logging_setup(args: Namespace):
    # Setup logging (if not disabled)
    if not args.no_logs:
        if args.log_file:
            # Everything goes to the file, console follows the requested level
            logging.basicConfig(force=True, level=logging.DEBUG)
            logging.getLogger().addHandler(_file_handler(Path(args.log_file)))
        coloredlogs.install(level=args.log_level, fmt=LOG_FORMAT if args.log_level > logging.DEBUG else LOG_FORMAT_DEBUG)

        # Numerical warnings (overflow, invalid values) go to the logs
        logging.captureWarnings(True)

    # First log lines
    LcpLogger.debug(f"----- lcpformer version {__version__} -----")
    LcpLogger.debug(f"called with args: {args}")
