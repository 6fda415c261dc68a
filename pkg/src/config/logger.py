"""Module devoted to logger setup for the command line and the run catalog.

Console output goes to stderr because stdout carries the JSON summaries
printed by every subcommand. File output rotates under CROM_LOG_DIR.
"""

import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

LOG_FORMAT = "%(asctime)s | %(module)s:%(lineno)d | %(funcName)s | %(levelname)-8s | %(message)s"
DEFAULT_ROTATION_BYTES = 5 * 1024 * 1024


class ConsoleFormatter(logging.Formatter):
    """Formatter that tints records by level on an interactive terminal."""

    TINTS = {
        "DEBUG": "\x1b[38;5;245m",
        "INFO": "\x1b[38;5;39m",
        "WARNING": "\x1b[38;5;214m",
        "ERROR": "\x1b[38;5;196m",
        "CRITICAL": "\x1b[1;31m",
    }
    RESET = "\x1b[0m"

    def __init__(self, use_color: bool = True) -> None:
        super().__init__(LOG_FORMAT)
        self.use_color = use_color

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        tint = self.TINTS.get(record.levelname) if self.use_color else None
        return f"{tint}{text}{self.RESET}" if tint else text


def resolve_level(level: int | str | None) -> int:
    """Turn a level name, number or None into a logging level.

    None falls back to the CROM_LOG_LEVEL environment variable (default INFO).
    """
    if level is None:
        level = os.getenv("CROM_LOG_LEVEL", "INFO")
    if isinstance(level, int):
        return level
    resolved = logging.getLevelName(level.strip().upper())
    return resolved if isinstance(resolved, int) else logging.INFO


def _console_handler() -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(ConsoleFormatter(use_color=sys.stderr.isatty()))
    return handler


def _file_handler(path: Path, rotation_size: int, backup_count: int) -> logging.Handler:
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = RotatingFileHandler(path, maxBytes=rotation_size, backupCount=backup_count)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def setup_logger(
    name: str,
    log_file: str | None = None,
    level: int | str | None = None,
    rotation_size: int = DEFAULT_ROTATION_BYTES,
    backup_count: int = 5,
    log_dir: str | Path | None = None,
) -> logging.Logger:
    """Set up and configure a logger instance.

    Handlers are attached once per logger name; later calls only update
    the level.

    Args:
        name: the logger's name, "src" for the whole package
        log_file: optional file name, created under log_dir
        level: logging level or level name (defaults to CROM_LOG_LEVEL, else INFO)
        rotation_size: size in bytes before log rotation
        backup_count: number of rotated files to keep
        log_dir: directory for log files (defaults to CROM_LOG_DIR, else ./logs)

    Returns:
        configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(resolve_level(level))
    if logger.handlers:
        return logger

    logger.addHandler(_console_handler())
    if log_file:
        directory = Path(log_dir or os.getenv("CROM_LOG_DIR", "logs"))
        logger.addHandler(_file_handler(directory / log_file, rotation_size, backup_count))
    return logger
