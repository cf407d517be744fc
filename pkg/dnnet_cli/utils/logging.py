"""
Logging for dnnet-cli: one package logger, rendered by rich on stderr
"""

import logging
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

ROOT_LOGGER = "dnnet_cli"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def resolve_level(verbose: bool = False, quiet: bool = False) -> int:
    """DEBUG with --verbose, WARNING with --quiet, INFO otherwise; verbose wins"""
    if verbose:
        return logging.DEBUG
    if quiet:
        return logging.WARNING
    return logging.INFO


def setup_logging(
    verbose: bool = False,
    quiet: bool = False,
    log_file: Optional[str] = None,
) -> logging.Logger:
    """
    Configure the package logger. Safe to call repeatedly: existing handlers are
    replaced, so every CLI invocation starts from a clean slate.
    """
    level = resolve_level(verbose, quiet)
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(level)
    logger.handlers.clear()
    logger.propagate = False

    # stdout carries tables and CSV paths
    handler = RichHandler(
        console=Console(stderr=True),
        level=level,
        show_time=verbose,
        show_path=verbose,
        markup=False,
        rich_tracebacks=verbose,
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)

    if log_file:
        log_path = Path(log_file).expanduser()
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path, encoding="utf-8")
        # the file always gets everything
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        logger.addHandler(file_handler)
        logger.setLevel(logging.DEBUG)

    return logger


def get_logger(name: str = ROOT_LOGGER) -> logging.Logger:
    """Package loggers are children of ROOT_LOGGER, e.g. dnnet_cli.training.trainer"""
    return logging.getLogger(name)
