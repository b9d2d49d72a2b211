"""
Logging setup: rich terminal output plus an optional JSON log file.
"""

import logging
from pathlib import Path
from typing import Optional, Union

from pythonjsonlogger import jsonlogger
from rich.console import Console
from rich.logging import RichHandler

_FILE_HANDLER_NAME = "rdfc-json-file"


def setup_logging(level: Union[int, str] = logging.INFO, log_file: Optional[Union[str, Path]] = None) -> None:
    """
    Configure the root logger.

    Args:
        level: Root log level
        log_file: Optional path of a JSON-lines log file
    """
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True, show_path=False)],
    )
    logging.getLogger().setLevel(level)
    if log_file is not None:
        add_json_file_handler(log_file)


def add_json_file_handler(log_file: Union[str, Path]) -> logging.Handler:
    """Attach (or replace) the JSON file handler of the root logger."""
    remove_json_file_handler()
    log_file = Path(log_file)
    log_file.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_file, encoding="utf-8")
    handler.set_name(_FILE_HANDLER_NAME)
    handler.setFormatter(jsonlogger.JsonFormatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


def remove_json_file_handler() -> None:
    """Detach and close the JSON file handler, if any."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if handler.get_name() == _FILE_HANDLER_NAME:
            root.removeHandler(handler)
            handler.close()
