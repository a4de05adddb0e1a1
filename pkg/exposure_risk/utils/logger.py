"""
Logging wrapper used by the orchestrator and the command line.
"""

import json
import logging
import sys
from typing import Any, Dict, Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class Logger:
    """
    Thin wrapper around the standard logging module.

    Messages may carry a dictionary of structured context which is appended
    to the message as sorted-key JSON.
    """

    def __init__(self, log_level: str = "INFO", log_file: Optional[str] = None,
                 name: str = "exposure_risk"):
        """
        Initialize the logger.

        Args:
            log_level: Logging level name (DEBUG, INFO, WARNING, ERROR)
            log_file: Optional path of a log file; stderr is always used
            name: Logger name
        """
        self._logger = logging.getLogger(name)
        self._logger.setLevel(getattr(logging, str(log_level).upper(), logging.INFO))

        # Handlers are attached once per logger name
        if not self._logger.handlers:
            formatter = logging.Formatter(LOG_FORMAT)

            stream_handler = logging.StreamHandler(sys.stderr)
            stream_handler.setFormatter(formatter)
            self._logger.addHandler(stream_handler)

            if log_file:
                file_handler = logging.FileHandler(log_file)
                file_handler.setFormatter(formatter)
                self._logger.addHandler(file_handler)

    @staticmethod
    def _render(message: str, data: Optional[Dict[str, Any]]) -> str:
        if not data:
            return message
        return f"{message} {json.dumps(data, sort_keys=True, default=str)}"

    def debug(self, message: str, data: Optional[Dict[str, Any]] = None) -> None:
        self._logger.debug(self._render(message, data))

    def info(self, message: str, data: Optional[Dict[str, Any]] = None) -> None:
        self._logger.info(self._render(message, data))

    def warning(self, message: str, data: Optional[Dict[str, Any]] = None) -> None:
        self._logger.warning(self._render(message, data))

    def error(self, message: str, data: Optional[Dict[str, Any]] = None,
              exc_info: bool = False) -> None:
        self._logger.error(self._render(message, data), exc_info=exc_info)
