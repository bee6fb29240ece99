""" Logging module for imbalance_forecast.

This module provides a logger for the imbalance_forecast package.
The logger is imported into other modules using the following snippet:
```python
import logging
from imbalance_forecast import logs

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)
```
Records carry the process id of the emitting backtest worker.
"""
import logging
import pathlib

LOGGER_NAME = pathlib.Path(__file__).parent.name
LOG_FORMAT = "%(asctime)s - %(name)s - %(process)d - %(levelname)s - %(message)s"

logger = logging.getLogger(LOGGER_NAME)

if not logger.handlers:
    cf = logging.StreamHandler()
    cf.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(cf)


def set_verbosity(level: str) -> None:
    """Sets the package log level from a name such as "info" or "debug"."""
    logger.setLevel(logging.getLevelName(level.upper()))
