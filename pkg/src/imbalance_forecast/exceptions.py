""" Custom exceptions for the imbalance_forecast package. """
import logging

from imbalance_forecast import logs

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)


class BaseLoggingError(Exception):
    """Base exception for logging errors."""

    def __init__(self, message: str):
        self.message = message
        logger.error(self.message)
        super().__init__(self.message)


class InputError(BaseLoggingError):
    """Exception raised when an input value is invalid or incorrect."""


class SchemaError(InputError):
    """Exception raised when a file lacks mandatory columns or has an unknown schema."""


class IntegrityError(InputError):
    """Exception raised when keys are duplicated or a time grid is incomplete."""


class UnfillableError(InputError):
    """Exception raised when a column cannot be filled by the cleaning policy."""


class DomainError(InputError):
    """Exception raised when a value lies outside the domain of a distribution."""


class ConfigError(BaseLoggingError):
    """Exception raised when a configuration is invalid."""


class InsufficientHistoryError(BaseLoggingError):
    """Exception raised when the data does not reach far enough into the past."""


class FitError(BaseLoggingError):
    """Exception raised when a model fit diverges."""


class TuningError(BaseLoggingError):
    """Exception raised when no hyperparameter trial completed."""


class MissingArtifactError(BaseLoggingError):
    """Exception raised when a required artifact file does not exist."""


class InternalError(BaseLoggingError):
    """Exception raised when an internal error occurs. These should never happen."""
