""" Unit tests for the imbalance_forecast.exceptions module. """
import pytest
import pytest_mock

from imbalance_forecast import exceptions


@pytest.mark.parametrize(
    "exception_type",
    [
        exceptions.BaseLoggingError,
        exceptions.InputError,
        exceptions.SchemaError,
        exceptions.IntegrityError,
        exceptions.UnfillableError,
        exceptions.DomainError,
        exceptions.ConfigError,
        exceptions.InsufficientHistoryError,
        exceptions.FitError,
        exceptions.TuningError,
        exceptions.MissingArtifactError,
        exceptions.InternalError,
    ],
)
def test_logging_error(
    mocker: pytest_mock.MockFixture,
    exception_type: type[exceptions.BaseLoggingError],
) -> None:
    """
    Test that a BaseLoggingError is raised with the correct message and that the error is logged.
    """
    spy_error_logger = mocker.spy(exceptions.logger, "error")

    with pytest.raises(exception_type) as exc_info:
        raise exception_type("Test message")

    spy_error_logger.assert_called_once_with("Test message")
    assert exc_info.value.message == "Test message"


@pytest.mark.parametrize(
    "exception_type",
    [
        exceptions.SchemaError,
        exceptions.IntegrityError,
        exceptions.UnfillableError,
        exceptions.DomainError,
    ],
)
def test_input_error_family(exception_type: type[exceptions.BaseLoggingError]) -> None:
    """Test that data validation errors can be caught as input errors."""
    assert issubclass(exception_type, exceptions.InputError)


def test_config_error_is_not_input_error() -> None:
    """Test that configuration errors stay separate for the exit-code mapping."""
    assert not issubclass(exceptions.ConfigError, exceptions.InputError)
