"""Tests for the parser module."""
# pylint: disable=protected-access
import argparse
import pathlib
import tempfile

import pytest

from imbalance_forecast import parser


def test_get_parser() -> None:
    """Test the get_parser function to ensure it returns an instance of argparse.ArgumentParser."""
    parser_object = parser.get_parser()
    assert isinstance(parser_object, argparse.ArgumentParser)


@pytest.mark.parametrize("command", parser.COMMANDS)
def test_every_command_parses(command: str) -> None:
    """Test that each subcommand parses with its defaults."""
    args = parser.get_parser().parse_args([command])

    assert args.command == command
    assert args.verbose == "info"
    assert args.seed is None
    assert args.models is None
    assert args.json is False


def test_shared_flags_after_command() -> None:
    """Test that the shared flags are accepted after the subcommand."""
    args = parser.get_parser().parse_args(
        ["backtest", "--seed", "7", "--jobs", "2", "--models", "naive,lasso", "--qh", "1,25"]
    )

    assert args.seed == 7
    assert args.jobs == 2
    assert args.models == ("naive", "lasso")
    assert args.quarter_hours == (1, 25)
    assert args.append is False


def test_synth_days() -> None:
    """Test the synth-only --days flag."""
    args = parser.get_parser().parse_args(["synth", "--days", "120", "--force"])

    assert args.days == 120
    assert args.force is True


def test_missing_command_exits() -> None:
    """Test that omitting the subcommand is an argument error."""
    with pytest.raises(SystemExit) as exc_info:
        parser.get_parser().parse_args([])

    assert exc_info.value.code == 2


def test_path_exists_success() -> None:
    """Test the path_exists function for a successful case."""
    with tempfile.TemporaryDirectory() as temp_dir:
        assert parser._path_exists(temp_dir) == pathlib.Path(temp_dir)


def test_path_exists_failure() -> None:
    """Test the path_exists function for a failure case."""
    with pytest.raises(argparse.ArgumentTypeError):
        parser._path_exists("not_a_path")


def test_is_positive_integer_success() -> None:
    """Test the _is_positive_integer function for a successful case."""
    assert parser._is_positive_integer("1") == 1


@pytest.mark.parametrize("value", ["0.5", "-1", "0"])
def test_is_positive_integer_failure(value: str) -> None:
    """Test the _is_positive_integer function for floats, negatives and zero."""
    with pytest.raises(argparse.ArgumentTypeError):
        parser._is_positive_integer(value)


def test_is_non_negative_integer() -> None:
    """Test that zero is a valid seed but negatives are not."""
    assert parser._is_non_negative_integer("0") == 0
    with pytest.raises(argparse.ArgumentTypeError):
        parser._is_non_negative_integer("-3")


def test_quarter_hours_success() -> None:
    """Test parsing a list of quarter-hours."""
    assert parser._quarter_hours("1, 25,49,73") == (1, 25, 49, 73)


@pytest.mark.parametrize("value", ["0", "97", "1,1", "a", ""])
def test_quarter_hours_failure(value: str) -> None:
    """Test that out-of-range, repeated and malformed quarter-hours are rejected."""
    with pytest.raises(argparse.ArgumentTypeError):
        parser._quarter_hours(value)


def test_model_ids_success() -> None:
    """Test parsing model ids keeps their order."""
    assert parser._model_ids("gamlss.t,naive") == ("gamlss.t", "naive")


def test_model_ids_failure() -> None:
    """Test that unknown model ids are rejected with the valid choices."""
    with pytest.raises(argparse.ArgumentTypeError) as exc_info:
        parser._model_ids("naive,arima")

    assert "arima" in str(exc_info.value)
