""" Unit tests for the command-line interface (CLI) module """
# pylint: disable=redefined-outer-name
# pylint: disable=protected-access
from __future__ import annotations

import argparse
import dataclasses
import pathlib
import tempfile
from typing import Any, Generator
from unittest import mock

import pytest
import pytest_mock

from imbalance_forecast import cli, config, exceptions, parser


@dataclasses.dataclass
class MockParser:
    """Stands in for the argument parser; `parse_args` returns the fixed arguments."""

    command: str = "report"
    config: pathlib.Path | None = None
    seed: int | None = None
    jobs: int | None = None
    models: list[str] | None = None
    quarter_hours: list[int] | None = None
    json: bool = False
    verbose: str = "info"

    def parse_args(self, *args: Any) -> MockParser:
        """Return self. Required for mocking the parser.parse_args() method."""
        return self


@pytest.fixture
def workspace() -> Generator[pathlib.Path, None, None]:
    """A temporary directory with a configuration pointing into it."""
    with tempfile.TemporaryDirectory() as temp_dir:
        root = pathlib.Path(temp_dir)
        (root / "run.toml").write_text(
            "[paths]\n"
            f'panel = "{(root / "panel.csv").as_posix()}"\n'
            f'transactions = "{(root / "transactions.csv").as_posix()}"\n'
            f'store = "{(root / "forecasts.csv").as_posix()}"\n'
            f'reports = "{(root / "reports").as_posix()}"\n',
            encoding="utf-8",
        )
        yield root


@pytest.fixture
def mock_args(workspace: pathlib.Path) -> mock.MagicMock:
    """Returns a mock argparse.Namespace object with default values for testing purposes."""
    args = mock.MagicMock(spec=argparse.Namespace)
    args.command = "synth"
    args.config = workspace / "run.toml"
    args.seed = None
    args.jobs = None
    args.models = None
    args.quarter_hours = None
    args.days = None
    args.force = False
    args.json = False
    args.verbose = "info"
    return args


def test_raise_invalid_input_existing_synthetic_data(
    mock_args: mock.MagicMock, workspace: pathlib.Path
) -> None:
    """Test _raise_invalid_input when synthetic data would be overwritten."""
    (workspace / "panel.csv").touch()
    run_config = cli._run_config(mock_args)

    with pytest.raises(exceptions.InputError) as exc_info:
        cli._raise_invalid_input(mock_args, run_config)

    assert "already exist" in str(exc_info.value)


def test_raise_invalid_input_force(mock_args: mock.MagicMock, workspace: pathlib.Path) -> None:
    """Test that --force allows overwriting synthetic data."""
    (workspace / "panel.csv").touch()
    mock_args.force = True

    cli._raise_invalid_input(mock_args, cli._run_config(mock_args))


@pytest.mark.parametrize(
    ("command", "absent"),
    [
        ("backtest", "panel.csv"),
        ("tune", "transactions.csv"),
        ("evaluate", "forecasts.csv"),
        ("report", "summary.md"),
    ],
)
def test_raise_invalid_input_missing_files(
    mock_args: mock.MagicMock, command: str, absent: str
) -> None:
    """Test _raise_invalid_input when an input file of the command is missing."""
    mock_args.command = command

    with pytest.raises(exceptions.MissingArtifactError) as exc_info:
        cli._raise_invalid_input(mock_args, cli._run_config(mock_args))

    assert absent in str(exc_info.value)


def test_run_config_applies_flags(mock_args: mock.MagicMock, workspace: pathlib.Path) -> None:
    """Test that command-line flags override the configuration file."""
    mock_args.seed = 11
    mock_args.models = ["naive"]
    mock_args.quarter_hours = [41]
    mock_args.days = 50

    run_config = cli._run_config(mock_args)

    assert isinstance(run_config, config.RunConfig)
    assert run_config.paths.panel == workspace / "panel.csv"
    assert run_config.rolling.seed == 11
    assert run_config.rolling.models == ("naive",)
    assert run_config.rolling.quarter_hours == (41,)
    assert run_config.synth.n_days == 50


def test_main_invalid_configuration(
    mocker: pytest_mock.MockerFixture, workspace: pathlib.Path
) -> None:
    """Test that an unreadable configuration exits with code 2."""
    (workspace / "bad.toml").write_text("seed = = 1", encoding="utf-8")
    mock_parser = MockParser(config=workspace / "bad.toml")
    mocker.patch("imbalance_forecast.parser.get_parser", return_value=mock_parser)

    assert cli.main() == cli.EXIT_INVALID


def test_main_missing_artifact(
    mocker: pytest_mock.MockerFixture, workspace: pathlib.Path
) -> None:
    """Test that a missing input file exits with code 1."""
    mock_parser = MockParser(command="report", config=workspace / "run.toml")
    mocker.patch("imbalance_forecast.parser.get_parser", return_value=mock_parser)

    assert cli.main() == cli.EXIT_FAILURE


def test_main_report(
    mocker: pytest_mock.MockerFixture,
    workspace: pathlib.Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """Test that the report command prints the saved summary."""
    (workspace / "reports").mkdir()
    (workspace / "reports" / "summary.md").write_text("# Forecast evaluation\n", encoding="utf-8")
    mock_parser = MockParser(command="report", config=workspace / "run.toml")
    mocker.patch("imbalance_forecast.parser.get_parser", return_value=mock_parser)

    assert cli.main() == cli.EXIT_SUCCESS
    assert "# Forecast evaluation" in capsys.readouterr().out


def test_command_table_matches_parser() -> None:
    """Test that every parser command has a handler."""
    assert set(cli.COMMANDS) == set(parser.COMMANDS)
