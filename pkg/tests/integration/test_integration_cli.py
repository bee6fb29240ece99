""" CLI Integration tests. """
# pylint: disable=redefined-outer-name
from __future__ import annotations

import dataclasses
import json
import pathlib
import tempfile
from typing import Any, Generator

import pandas as pd
import pytest
import pytest_mock

from imbalance_forecast import backtest, cli, tuning


@dataclasses.dataclass
class MockParser:
    """A mock parser class used for testing command line interface (CLI) functionality.

    This class is used to simulate the behavior of the `argparse.ArgumentParser` class
    in order to test the CLI functionality of the `imbalance_forecast` package.
    """

    command: str = "synth"
    config: pathlib.Path | None = None
    seed: int | None = None
    jobs: int | None = None
    models: list[str] | None = None
    quarter_hours: list[int] | None = None
    days: int | None = None
    force: bool = False
    append: bool = False
    json: bool = False
    verbose: str = "info"

    def parse_args(self, *args: Any) -> MockParser:
        """Return self. Required for mocking the parser.parse_args() method."""
        return self


@pytest.fixture
def workspace() -> Generator[pathlib.Path, None, None]:
    """A temporary directory with a small run configuration."""
    with tempfile.TemporaryDirectory() as temp_dir:
        root = pathlib.Path(temp_dir)
        (root / "run.toml").write_text(
            f"""
seed = 3
models = ["naive", "gamlss.t"]

[paths]
panel = "{(root / "data" / "panel.csv").as_posix()}"
transactions = "{(root / "data" / "transactions.csv").as_posix()}"
features = "{(root / "output" / "features.h5").as_posix()}"
store = "{(root / "output" / "forecasts.csv").as_posix()}"
tuned = "{(root / "output" / "tuned.json").as_posix()}"
records = "{(root / "output" / "trials").as_posix()}"
reports = "{(root / "output" / "reports").as_posix()}"

[rolling]
in_sample_days = 35
out_of_sample_days = 5
train_days = 28
val_days = 7
quarter_hours = [41, 42]
n_bootstrap = 199
max_epochs = 5
patience = 2

[synth]
n_days = 40
txn_rate = 2.0

[tuning]
gamlss_trials = 2
""",
            encoding="utf-8",
        )
        yield root


def _run(mocker: pytest_mock.MockerFixture, root: pathlib.Path, command: str, **flags: Any) -> int:
    mock_parser = MockParser(command=command, config=root / "run.toml", **flags)
    mocker.patch("imbalance_forecast.parser.get_parser", return_value=mock_parser)
    return cli.main()


def test_pipeline(
    mocker: pytest_mock.MockerFixture,
    workspace: pathlib.Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """Test synth, features, tune, backtest, evaluate, dm-test and report in sequence."""
    output = workspace / "output"

    assert _run(mocker, workspace, "synth") == cli.EXIT_SUCCESS
    assert _run(mocker, workspace, "synth") == cli.EXIT_FAILURE
    assert _run(mocker, workspace, "features") == cli.EXIT_SUCCESS
    assert _run(mocker, workspace, "tune") == cli.EXIT_SUCCESS
    assert _run(mocker, workspace, "backtest") == cli.EXIT_SUCCESS
    assert _run(mocker, workspace, "evaluate", json=True) == cli.EXIT_SUCCESS
    assert _run(mocker, workspace, "dm-test") == cli.EXIT_SUCCESS
    capsys.readouterr()
    assert _run(mocker, workspace, "report") == cli.EXIT_SUCCESS

    tuned = tuning.load_tuned(output / "tuned.json")
    store = backtest.load_store(output / "forecasts.csv")
    scores = pd.read_csv(output / "reports" / "scores.csv")
    trials = (output / "trials" / "gamlss.t_qh41.jsonl").read_text(encoding="utf-8")
    assert (output / "features.h5").exists()
    assert set(tuned["gamlss.t"]) == {41, 42}
    assert len(trials.splitlines()) == 2
    assert len(store) + len(store.failures) == 2 * 2 * 5
    assert len(store) > 0
    assert scores["model_id"].tolist()[0] == "naive"
    assert (output / "reports" / "scores.json").exists()
    assert (output / "reports" / "dm_pvalues.csv").exists()
    assert "# Forecast evaluation" in capsys.readouterr().out


def test_backtest_append(mocker: pytest_mock.MockerFixture, workspace: pathlib.Path) -> None:
    """Test that a second quarter-hour can be appended to an existing store."""
    assert _run(mocker, workspace, "synth", days=45) == cli.EXIT_SUCCESS
    assert _run(mocker, workspace, "backtest", models=["naive"], quarter_hours=[41]) == 0
    assert (
        _run(mocker, workspace, "backtest", models=["naive"], quarter_hours=[42], append=True)
        == cli.EXIT_SUCCESS
    )

    store = backtest.load_store(workspace / "output" / "forecasts.csv")
    sidecar = json.loads((workspace / "output" / "forecasts.json").read_text(encoding="utf-8"))

    assert len(store) == 2 * 5
    assert {delivery.qh for delivery in store.deliveries} == {41, 42}
    assert sidecar["config"]["models"] == ["naive"]


def test_backtest_without_tuning(
    mocker: pytest_mock.MockerFixture, workspace: pathlib.Path
) -> None:
    """Test that a tuned model without hyperparameters fails with code 1."""
    assert _run(mocker, workspace, "synth") == cli.EXIT_SUCCESS

    assert _run(mocker, workspace, "backtest") == cli.EXIT_FAILURE
    assert not (workspace / "output" / "forecasts.csv").exists()


def test_evaluate_single_model_skips_dm(
    mocker: pytest_mock.MockerFixture, workspace: pathlib.Path
) -> None:
    """Test that one model is scored without a comparison matrix."""
    assert _run(mocker, workspace, "synth") == cli.EXIT_SUCCESS
    assert _run(mocker, workspace, "backtest", models=["naive"]) == cli.EXIT_SUCCESS

    assert _run(mocker, workspace, "evaluate") == cli.EXIT_SUCCESS
    assert _run(mocker, workspace, "dm-test") == cli.EXIT_FAILURE
    assert (workspace / "output" / "reports" / "summary.md").exists()
    assert not (workspace / "output" / "reports" / "dm_pvalues.csv").exists()


def test_invalid_configuration(mocker: pytest_mock.MockerFixture, workspace: pathlib.Path) -> None:
    """Test that an inconsistent rolling window exits with code 2."""
    text = (workspace / "run.toml").read_text(encoding="utf-8")
    text = text.replace("val_days = 7", "val_days = 8")
    (workspace / "run.toml").write_text(text, encoding="utf-8")

    assert _run(mocker, workspace, "synth") == cli.EXIT_INVALID
