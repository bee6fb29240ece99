""" Unit tests for the config module. """
import datetime
import pathlib
import tempfile

import pytest

from imbalance_forecast import config, exceptions

CONFIG_TEXT = """
seed = 7
jobs = 2
models = ["naive", "gamlss.t"]

[paths]
panel = "market/panel.csv"

[rolling]
in_sample_days = 90
out_of_sample_days = 10
train_days = 60
val_days = 30
quarter_hours = [1, 25]
n_bootstrap = 999

[synth]
n_days = 100
start_date = 2020-06-01

[tuning]
gamlss_trials = 5
"""


def test_defaults() -> None:
    """Test that no file gives the default configuration."""
    run_config = config.load_config(None)

    assert run_config.seed == 1
    assert run_config.rolling.in_sample_days == 730
    assert run_config.paths.store == pathlib.Path("output/forecasts.csv")
    assert run_config.tuning.trials_for("probNN.t") == 100


def test_load_config() -> None:
    """Test that a TOML file sets top-level values and every table."""
    with tempfile.TemporaryDirectory() as temp_dir:
        path = pathlib.Path(temp_dir) / "run.toml"
        path.write_text(CONFIG_TEXT, encoding="utf-8")
        run_config = config.load_config(path)

    assert run_config.jobs == 2
    assert run_config.paths.panel == pathlib.Path("market/panel.csv")
    assert run_config.paths.transactions == pathlib.Path("data/transactions.csv")
    assert run_config.rolling.models == ("naive", "gamlss.t")
    assert run_config.rolling.quarter_hours == (1, 25)
    assert run_config.rolling.seed == 7
    assert run_config.synth.seed == 7
    assert run_config.synth.start_date == datetime.date(2020, 6, 1)
    assert run_config.tuning.trials_for("gamlss.N") == 5


@pytest.mark.parametrize(
    "payload",
    [
        {"colour": "red"},
        {"rolling": {"window": 3}},
        {"rolling": {"in_sample_days": 90}},
        {"synth": {"n_days": 5}},
        {"synth": {"start_date": "yesterday"}},
        {"tuning": {"gamlss_trials": 0}},
        {"jobs": 0},
    ],
)
def test_invalid_configuration(payload: dict) -> None:
    """Test that unknown keys and invalid values are configuration errors."""
    with pytest.raises(exceptions.ConfigError):
        config.config_from_dict(payload)


def test_unreadable_configuration() -> None:
    """Test that missing and malformed files are configuration errors."""
    with tempfile.TemporaryDirectory() as temp_dir:
        path = pathlib.Path(temp_dir) / "run.toml"
        with pytest.raises(exceptions.ConfigError):
            config.load_config(path)
        path.write_text("seed = = 3", encoding="utf-8")
        with pytest.raises(exceptions.ConfigError):
            config.load_config(path)


def test_with_overrides() -> None:
    """Test that command-line values replace file values and None is ignored."""
    run_config = config.config_from_dict({"seed": 3, "synth": {"n_days": 60}})

    updated = config.with_overrides(
        run_config, seed=9, jobs=None, models=["naive"], quarter_hours=[41], days=50
    )

    assert updated.seed == 9
    assert updated.rolling.seed == 9
    assert updated.synth.seed == 9
    assert updated.jobs == 1
    assert updated.rolling.models == ("naive",)
    assert updated.rolling.quarter_hours == (41,)
    assert updated.synth.n_days == 50


def test_overrides_are_validated() -> None:
    """Test that an invalid override fails like an invalid file."""
    with pytest.raises(exceptions.ConfigError):
        config.with_overrides(config.RunConfig(), days=3)
