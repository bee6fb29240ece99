""" Run configuration read from TOML files.

A configuration file may contain the top-level keys `seed`, `jobs`,
`models` and `max_gap` and the tables `[paths]`, `[rolling]`, `[synth]` and
`[tuning]`. Keys left out keep their defaults. For example:

    seed = 7
    models = ["naive", "lasso"]

    [paths]
    panel = "data/panel.csv"

    [rolling]
    in_sample_days = 90
    out_of_sample_days = 10
    train_days = 60
    val_days = 30
    quarter_hours = [1, 25, 49, 73]
"""
from __future__ import annotations

import dataclasses
import datetime
import pathlib
import sys
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from imbalance_forecast import backtest, dataio, exceptions


@dataclasses.dataclass(frozen=True)
class PathConfig:
    """Input and output locations."""

    panel: pathlib.Path = pathlib.Path("data/panel.csv")
    transactions: pathlib.Path = pathlib.Path("data/transactions.csv")
    features: pathlib.Path = pathlib.Path("output/features.csv")
    store: pathlib.Path = pathlib.Path("output/forecasts.csv")
    tuned: pathlib.Path = pathlib.Path("output/tuned.json")
    records: pathlib.Path = pathlib.Path("output/trials")
    reports: pathlib.Path = pathlib.Path("output/reports")

    def __post_init__(self) -> None:
        for field in dataclasses.fields(self):
            object.__setattr__(self, field.name, pathlib.Path(getattr(self, field.name)))


@dataclasses.dataclass(frozen=True)
class TuningConfig:
    """Trial budgets of the gamlss and probNN searches."""

    gamlss_trials: int = 50
    probnn_trials: int = 100

    def __post_init__(self) -> None:
        if self.gamlss_trials < 1 or self.probnn_trials < 1:
            raise exceptions.ConfigError("Trial budgets must be positive.")

    def trials_for(self, model_id: str) -> int:
        return self.gamlss_trials if model_id.startswith("gamlss") else self.probnn_trials


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on."""

    paths: PathConfig = PathConfig()
    rolling: backtest.RollingConfig = backtest.RollingConfig()
    synth: dataio.SynthConfig = dataio.SynthConfig()
    tuning: TuningConfig = TuningConfig()
    max_gap: int = 4
    seed: int = 1
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise exceptions.ConfigError("jobs must be at least 1.")
        if self.max_gap < 0:
            raise exceptions.ConfigError("max_gap must be non-negative.")


_TOP_LEVEL = {"seed", "jobs", "models", "max_gap", "paths", "rolling", "synth", "tuning"}


def load_config(path: str | pathlib.Path | None) -> RunConfig:
    """Reads a run configuration; None gives the defaults.

    Raises:
        ConfigError: If the file cannot be parsed or holds unknown keys or
            invalid values.
    """
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as file_buffer:
            payload = tomllib.load(file_buffer)
    except (OSError, tomllib.TOMLDecodeError) as exc_info:
        raise exceptions.ConfigError(f"Cannot read configuration {path}: {exc_info}") from exc_info
    return config_from_dict(payload)


def config_from_dict(payload: dict[str, Any]) -> RunConfig:
    """Builds a run configuration from parsed TOML."""
    unknown = set(payload) - _TOP_LEVEL
    if unknown:
        raise exceptions.ConfigError(f"Unknown configuration keys: {sorted(unknown)}.")
    seed = int(payload.get("seed", 1))
    rolling = dict(payload.get("rolling", {}))
    rolling.setdefault("seed", seed)
    if "models" in payload:
        rolling["models"] = tuple(payload["models"])
    synth = dict(payload.get("synth", {}))
    synth.setdefault("seed", seed)
    if "start_date" in synth:
        synth["start_date"] = _as_date(synth["start_date"])
    return RunConfig(
        paths=_build(PathConfig, payload.get("paths", {}), "paths"),
        rolling=_build(backtest.RollingConfig, rolling, "rolling"),
        synth=_build(dataio.SynthConfig, synth, "synth"),
        tuning=_build(TuningConfig, payload.get("tuning", {}), "tuning"),
        max_gap=int(payload.get("max_gap", 4)),
        seed=seed,
        jobs=int(payload.get("jobs", 1)),
    )


def with_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """Applies command-line flags; None values leave the configuration unchanged.

    Args:
        config: The configuration from file.
        overrides: Any of seed, jobs, models, quarter_hours and days.
    """
    overrides = {key: value for key, value in overrides.items() if value is not None}
    rolling = {}
    synth = {}
    top = {}
    if "seed" in overrides:
        top["seed"] = rolling["seed"] = synth["seed"] = int(overrides["seed"])
    if "jobs" in overrides:
        top["jobs"] = int(overrides["jobs"])
    if "models" in overrides:
        rolling["models"] = tuple(overrides["models"])
    if "quarter_hours" in overrides:
        rolling["quarter_hours"] = tuple(overrides["quarter_hours"])
    if "days" in overrides:
        synth["n_days"] = int(overrides["days"])
    return dataclasses.replace(
        config,
        rolling=dataclasses.replace(config.rolling, **rolling),
        synth=dataclasses.replace(config.synth, **synth),
        **top,
    )


def _build(cls: type, values: dict[str, Any], table: str) -> Any:
    names = {field.name for field in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise exceptions.ConfigError(f"Unknown keys in [{table}]: {sorted(unknown)}.")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc_info:
        raise exceptions.ConfigError(f"Invalid [{table}] table: {exc_info}") from exc_info


def _as_date(value: Any) -> datetime.date:
    if isinstance(value, datetime.datetime):
        return value.date()
    if isinstance(value, datetime.date):
        return value
    try:
        return datetime.date.fromisoformat(str(value))
    except ValueError as exc_info:
        raise exceptions.ConfigError(f"Invalid start_date {value!r}.") from exc_info
