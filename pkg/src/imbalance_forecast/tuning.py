""" Seeded random search over model hyperparameters. """
from __future__ import annotations

import dataclasses
import json
import logging
import math
import pathlib
import time
from collections import abc
from concurrent import futures
from typing import Any, Callable

import numpy as np

from imbalance_forecast import dists, exceptions, features, logs, models, utils

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

TUNED_SCHEMA_VERSION = 1
RATE_BOUNDS = (1e-5, 10.0)
LEARNING_RATE_BOUNDS = (1e-5, 1e-1)
WIDTH_BOUNDS = (24, 1024)
MAX_HIDDEN_LAYERS = 3

Objective = Callable[[dict[str, Any], np.random.Generator], float]


@dataclasses.dataclass(frozen=True)
class Categorical:
    name: str
    choices: tuple[Any, ...]
    parent: tuple[str, Any] | None = None

    def sample(self, rng: np.random.Generator) -> Any:
        value = self.choices[int(rng.integers(len(self.choices)))]
        return value.item() if isinstance(value, np.generic) else value


@dataclasses.dataclass(frozen=True)
class LogUniform:
    name: str
    low: float
    high: float
    parent: tuple[str, Any] | None = None

    def sample(self, rng: np.random.Generator) -> float:
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))


@dataclasses.dataclass(frozen=True)
class Uniform:
    name: str
    low: float
    high: float
    parent: tuple[str, Any] | None = None

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))


@dataclasses.dataclass(frozen=True)
class IntUniform:
    name: str
    low: int
    high: int
    parent: tuple[str, Any] | None = None

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.low, self.high + 1))


Dimension = Categorical | LogUniform | Uniform | IntUniform


@dataclasses.dataclass(frozen=True)
class SearchSpace:
    """Named dimensions sampled in order.

    A dimension with a parent (name, value) exists only when the parent
    dimension was sampled and took that value.
    """

    name: str
    dimensions: tuple[Dimension, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for dimension in self.dimensions:
            if dimension.name in seen:
                raise exceptions.InternalError(f"Duplicate dimension {dimension.name}.")
            if dimension.parent is not None and dimension.parent[0] not in seen:
                raise exceptions.InternalError(
                    f"Dimension {dimension.name} precedes its parent {dimension.parent[0]}."
                )
            seen.add(dimension.name)

    def __len__(self) -> int:
        return len(self.dimensions)


def gamlss_space(family: dists.Family | str) -> SearchSpace:
    """L1 flag and rate per distribution parameter plus the learning rate."""
    family = dists.Family(family)
    dimensions: list[Dimension] = []
    for name in models.PARAM_NAMES[: family.n_params]:
        dimensions.append(Categorical(f"l1_{name}", (False, True)))
        dimensions.append(LogUniform(f"l1_{name}_rate", *RATE_BOUNDS, parent=(f"l1_{name}", True)))
    dimensions.append(LogUniform("learning_rate", *LEARNING_RATE_BOUNDS))
    return SearchSpace(f"gamlss.{family.value}", tuple(dimensions))


def probnn_space(family: dists.Family | str) -> SearchSpace:
    """Feature groups, dropout, architecture, per-layer L1 and the learning rate."""
    family = dists.Family(family)
    dimensions: list[Dimension] = [
        Categorical(f"group_{name}", (True, False)) for name in features.GROUP_NAMES
    ]
    dimensions.append(Categorical("dropout", (False, True)))
    dimensions.append(Uniform("dropout_rate", 0.0, 1.0, parent=("dropout", True)))
    dimensions.append(Categorical("n_layers", (2, 3)))
    for layer in range(1, MAX_HIDDEN_LAYERS + 1):
        prefix = f"layer{layer}"
        parent = ("n_layers", 3) if layer == MAX_HIDDEN_LAYERS else None
        dimensions.append(IntUniform(f"{prefix}_width", *WIDTH_BOUNDS, parent=parent))
        dimensions.append(Categorical(f"{prefix}_activation", models.ACTIVATIONS, parent=parent))
        for kind in ("kernel_l1", "activity_l1"):
            flag = f"{prefix}_{kind}"
            dimensions.append(Categorical(flag, (False, True), parent=parent))
            dimensions.append(LogUniform(f"{flag}_rate", *RATE_BOUNDS, parent=(flag, True)))
    dimensions.append(LogUniform("learning_rate", *LEARNING_RATE_BOUNDS))
    return SearchSpace(f"probNN.{family.value}", tuple(dimensions))


def space_for(model_id: str) -> SearchSpace:
    """The search space of a tunable model id."""
    kind, _, family = model_id.partition(".")
    if kind == "gamlss":
        return gamlss_space(family)
    if kind == "probNN":
        return probnn_space(family)
    raise exceptions.InputError(f"Model {model_id} has no hyperparameters to tune.")


def sample_trial(space: SearchSpace, rng: np.random.Generator) -> dict[str, Any]:
    """Draws one hyperparameter set."""
    params: dict[str, Any] = {}
    for dimension in space.dimensions:
        if dimension.parent is not None:
            parent, value = dimension.parent
            if parent not in params or params[parent] != value:
                continue
        params[dimension.name] = dimension.sample(rng)
    return params


@dataclasses.dataclass
class TrialRecord:
    """Outcome of one trial.

    Attributes:
        trial_id: Position in the trial sequence.
        params: The sampled hyperparameters.
        loss: Mean validation negative log-likelihood, None if failed.
        failed: Whether the trial raised or returned a non-finite loss.
        error: Diagnostic of a failed trial.
        wall_time: Seconds spent in the objective.
        seed: The tuning seed.
        groups: The feature group partition in effect.
    """

    trial_id: int
    params: dict[str, Any]
    loss: float | None
    failed: bool
    error: str
    wall_time: float
    seed: int
    groups: list[str] = dataclasses.field(default_factory=lambda: list(features.GROUP_NAMES))

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> TrialRecord:
        return cls(**payload)


@dataclasses.dataclass
class TuningResult:
    best_params: dict[str, Any]
    best_loss: float
    records: list[TrialRecord]


def tune(
    space: SearchSpace,
    objective: Objective,
    n_trials: int,
    seed: int,
    records_path: str | pathlib.Path | None = None,
    jobs: int = 1,
) -> TuningResult:
    """Random search with persisted, resumable trial records.

    Trial i draws its hyperparameters and the generator handed to the
    objective from streams keyed by (seed, space, i), so results do not
    depend on `jobs`.

    Args:
        space: The search space.
        objective: Maps hyperparameters and a generator to a validation loss.
        n_trials: Number of trials.
        seed: The tuning seed.
        records_path: JSON-lines file; trials already recorded there are reused.
        jobs: Number of worker threads.

    Returns:
        The best completed trial and all records in trial order.

    Raises:
        TuningError: If every trial failed.
    """
    if n_trials < 1:
        raise exceptions.ConfigError("Tuning needs at least one trial.")
    done = _load_records(records_path) if records_path is not None else {}
    pending = [trial_id for trial_id in range(n_trials) if trial_id not in done]
    if done:
        logger.info("Resuming %s with %d recorded trials.", space.name, n_trials - len(pending))

    def run(trial_id: int) -> TrialRecord:
        params = sample_trial(space, utils.derive_rng(seed, space.name, "sample", trial_id))
        start = time.perf_counter()
        try:
            loss = float(
                objective(params, utils.derive_rng(seed, space.name, "objective", trial_id))
            )
            error = "" if np.isfinite(loss) else "non-finite validation loss"
        except (exceptions.BaseLoggingError, ArithmeticError, ValueError) as exc_info:
            loss = float("nan")
            error = f"{type(exc_info).__name__}: {exc_info}"
        failed = bool(error)
        return TrialRecord(
            trial_id,
            params,
            None if failed else loss,
            failed,
            error,
            time.perf_counter() - start,
            seed,
        )

    with futures.ThreadPoolExecutor(max_workers=max(jobs, 1)) as executor:
        for record in executor.map(run, pending):
            done[record.trial_id] = record
            logger.debug("Trial %d of %s: loss %s.", record.trial_id, space.name, record.loss)
            if records_path is not None:
                utils.append_jsonl(record.to_dict(), records_path)

    records = [done[trial_id] for trial_id in range(n_trials)]
    completed = [record for record in records if not record.failed]
    if not completed:
        diagnostics = "; ".join(f"trial {r.trial_id}: {r.error}" for r in records[:10])
        raise exceptions.TuningError(
            f"All {n_trials} trials of {space.name} failed: {diagnostics}"
        )
    best = min(completed, key=lambda record: (record.loss, record.trial_id))
    logger.info("Best %s trial %d with loss %g.", space.name, best.trial_id, best.loss)
    return TuningResult(best.params, float(best.loss), records)  # type: ignore[arg-type]


def best_loss_trace(records: abc.Sequence[TrialRecord]) -> list[float]:
    """Running minimum of the completed losses, inf before the first success."""
    trace = []
    best = float("inf")
    for record in records:
        if not record.failed and record.loss is not None:
            best = min(best, record.loss)
        trace.append(best)
    return trace


def model_objective(
    model_id: str,
    train: models.Dataset,
    val: models.Dataset,
    config: models.TrainingConfig = models.TrainingConfig(),
) -> Objective:
    """The validation loss of a model fitted with trial hyperparameters."""
    kind, _, family = model_id.partition(".")

    def objective(params: dict[str, Any], rng: np.random.Generator) -> float:
        if kind == "gamlss":
            return models.fit_gamlss(train, val, family, params, config).best_val_loss
        if kind == "probNN":
            return models.fit_probnn(train, val, family, params, rng, config).best_val_loss
        raise exceptions.InputError(f"Model {model_id} has no hyperparameters to tune.")

    return objective


def save_tuned(tuned: dict[str, dict[int, dict[str, Any]]], path: str | pathlib.Path) -> None:
    """Persists chosen hyperparameters by model id and quarter-hour."""
    payload = {
        "schema_version": TUNED_SCHEMA_VERSION,
        "models": {
            model_id: {str(qh): params for qh, params in by_qh.items()}
            for model_id, by_qh in tuned.items()
        },
    }
    utils.save_json(payload, path)


def load_tuned(path: str | pathlib.Path) -> dict[str, dict[int, dict[str, Any]]]:
    """Reads hyperparameters written by `save_tuned`.

    Raises:
        MissingArtifactError: If the file does not exist.
        SchemaError: If the schema version is unknown.
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise exceptions.MissingArtifactError(
            f"Tuned hyperparameters not found at {path}; run the tune command first."
        )
    payload = utils.load_json(path)
    if payload.get("schema_version") != TUNED_SCHEMA_VERSION:
        raise exceptions.SchemaError(f"Unknown tuned-parameter schema in {path}.")
    return {
        model_id: {int(qh): params for qh, params in by_qh.items()}
        for model_id, by_qh in payload["models"].items()
    }


def _load_records(path: str | pathlib.Path) -> dict[int, TrialRecord]:
    path = pathlib.Path(path)
    if not path.exists():
        return {}
    records = {}
    with open(path, "r", encoding="utf-8") as file_buffer:
        for line in file_buffer:
            if line.strip():
                record = TrialRecord.from_dict(json.loads(line))
                records[record.trial_id] = record
    return records
