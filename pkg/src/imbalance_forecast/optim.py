""" Optimizers: lasso coordinate descent, Adam and early stopping. """
from __future__ import annotations

import copy
import dataclasses
import logging
from collections import abc
from typing import Any

import numpy as np

from imbalance_forecast import exceptions, logs

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)


def soft_threshold(z: np.ndarray | float, gamma: float) -> np.ndarray:
    """sign(z) * max(|z| - gamma, 0)."""
    if gamma < 0:
        raise exceptions.InputError(f"Threshold {gamma} is negative.")
    z = np.asarray(z, dtype=np.float64)
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


@dataclasses.dataclass(frozen=True)
class LassoResult:
    """Outcome of a coordinate descent run.

    Attributes:
        beta: The coefficients.
        n_sweeps: Number of coordinate sweeps performed.
        converged: False if the sweep limit was hit first.
    """

    beta: np.ndarray
    n_sweeps: int
    converged: bool


def lasso_objective(x: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """||y - X beta||^2 + lam * ||beta||_1."""
    residual = y - x @ beta
    return float(residual @ residual + lam * np.abs(beta).sum())


def lasso_cd(
    x: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-7,
    max_iter: int = 10000,
    beta0: np.ndarray | None = None,
) -> LassoResult:
    """Minimizes ||y - X beta||^2 + lam * ||beta||_1 by cyclic coordinate descent.

    Coordinates are visited in ascending order. After each full sweep the
    nonzero coordinates are swept alone until they settle; a full sweep
    without any change above `tol` ends the run.

    Args:
        x: The n-by-p design; columns are centered and scaled by the caller.
        y: The n responses.
        lam: The L1 rate, non-negative.
        tol: Largest coordinate change regarded as converged.
        max_iter: Maximum number of sweeps.
        beta0: Optional warm start.

    Returns:
        The last iterate, flagged if it did not converge.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise exceptions.InputError("Design and response shapes disagree.")
    if x.shape[0] < 2:
        raise exceptions.InputError("Coordinate descent needs at least two rows.")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise exceptions.InputError("Design and response must be finite.")
    if lam < 0:
        raise exceptions.InputError(f"Lasso rate {lam} is negative.")

    n_features = x.shape[1]
    gram = x.T @ x
    diagonal = np.diag(gram).copy()
    beta = np.zeros(n_features) if beta0 is None else np.array(beta0, dtype=np.float64)
    # gradient holds X'y - X'X beta
    gradient = x.T @ y - gram @ beta
    half_lam = lam / 2.0
    check_objective = logger.isEnabledFor(logging.DEBUG)
    objective = lasso_objective(x, y, beta, lam) if check_objective else np.inf

    def sweep(coordinates: abc.Iterable[int]) -> float:
        largest = 0.0
        for j in coordinates:
            if diagonal[j] <= 0.0:
                continue
            rho = gradient[j] + diagonal[j] * beta[j]
            updated = float(soft_threshold(rho, half_lam)) / diagonal[j]
            delta = updated - beta[j]
            if delta != 0.0:
                gradient[:] -= gram[:, j] * delta
                beta[j] = updated
                largest = max(largest, abs(delta))
        return largest

    n_sweeps = 0
    everything = range(n_features)
    while n_sweeps < max_iter:
        n_sweeps += 1
        full_change = sweep(everything)
        if check_objective:
            current = lasso_objective(x, y, beta, lam)
            if current > objective + 1e-9 * (1.0 + abs(objective)):
                raise exceptions.InternalError(
                    f"Lasso objective rose from {objective} to {current}."
                )
            objective = current
        if full_change < tol:
            return LassoResult(beta, n_sweeps, True)
        active = np.flatnonzero(beta)
        while n_sweeps < max_iter:
            n_sweeps += 1
            if sweep(active) < tol:
                break

    logger.warning("Coordinate descent stopped after %d sweeps at rate %g.", n_sweeps, lam)
    return LassoResult(beta, n_sweeps, False)


@dataclasses.dataclass(frozen=True)
class AdamState:
    """Adam moments for a list of parameter arrays.

    Attributes:
        learning_rate: Step size.
        step: Number of applied updates.
        first: First-moment estimates, one per parameter array.
        second: Second-moment estimates, one per parameter array.
        nan_count: Number of skipped updates with non-finite gradients.
    """

    learning_rate: float
    step: int = 0
    first: tuple[np.ndarray, ...] = ()
    second: tuple[np.ndarray, ...] = ()
    nan_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise exceptions.InputError(f"Learning rate {self.learning_rate} is not positive.")

    @classmethod
    def initial(cls, params: abc.Sequence[np.ndarray], learning_rate: float) -> AdamState:
        """Zero moments shaped like the parameters."""
        zeros = tuple(np.zeros_like(param, dtype=np.float64) for param in params)
        return cls(learning_rate, first=zeros, second=zeros)


def adam_step(
    state: AdamState, params: abc.Sequence[np.ndarray], grads: abc.Sequence[np.ndarray]
) -> tuple[AdamState, list[np.ndarray]]:
    """One bias-corrected Adam update.

    Args:
        state: The optimizer state.
        params: The current parameter arrays.
        grads: Gradients of the loss, shaped like `params`.

    Returns:
        The new state and new parameter arrays. The inputs are not modified.
        A non-finite gradient skips the update and counts it.
    """
    if len(params) != len(grads) or len(params) != len(state.first):
        raise exceptions.InputError("Parameters, gradients and moments differ in count.")
    for param, grad, moment in zip(params, grads, state.first):
        if np.shape(param) != np.shape(grad) or np.shape(param) != moment.shape:
            raise exceptions.InputError("Parameter and gradient shapes disagree.")
    if not all(np.isfinite(grad).all() for grad in grads):
        return dataclasses.replace(state, nan_count=state.nan_count + 1), list(params)

    step = state.step + 1
    first = tuple(
        state.beta1 * moment + (1.0 - state.beta1) * grad
        for moment, grad in zip(state.first, grads)
    )
    second = tuple(
        state.beta2 * moment + (1.0 - state.beta2) * np.square(grad)
        for moment, grad in zip(state.second, grads)
    )
    first_correction = 1.0 - state.beta1**step
    second_correction = 1.0 - state.beta2**step
    updated = [
        param
        - state.learning_rate
        * (mean / first_correction)
        / (np.sqrt(var / second_correction) + state.eps)
        for param, mean, var in zip(params, first, second)
    ]
    return dataclasses.replace(state, step=step, first=first, second=second), updated


@dataclasses.dataclass(frozen=True)
class EarlyStopState:
    """Validation-loss tracker.

    Attributes:
        best_loss: Lowest validation loss so far.
        snapshot: Parameters at the lowest validation loss.
        epochs_since: Updates since the last strict improvement.
        patience: Non-improving updates tolerated before stopping.
    """

    best_loss: float = np.inf
    snapshot: Any = None
    epochs_since: int = 0
    patience: int = 50

    @classmethod
    def start(cls, loss: float, params: Any, patience: int = 50) -> EarlyStopState:
        """A tracker whose baseline is the loss of the initial parameters."""
        return cls(float(loss), copy.deepcopy(params), 0, patience)


def early_stop_update(
    state: EarlyStopState, val_loss: float, params: Any
) -> tuple[EarlyStopState, bool]:
    """Records a validation loss.

    Returns:
        The new state and whether training should stop. A non-finite loss
        counts as no improvement.
    """
    if np.isfinite(val_loss) and val_loss < state.best_loss:
        return EarlyStopState(float(val_loss), copy.deepcopy(params), 0, state.patience), False
    new_state = dataclasses.replace(state, epochs_since=state.epochs_since + 1)
    return new_state, new_state.epochs_since > state.patience
