""" Probabilistic imbalance price forecasters.

Four model families are available:

- naive: the quarter-hourly ID1 price plus bootstrapped in-sample residuals.
- lasso: asinh-stabilized lasso regression tuned by BIC plus bootstrapped
  residuals.
- gamlss: linear regression on every parameter of a Normal or Student-t
  distribution, fitted by penalized maximum likelihood.
- probNN: a multilayer perceptron whose output layer parameterizes a Normal
  or Student-t distribution.

Every forecast is reported on the same grid of 99 probabilities.
"""
from __future__ import annotations

import dataclasses
import logging
from collections import abc
from typing import Any

import numpy as np
import pandas as pd
from scipy import special, stats

from imbalance_forecast import dataio, dists, exceptions, features, logs, optim, transforms

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

PROBS = np.round(np.arange(1, 100) / 100.0, 2)
N_PROBS = PROBS.size
LAMBDA_GRID = 2.0 ** np.linspace(-15.0, 1.0, 50)
MIN_NAIVE_PAIRS = 30
NAIVE_INDEX = "ID1_qh"
ACTIVATIONS = ("elu", "relu", "sigmoid", "softmax", "softplus", "tanh")
PARAM_NAMES = ("mu", "sigma", "tau")
MODEL_IDS = ("naive", "lasso", "gamlss.N", "gamlss.t", "probNN.N", "probNN.t")
COMBINATION_ID = "Combination"
MAX_NAN_STREAK = 10


@dataclasses.dataclass(frozen=True, eq=False)
class QuantileForecast:
    """Forecast quantiles on the fixed probability grid 0.01, ..., 0.99.

    Attributes:
        values: The 99 quantiles, nondecreasing.
        delivery: The forecast delivery period.
        model_id: The forecasting model.
        rearranged: True if the values had to be sorted.
    """

    values: np.ndarray
    delivery: dataio.DeliveryIndex | None = None
    model_id: str = ""
    rearranged: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (N_PROBS,):
            raise exceptions.InputError(f"Expected {N_PROBS} quantiles, got {values.shape}.")
        if not np.isfinite(values).all():
            raise exceptions.InputError("Forecast quantiles must be finite.")
        if (np.diff(values) < 0).any():
            logger.debug("Rearranging crossing quantiles of %s.", self.model_id)
            values = np.sort(values)
            object.__setattr__(self, "rearranged", True)
        object.__setattr__(self, "values", values)

    @property
    def probs(self) -> np.ndarray:
        return PROBS

    def at(self, prob: float) -> float:
        """The quantile at a grid probability."""
        position = int(round(prob * 100)) - 1
        if not 0 <= position < N_PROBS or not np.isclose(PROBS[position], prob):
            raise exceptions.InputError(f"Probability {prob} is not on the grid.")
        return float(self.values[position])


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """Regressors and targets of a training or validation partition."""

    features: pd.DataFrame
    target: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "target", np.asarray(self.target, dtype=np.float64))
        if self.target.shape != (len(self.features),):
            raise exceptions.InputError("Features and target differ in length.")

    def __len__(self) -> int:
        return len(self.target)

    def observed(self) -> Dataset:
        """Rows with a finite target."""
        keep = np.isfinite(self.target)
        return Dataset(self.features.loc[keep], self.target[keep])


@dataclasses.dataclass(frozen=True)
class TrainingConfig:
    """Stopping rules for likelihood training."""

    max_epochs: int = 1500
    patience: int = 50
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.max_epochs < 1 or self.patience < 0 or self.batch_size < 1:
            raise exceptions.ConfigError("Invalid training configuration.")


@dataclasses.dataclass(frozen=True, eq=False)
class InputScaler:
    """Per-column input transformations fitted on a training partition.

    Attributes:
        names: The retained input columns.
        stabilizers: asinh parameters per column, None where not applied.
        standardizers: Standardization parameters per column.
    """

    names: tuple[str, ...]
    stabilizers: tuple[transforms.TransformParams | None, ...]
    standardizers: tuple[transforms.TransformParams, ...]

    def transform(self, values: np.ndarray | pd.DataFrame) -> np.ndarray:
        """Transforms rows whose columns are ordered like `names`."""
        if isinstance(values, pd.DataFrame):
            values = values.loc[:, list(self.names)].to_numpy(dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        out = np.empty_like(values)
        for column, (stabilizer, standardizer) in enumerate(
            zip(self.stabilizers, self.standardizers)
        ):
            raw = values[:, column]
            if stabilizer is not None:
                raw = transforms.apply(stabilizer, raw)
            out[:, column] = transforms.apply(standardizer, raw)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "names": list(self.names),
            "stabilizers": [None if p is None else p.to_dict() for p in self.stabilizers],
            "standardizers": [p.to_dict() for p in self.standardizers],
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> InputScaler:
        return cls(
            tuple(payload["names"]),
            tuple(
                None if p is None else transforms.TransformParams.from_dict(p)
                for p in payload["stabilizers"]
            ),
            tuple(transforms.TransformParams.from_dict(p) for p in payload["standardizers"]),
        )


def fit_input_scaler(frame: pd.DataFrame, stabilize: bool) -> InputScaler:
    """Fits column transformations, dropping columns that carry no information.

    Args:
        frame: Training regressors.
        stabilize: Apply asinh to columns with more than two distinct values
            before standardizing.

    Returns:
        The fitted scaler. Constant or non-finite columns are dropped.
    """
    names = []
    stabilizers = []
    standardizers = []
    n_dropped = 0
    for name in frame.columns:
        column = frame[name].to_numpy(dtype=np.float64)
        if column.size < 2 or not np.isfinite(column).all() or np.ptp(column) == 0:
            n_dropped += 1
            continue
        stabilizer = None
        if stabilize and np.unique(column).size > 2:
            center = np.median(column)
            if np.median(np.abs(column - center)) > 0:
                stabilizer = transforms.fit_transform(column, transforms.TransformKind.ASINH)
                column = transforms.apply(stabilizer, column)
        names.append(str(name))
        stabilizers.append(stabilizer)
        standardizers.append(
            transforms.fit_transform(column, transforms.TransformKind.STANDARDIZE)
        )
    if n_dropped:
        logger.warning("Dropped %d constant or incomplete input columns.", n_dropped)
    return InputScaler(tuple(names), tuple(stabilizers), tuple(standardizers))


def bootstrap_quantiles(
    point: float,
    pool: np.ndarray,
    n_samples: int,
    rng: np.random.Generator | int,
    delivery: dataio.DeliveryIndex | None = None,
    model_id: str = "",
) -> QuantileForecast:
    """Quantiles of the point forecast plus residuals drawn with replacement.

    Args:
        point: The point forecast in EUR/MWh.
        pool: In-sample residuals in EUR/MWh.
        n_samples: Number of bootstrap draws, at least 99.
        rng: A generator, or a seed for one.
        delivery: The forecast delivery period.
        model_id: The forecasting model.
    """
    pool = np.asarray(pool, dtype=np.float64)
    if n_samples < N_PROBS:
        raise exceptions.InputError(f"Bootstrap needs at least {N_PROBS} samples.")
    if pool.size == 0:
        raise exceptions.InputError("Bootstrap residual pool is empty.")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    draws = point + rng.choice(pool, size=n_samples, replace=True)
    return QuantileForecast(np.quantile(draws, PROBS), delivery, model_id)


def dist_to_quantiles(
    params: dists.DistParams,
    delivery: dataio.DeliveryIndex | None = None,
    model_id: str = "",
) -> QuantileForecast:
    """Evaluates a predictive distribution on the probability grid."""
    return QuantileForecast(dists.quantiles(params, PROBS), delivery, model_id)


def combine(first: QuantileForecast, second: QuantileForecast) -> QuantileForecast:
    """Averages two forecasts probability by probability."""
    if first.delivery != second.delivery:
        raise exceptions.InputError(
            f"Cannot combine forecasts for {first.delivery} and {second.delivery}."
        )
    return QuantileForecast(
        (first.values + second.values) / 2.0, first.delivery, COMBINATION_ID
    )


#####
# naive
#####


@dataclasses.dataclass(frozen=True, eq=False)
class NaiveModel:
    """In-sample residuals of the ID1 price as forecast of the imbalance price."""

    residuals: np.ndarray
    model_id: str = "naive"

    def to_dict(self) -> dict[str, Any]:
        return {"model": self.model_id, "residuals": self.residuals.tolist()}

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> NaiveModel:
        return cls(np.asarray(payload["residuals"], dtype=np.float64))


def fit_naive(id1: np.ndarray, imbalance_price: np.ndarray) -> NaiveModel:
    """Collects the residuals IP - ID1 of the training rows.

    Raises:
        InputError: With fewer than 30 rows where both prices are present.
    """
    id1 = np.asarray(id1, dtype=np.float64)
    imbalance_price = np.asarray(imbalance_price, dtype=np.float64)
    if id1.shape != imbalance_price.shape:
        raise exceptions.InputError("ID1 and imbalance prices differ in length.")
    present = np.isfinite(id1) & np.isfinite(imbalance_price)
    if present.sum() < MIN_NAIVE_PAIRS:
        raise exceptions.InputError(
            f"The naive model needs {MIN_NAIVE_PAIRS} pairs, got {int(present.sum())}."
        )
    return NaiveModel(imbalance_price[present] - id1[present])


def naive_point(vector: features.FeatureVector) -> float:
    return float(_feature_row(vector, (NAIVE_INDEX,))[0])


def predict_naive(
    model: NaiveModel,
    vector: features.FeatureVector,
    n_samples: int,
    rng: np.random.Generator | int,
    delivery: dataio.DeliveryIndex | None = None,
) -> QuantileForecast:
    return bootstrap_quantiles(
        naive_point(vector), model.residuals, n_samples, rng, delivery, model.model_id
    )


#####
# lasso
#####


@dataclasses.dataclass(frozen=True, eq=False)
class LassoModel:
    """Lasso regression of the transformed imbalance price.

    Attributes:
        scaler: Input transformations; transformed columns are further
            divided by `norm` so that they have unit Euclidean norm in-sample.
        norm: The column norm divisor.
        target_transform: Transformation of the imbalance price.
        intercept: Mean of the transformed training target.
        target_norm: Euclidean norm of the centered transformed target.
        beta: Coefficients of the unit-norm columns against the unit-norm
            target.
        chosen_lambda: The BIC-optimal rate.
        residuals: In-sample residuals in EUR/MWh.
    """

    scaler: InputScaler
    norm: float
    target_transform: transforms.TransformParams
    intercept: float
    target_norm: float
    beta: np.ndarray
    chosen_lambda: float
    residuals: np.ndarray
    model_id: str = "lasso"

    def design(self, values: np.ndarray | pd.DataFrame) -> np.ndarray:
        return self.scaler.transform(values) / self.norm

    def linear(self, design: np.ndarray) -> np.ndarray:
        """Transformed-scale predictions of unit-norm design rows."""
        return self.intercept + self.target_norm * (design @ self.beta)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model_id,
            "scaler": self.scaler.to_dict(),
            "norm": self.norm,
            "target_transform": self.target_transform.to_dict(),
            "intercept": self.intercept,
            "target_norm": self.target_norm,
            "beta": self.beta.tolist(),
            "chosen_lambda": self.chosen_lambda,
            "residuals": self.residuals.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> LassoModel:
        return cls(
            InputScaler.from_dict(payload["scaler"]),
            float(payload["norm"]),
            transforms.TransformParams.from_dict(payload["target_transform"]),
            float(payload["intercept"]),
            float(payload["target_norm"]),
            np.asarray(payload["beta"], dtype=np.float64),
            float(payload["chosen_lambda"]),
            np.asarray(payload["residuals"], dtype=np.float64),
        )


def bic(n_rows: int, rss: float, n_nonzero: int) -> float:
    """n ln(RSS / n) + k ln n, with RSS floored at the smallest positive float."""
    rss = max(rss, np.finfo(np.float64).tiny)
    return float(n_rows * np.log(rss / n_rows) + n_nonzero * np.log(n_rows))


def fit_lasso_bic(
    frame: pd.DataFrame,
    target: np.ndarray,
    transform: transforms.TransformKind | str = transforms.TransformKind.ASINH,
    grid: np.ndarray = LAMBDA_GRID,
    tol: float = 1e-7,
    max_iter: int = 10000,
) -> LassoModel:
    """Fits the lasso along the rate grid and keeps the BIC-optimal fit.

    Columns and the centered target are both scaled to unit norm, so the
    rates act on correlations; at a rate of 2 every coefficient is zero. The
    path runs from the largest rate down with warm starts. Fits that leave
    fewer than two residual degrees of freedom end the path.

    Args:
        frame: Training regressors in raw units.
        target: Training imbalance prices.
        transform: asinh (default) or standardize, applied to the target and
            to the non-binary regressors.
        grid: Candidate rates.
        tol: Coordinate descent tolerance.
        max_iter: Coordinate descent sweep limit.
    """
    transform = transforms.TransformKind(transform)
    data = Dataset(frame, target).observed()
    n_rows = len(data)
    if n_rows < 3:
        raise exceptions.InputError(f"The lasso needs at least 3 rows, got {n_rows}.")
    scaler = fit_input_scaler(data.features, transform == transforms.TransformKind.ASINH)
    norm = float(np.sqrt(n_rows - 1))
    design = scaler.transform(data.features) / norm

    target_transform = transforms.fit_transform(data.target, transform)
    transformed = transforms.apply(target_transform, data.target)
    intercept = float(transformed.mean())
    target_norm = float(np.linalg.norm(transformed - intercept))
    if target_norm <= 0.0:
        target_norm = 1.0
    centered = (transformed - intercept) / target_norm

    beta = np.zeros(design.shape[1])
    best: tuple[float, float, np.ndarray] | None = None
    for lam in sorted(np.asarray(grid, dtype=np.float64), reverse=True):
        result = optim.lasso_cd(design, centered, lam, tol=tol, max_iter=max_iter, beta0=beta)
        beta = result.beta
        n_nonzero = int(np.count_nonzero(beta))
        if n_nonzero >= n_rows - 1:
            logger.debug("Lasso path stopped at rate %g with %d coefficients.", lam, n_nonzero)
            break
        residual = centered - design @ beta
        score = bic(n_rows, float(residual @ residual), n_nonzero)
        if best is None or score < best[0]:
            best = (score, float(lam), beta.copy())
    if best is None:
        raise exceptions.FitError("No rate on the lasso grid left residual degrees of freedom.")

    _, chosen_lambda, chosen_beta = best
    fitted = transforms.invert(
        target_transform, intercept + target_norm * (design @ chosen_beta)
    )
    logger.debug(
        "Lasso chose rate %g with %d nonzero coefficients.",
        chosen_lambda,
        np.count_nonzero(chosen_beta),
    )
    return LassoModel(
        scaler,
        norm,
        target_transform,
        intercept,
        target_norm,
        chosen_beta,
        chosen_lambda,
        data.target - fitted,
    )


def lasso_point(model: LassoModel, vector: features.FeatureVector) -> float:
    """The back-transformed linear prediction."""
    design = model.design(_feature_row(vector, model.scaler.names))
    return float(transforms.invert(model.target_transform, model.linear(design)[0]))


def predict_lasso(
    model: LassoModel,
    vector: features.FeatureVector,
    n_samples: int,
    rng: np.random.Generator | int,
    delivery: dataio.DeliveryIndex | None = None,
) -> QuantileForecast:
    return bootstrap_quantiles(
        lasso_point(model, vector), model.residuals, n_samples, rng, delivery, model.model_id
    )


#####
# distributional regression
#####


def apply_links(family: dists.Family, eta: np.ndarray) -> list[np.ndarray]:
    """Maps linear predictors to (mu, sigma[, tau]): identity, then softplus."""
    return [eta[..., 0]] + [dists.softplus(eta[..., i]) for i in range(1, family.n_params)]


def nll_eta_gradient(
    family: dists.Family, eta: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient with respect to the predictors."""
    theta = apply_links(family, eta)
    tau = theta[2] if family == dists.Family.STUDENT_T else None
    logpdf, grads = dists.loglik_and_grads(family, theta[0], theta[1], tau, target)
    n_rows = max(target.size, 1)
    d_eta = np.empty_like(eta)
    d_eta[:, 0] = -grads[0] / n_rows
    for i in range(1, family.n_params):
        d_eta[:, i] = -grads[i] * dists.softplus_grad(eta[:, i]) / n_rows
    return float(-logpdf.mean()), d_eta


def initial_intercepts(target: np.ndarray, family: dists.Family, robust: bool) -> np.ndarray:
    """Link-scale intercepts matching the moments of the training target.

    Args:
        target: Training targets.
        family: The distribution family.
        robust: Use the median and normalized MAD instead of mean and
            standard deviation, and a fixed tail weight of 5.
    """
    if robust:
        center = float(np.median(target))
        spread = float(np.median(np.abs(target - center)) * transforms.MAD_NORMALIZER)
        tau = 5.0
    else:
        center = float(np.mean(target))
        spread = float(np.std(target))
        kurtosis = float(stats.kurtosis(target)) if target.size > 3 else 0.0
        tau = 4.0 + 6.0 / kurtosis if kurtosis > 0 else 30.0
        tau = min(tau, 30.0)
    if family == dists.Family.NORMAL:
        with np.errstate(divide="ignore"):
            return np.array([center, dists.softplus_inverse(spread)])
    scale = spread * np.sqrt((tau - 2.0) / tau)
    with np.errstate(divide="ignore"):
        return np.array(
            [center, dists.softplus_inverse(scale), dists.softplus_inverse(tau)]
        )


def _penalty_rates(hyper: abc.Mapping[str, Any], family: dists.Family) -> np.ndarray:
    rates = np.zeros(family.n_params)
    for i, name in enumerate(PARAM_NAMES[: family.n_params]):
        if hyper.get(f"l1_{name}", False):
            rates[i] = float(hyper[f"l1_{name}_rate"])
    if (rates < 0).any():
        raise exceptions.InputError("L1 rates must be non-negative.")
    return rates


@dataclasses.dataclass(frozen=True, eq=False)
class GamlssModel:
    """Linear predictors for every distribution parameter.

    Attributes:
        family: The distribution family.
        scaler: Standardization of the inputs.
        coef: Coefficient matrix, one column per distribution parameter.
        intercepts: Link-scale intercepts.
        penalties: L1 rate per distribution parameter, zero when absent.
        learning_rate: The Adam step size.
        n_epochs: Epochs trained.
        best_val_loss: Validation mean negative log-likelihood of the snapshot.
    """

    family: dists.Family
    scaler: InputScaler
    coef: np.ndarray
    intercepts: np.ndarray
    penalties: np.ndarray
    learning_rate: float
    n_epochs: int
    best_val_loss: float

    @property
    def model_id(self) -> str:
        return f"gamlss.{self.family.value}"

    def raw_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Intercepts and coefficients on the unstandardized inputs."""
        centers = np.array([p.center for p in self.scaler.standardizers])
        scales = np.array([p.scale for p in self.scaler.standardizers])
        slopes = self.coef / scales[:, None] if scales.size else self.coef
        intercepts = self.intercepts - centers @ slopes if scales.size else self.intercepts
        return intercepts, slopes

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model_id,
            "family": self.family.value,
            "scaler": self.scaler.to_dict(),
            "coef": self.coef.tolist(),
            "intercepts": self.intercepts.tolist(),
            "penalties": self.penalties.tolist(),
            "learning_rate": self.learning_rate,
            "n_epochs": self.n_epochs,
            "best_val_loss": self.best_val_loss,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> GamlssModel:
        family = dists.Family(payload["family"])
        return cls(
            family,
            InputScaler.from_dict(payload["scaler"]),
            np.asarray(payload["coef"], dtype=np.float64).reshape(-1, family.n_params),
            np.asarray(payload["intercepts"], dtype=np.float64),
            np.asarray(payload["penalties"], dtype=np.float64),
            float(payload["learning_rate"]),
            int(payload["n_epochs"]),
            float(payload["best_val_loss"]),
        )


def gamlss_objective(
    coef: np.ndarray,
    intercepts: np.ndarray,
    inputs: np.ndarray,
    target: np.ndarray,
    family: dists.Family,
    penalties: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Penalized mean negative log-likelihood and its gradients.

    Returns:
        The loss, the gradient with respect to `coef` and the gradient with
        respect to `intercepts`.
    """
    eta = inputs @ coef + intercepts
    nll, d_eta = nll_eta_gradient(family, eta, target)
    loss = nll + float((penalties * np.abs(coef)).sum())
    grad_coef = inputs.T @ d_eta + penalties * np.sign(coef)
    return loss, grad_coef, d_eta.sum(axis=0)


def fit_gamlss(
    train: Dataset,
    val: Dataset,
    family: dists.Family | str,
    hyper: abc.Mapping[str, Any],
    config: TrainingConfig = TrainingConfig(),
    warm_start: GamlssModel | None = None,
) -> GamlssModel:
    """Fits a distributional regression by full-batch Adam with early stopping.

    Args:
        train: Training partition.
        val: Validation partition, used for early stopping only.
        family: The distribution family.
        hyper: `learning_rate` and, per distribution parameter p, an on/off
            flag `l1_p` with a rate `l1_p_rate`.
        config: Epoch limit and patience.
        warm_start: A previous fit with the same inputs to start from.

    Returns:
        The parameters with the lowest validation loss.

    Raises:
        FitError: If the initial loss is not finite with either initialization.
    """
    family = dists.Family(family)
    train = train.observed()
    if len(train) < 2:
        raise exceptions.InputError("Distributional regression needs at least 2 rows.")
    scaler = fit_input_scaler(train.features, stabilize=False)
    inputs = scaler.transform(train.features)
    val_inputs, val_target = _validation_arrays(scaler, val)
    penalties = _penalty_rates(hyper, family)
    learning_rate = float(hyper["learning_rate"])

    coef = np.zeros((inputs.shape[1], family.n_params))
    if warm_start is not None and warm_start.scaler.names == scaler.names:
        coef = warm_start.coef.copy()
    for robust in (False, True):
        intercepts = initial_intercepts(train.target, family, robust)
        if warm_start is not None and warm_start.scaler.names == scaler.names and not robust:
            intercepts = warm_start.intercepts.copy()
        with np.errstate(all="ignore"):
            loss = gamlss_objective(coef, intercepts, inputs, train.target, family, penalties)[0]
        if np.isfinite(loss):
            break
        logger.warning("Non-finite initial loss; retrying with robust intercepts.")
        coef = np.zeros_like(coef)
    else:
        raise exceptions.FitError("Distributional regression diverged at initialization.")

    def val_loss(params: list[np.ndarray]) -> float:
        with np.errstate(all="ignore"):
            eta = val_inputs @ params[0] + params[1]
            return nll_eta_gradient(family, eta, val_target)[0]

    params = [coef, intercepts]
    adam = optim.AdamState.initial(params, learning_rate)
    stopper = optim.EarlyStopState.start(val_loss(params), params, config.patience)
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        with np.errstate(all="ignore"):
            _, grad_coef, grad_intercepts = gamlss_objective(
                params[0], params[1], inputs, train.target, family, penalties
            )
        adam, params = optim.adam_step(adam, params, [grad_coef, grad_intercepts])
        stopper, stop = optim.early_stop_update(stopper, val_loss(params), params)
        if stop:
            break
    logger.debug(
        "gamlss.%s stopped after %d epochs at validation loss %g.",
        family.value,
        epoch,
        stopper.best_loss,
    )
    best_coef, best_intercepts = stopper.snapshot
    return GamlssModel(
        family,
        scaler,
        best_coef,
        best_intercepts,
        penalties,
        learning_rate,
        epoch,
        float(stopper.best_loss),
    )


def predict_gamlss(model: GamlssModel, vector: features.FeatureVector) -> dists.DistParams:
    """The predictive distribution of a delivery period."""
    inputs = model.scaler.transform(_feature_row(vector, model.scaler.names))
    eta = inputs @ model.coef + model.intercepts
    theta = [float(value[0]) for value in apply_links(model.family, eta)]
    return dists.DistParams(model.family, *theta)


#####
# probabilistic neural network
#####


@dataclasses.dataclass(frozen=True)
class ProbNNHyper:
    """Architecture and training hyperparameters of a probabilistic network.

    Attributes:
        widths: Hidden layer widths; may be empty.
        activations: One activation per hidden layer.
        learning_rate: The Adam step size.
        dropout: Dropout rate on the inputs, 0 for none.
        kernel_l1: L1 rate on each hidden layer's weights.
        activity_l1: L1 rate on each hidden layer's outputs.
        mask: Feature groups fed to the network.
    """

    widths: tuple[int, ...]
    activations: tuple[str, ...]
    learning_rate: float
    dropout: float = 0.0
    kernel_l1: tuple[float, ...] = ()
    activity_l1: tuple[float, ...] = ()
    mask: features.FeatureGroupMask = features.FeatureGroupMask()

    def __post_init__(self) -> None:
        n_layers = len(self.widths)
        if not self.kernel_l1:
            object.__setattr__(self, "kernel_l1", (0.0,) * n_layers)
        if not self.activity_l1:
            object.__setattr__(self, "activity_l1", (0.0,) * n_layers)
        if not (len(self.activations) == len(self.kernel_l1) == len(self.activity_l1) == n_layers):
            raise exceptions.InputError("Every hidden layer needs one setting of each kind.")
        if any(width < 1 for width in self.widths):
            raise exceptions.InputError("Hidden layer widths must be positive.")
        unknown = set(self.activations) - set(ACTIVATIONS)
        if unknown:
            raise exceptions.InputError(f"Unknown activations: {sorted(unknown)}.")
        if not 0 <= self.dropout < 1:
            raise exceptions.InputError(f"Dropout rate {self.dropout} is not in [0, 1).")
        if not self.learning_rate > 0:
            raise exceptions.InputError("The learning rate must be positive.")

    @classmethod
    def from_trial(cls, trial: abc.Mapping[str, Any]) -> ProbNNHyper:
        """Reads sampled hyperparameters; see the tuning search space for keys."""
        n_layers = int(trial["n_layers"])
        widths = []
        activations = []
        kernel = []
        activity = []
        for layer in range(1, n_layers + 1):
            prefix = f"layer{layer}"
            width = int(trial[f"{prefix}_width"])
            if not 24 <= width <= 1024:
                raise exceptions.InputError(f"Layer width {width} is not in [24, 1024].")
            widths.append(width)
            activations.append(str(trial[f"{prefix}_activation"]))
            kernel.append(_optional_rate(trial, f"{prefix}_kernel_l1"))
            activity.append(_optional_rate(trial, f"{prefix}_activity_l1"))
        groups = {
            name: bool(trial.get(f"group_{name}", True)) for name in features.GROUP_NAMES
        }
        return cls(
            tuple(widths),
            tuple(activations),
            float(trial["learning_rate"]),
            _optional_rate(trial, "dropout"),
            tuple(kernel),
            tuple(activity),
            features.FeatureGroupMask.from_dict(groups),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "widths": list(self.widths),
            "activations": list(self.activations),
            "learning_rate": self.learning_rate,
            "dropout": self.dropout,
            "kernel_l1": list(self.kernel_l1),
            "activity_l1": list(self.activity_l1),
            "mask": self.mask.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> ProbNNHyper:
        return cls(
            tuple(payload["widths"]),
            tuple(payload["activations"]),
            float(payload["learning_rate"]),
            float(payload["dropout"]),
            tuple(payload["kernel_l1"]),
            tuple(payload["activity_l1"]),
            features.FeatureGroupMask.from_dict(payload["mask"]),
        )


@dataclasses.dataclass(frozen=True, eq=False)
class ProbNNModel:
    """A fitted probabilistic network.

    The network models the standardized target; the head outputs are mapped
    back to EUR/MWh with `target_center` and `target_scale`.

    Attributes:
        family: The distribution family.
        hyper: Architecture and training settings.
        scaler: Standardization of the selected inputs.
        target_center: Training mean of the imbalance price.
        target_scale: Training standard deviation of the imbalance price.
        params: Weights and biases, alternating, hidden layers first, head last.
        n_epochs: Epochs trained.
        best_val_loss: Validation mean negative log-likelihood in EUR/MWh units.
    """

    family: dists.Family
    hyper: ProbNNHyper
    scaler: InputScaler
    target_center: float
    target_scale: float
    params: tuple[np.ndarray, ...]
    n_epochs: int = 0
    best_val_loss: float = float("nan")

    @property
    def model_id(self) -> str:
        return f"probNN.{self.family.value}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model_id,
            "family": self.family.value,
            "hyper": self.hyper.to_dict(),
            "scaler": self.scaler.to_dict(),
            "target_center": self.target_center,
            "target_scale": self.target_scale,
            "params": [param.tolist() for param in self.params],
            "n_epochs": self.n_epochs,
            "best_val_loss": self.best_val_loss,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> ProbNNModel:
        return cls(
            dists.Family(payload["family"]),
            ProbNNHyper.from_dict(payload["hyper"]),
            InputScaler.from_dict(payload["scaler"]),
            float(payload["target_center"]),
            float(payload["target_scale"]),
            tuple(np.asarray(param, dtype=np.float64) for param in payload["params"]),
            int(payload["n_epochs"]),
            float(payload["best_val_loss"]),
        )


def activate(name: str, pre: np.ndarray) -> np.ndarray:
    """Applies a hidden-layer activation."""
    if name == "elu":
        return np.where(pre > 0, pre, np.expm1(np.minimum(pre, 0.0)))
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "sigmoid":
        return special.expit(pre)
    if name == "softmax":
        return special.softmax(pre, axis=-1)
    if name == "softplus":
        return np.logaddexp(0.0, pre)
    if name == "tanh":
        return np.tanh(pre)
    raise exceptions.InputError(f"Unknown activation {name}.")


def activation_backward(
    name: str, pre: np.ndarray, out: np.ndarray, grad_out: np.ndarray
) -> np.ndarray:
    """Gradient with respect to the pre-activation."""
    if name == "elu":
        return grad_out * np.where(pre > 0, 1.0, out + 1.0)
    if name == "relu":
        return grad_out * (pre > 0)
    if name == "sigmoid":
        return grad_out * out * (1.0 - out)
    if name == "softmax":
        return out * (grad_out - (grad_out * out).sum(axis=-1, keepdims=True))
    if name == "softplus":
        return grad_out * special.expit(pre)
    if name == "tanh":
        return grad_out * (1.0 - out**2)
    raise exceptions.InputError(f"Unknown activation {name}.")


def probnn_forward(
    params: abc.Sequence[np.ndarray], hyper: ProbNNHyper, inputs: np.ndarray
) -> np.ndarray:
    """Head pre-activations without dropout."""
    hidden = np.asarray(inputs, dtype=np.float64)
    for layer, name in enumerate(hyper.activations):
        hidden = activate(name, hidden @ params[2 * layer] + params[2 * layer + 1])
    return hidden @ params[-2] + params[-1]


def probnn_objective(
    params: abc.Sequence[np.ndarray],
    hyper: ProbNNHyper,
    family: dists.Family,
    inputs: np.ndarray,
    target: np.ndarray,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Mean negative log-likelihood plus L1 penalties, with gradients.

    Args:
        params: Weights and biases, alternating, head last.
        hyper: The architecture.
        family: The distribution family.
        inputs: A batch of standardized inputs.
        target: The standardized targets of the batch.
        dropout_rng: Generator for dropout masks; None disables dropout.

    Returns:
        The loss and one gradient per parameter array.
    """
    n_rows = inputs.shape[0]
    hidden = inputs
    if dropout_rng is not None and hyper.dropout > 0:
        keep = dropout_rng.random(inputs.shape) >= hyper.dropout
        hidden = inputs * keep / (1.0 - hyper.dropout)

    layer_inputs = []
    pre_activations = []
    outputs = []
    penalty = 0.0
    for layer, name in enumerate(hyper.activations):
        weights = params[2 * layer]
        layer_inputs.append(hidden)
        pre = hidden @ weights + params[2 * layer + 1]
        hidden = activate(name, pre)
        pre_activations.append(pre)
        outputs.append(hidden)
        penalty += hyper.kernel_l1[layer] * float(np.abs(weights).sum())
        penalty += hyper.activity_l1[layer] * float(np.abs(hidden).sum()) / n_rows

    eta = hidden @ params[-2] + params[-1]
    nll, d_eta = nll_eta_gradient(family, eta, target)

    grads: list[np.ndarray] = [np.empty(0)] * len(params)
    grads[-2] = hidden.T @ d_eta
    grads[-1] = d_eta.sum(axis=0)
    grad_hidden = d_eta @ params[-2].T
    for layer in reversed(range(len(hyper.activations))):
        grad_hidden = grad_hidden + hyper.activity_l1[layer] * np.sign(outputs[layer]) / n_rows
        grad_pre = activation_backward(
            hyper.activations[layer], pre_activations[layer], outputs[layer], grad_hidden
        )
        weights = params[2 * layer]
        grads[2 * layer] = layer_inputs[layer].T @ grad_pre + hyper.kernel_l1[
            layer
        ] * np.sign(weights)
        grads[2 * layer + 1] = grad_pre.sum(axis=0)
        grad_hidden = grad_pre @ weights.T
    return nll + penalty, grads


def init_probnn_params(
    n_inputs: int,
    hyper: ProbNNHyper,
    head_bias: np.ndarray,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Glorot-uniform weights, zero hidden biases and the given head bias."""
    sizes = [n_inputs, *hyper.widths, head_bias.size]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    params[-1] = np.asarray(head_bias, dtype=np.float64).copy()
    return params


def fit_probnn(
    train: Dataset,
    val: Dataset,
    family: dists.Family | str,
    hyper: ProbNNHyper | abc.Mapping[str, Any],
    rng: np.random.Generator,
    config: TrainingConfig = TrainingConfig(),
    warm_start: ProbNNModel | None = None,
) -> ProbNNModel:
    """Fits a probabilistic network by minibatch Adam with early stopping.

    Args:
        train: Training partition.
        val: Validation partition, used for early stopping only.
        family: The distribution family.
        hyper: A ProbNNHyper or sampled trial hyperparameters.
        rng: Drives initialization, shuffling and dropout.
        config: Epoch limit, patience and batch size.
        warm_start: A previous fit with the same architecture and inputs.

    Returns:
        The parameters with the lowest validation loss.

    Raises:
        FitError: If the loss is not finite for more than 10 consecutive batches.
    """
    family = dists.Family(family)
    if not isinstance(hyper, ProbNNHyper):
        hyper = ProbNNHyper.from_trial(hyper)
    train = train.observed()
    if len(train) < 2:
        raise exceptions.InputError("The network needs at least 2 training rows.")
    selected = _masked_columns(train.features.columns, hyper.mask)
    scaler = fit_input_scaler(train.features.loc[:, selected], stabilize=False)
    inputs = scaler.transform(train.features)
    val_inputs, val_target = _validation_arrays(scaler, val)

    target_center = float(np.mean(train.target))
    target_scale = float(np.std(train.target))
    if not target_scale > 0:
        raise exceptions.FitError("The training target is constant.")
    target = (train.target - target_center) / target_scale
    val_target = (val_target - target_center) / target_scale

    head_bias = initial_intercepts(target, family, robust=False)
    params = init_probnn_params(inputs.shape[1], hyper, head_bias, rng)
    if warm_start is not None and _compatible(warm_start, hyper, scaler):
        params = [param.copy() for param in warm_start.params]

    def val_loss(current: list[np.ndarray]) -> float:
        with np.errstate(all="ignore"):
            eta = probnn_forward(current, hyper, val_inputs)
            return nll_eta_gradient(family, eta, val_target)[0]

    adam = optim.AdamState.initial(params, hyper.learning_rate)
    stopper = optim.EarlyStopState.start(val_loss(params), params, config.patience)
    nan_streak = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(target))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            with np.errstate(all="ignore"):
                loss, grads = probnn_objective(
                    params, hyper, family, inputs[batch], target[batch], rng
                )
            if np.isfinite(loss):
                nan_streak = 0
            else:
                nan_streak += 1
                if nan_streak > MAX_NAN_STREAK:
                    raise exceptions.FitError(
                        f"Network loss was not finite for {nan_streak} consecutive "
                        f"batches in epoch {epoch}."
                    )
            adam, params = optim.adam_step(adam, params, grads)
        stopper, stop = optim.early_stop_update(stopper, val_loss(params), params)
        if stop:
            break

    logger.debug(
        "probNN.%s stopped after %d epochs at validation loss %g.",
        family.value,
        epoch,
        stopper.best_loss,
    )
    return ProbNNModel(
        family,
        hyper,
        scaler,
        target_center,
        target_scale,
        tuple(stopper.snapshot),
        epoch,
        float(stopper.best_loss + np.log(target_scale)),
    )


def predict_probnn(model: ProbNNModel, vector: features.FeatureVector) -> dists.DistParams:
    """The predictive distribution of a delivery period, in EUR/MWh."""
    inputs = model.scaler.transform(_feature_row(vector, model.scaler.names))
    eta = probnn_forward(model.params, model.hyper, inputs)
    theta = [float(value[0]) for value in apply_links(model.family, eta)]
    mu = model.target_center + model.target_scale * theta[0]
    sigma = model.target_scale * theta[1]
    return dists.DistParams(model.family, mu, sigma, *theta[2:])


#####
# artifacts
#####


def model_to_dict(model: NaiveModel | LassoModel | GamlssModel | ProbNNModel) -> dict[str, Any]:
    """A JSON-compatible artifact of a fitted model."""
    return model.to_dict()


def model_from_dict(
    payload: dict[str, Any]
) -> NaiveModel | LassoModel | GamlssModel | ProbNNModel:
    """Restores a fitted model from its artifact."""
    model_id = payload.get("model", "")
    if model_id == "naive":
        return NaiveModel.from_dict(payload)
    if model_id == "lasso":
        return LassoModel.from_dict(payload)
    if model_id.startswith("gamlss."):
        return GamlssModel.from_dict(payload)
    if model_id.startswith("probNN."):
        return ProbNNModel.from_dict(payload)
    raise exceptions.SchemaError(f"Unknown model artifact {model_id!r}.")


def _feature_row(vector: features.FeatureVector, names: abc.Sequence[str]) -> np.ndarray:
    positions = {name: position for position, name in enumerate(vector.names)}
    try:
        row = vector.values[[positions[name] for name in names]]
    except KeyError as exc_info:
        raise exceptions.InputError(
            f"Feature vector lacks model input {exc_info.args[0]}."
        ) from exc_info
    if not np.isfinite(row).all():
        raise exceptions.InputError("Feature vector has non-finite model inputs.")
    return row


def _validation_arrays(scaler: InputScaler, val: Dataset) -> tuple[np.ndarray, np.ndarray]:
    val = val.observed()
    raw = val.features.loc[:, list(scaler.names)].to_numpy(dtype=np.float64)
    complete = np.isfinite(raw).all(axis=1)
    if not complete.any():
        raise exceptions.InputError("The validation partition has no complete rows.")
    return scaler.transform(raw[complete]), val.target[complete]


def _masked_columns(columns: abc.Iterable[str], mask: features.FeatureGroupMask) -> list[str]:
    """Columns of selected groups; columns outside the feature layout are kept."""
    flags = mask.to_dict()
    groups = dict(zip(features.FEATURE_NAMES, features.FEATURE_GROUPS))
    return [name for name in columns if name not in groups or flags[groups[name]]]


def _optional_rate(trial: abc.Mapping[str, Any], flag: str) -> float:
    return float(trial[f"{flag}_rate"]) if trial.get(flag, False) else 0.0


def _compatible(model: ProbNNModel, hyper: ProbNNHyper, scaler: InputScaler) -> bool:
    return model.hyper == hyper and model.scaler.names == scaler.names
