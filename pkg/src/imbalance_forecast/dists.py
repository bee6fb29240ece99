""" Location-scale Normal and Student-t distributions.

Densities, distribution functions, quantiles and analytic log-likelihood
gradients with respect to the location `mu`, the scale `sigma` and, for the
Student-t family, the tail weight `tau`.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
from typing import Any

import numpy as np
from scipy import optimize, special

from imbalance_forecast import exceptions, logs

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

QUANTILE_XTOL = 1e-12
_MAX_BRACKET_DOUBLINGS = 2000


class Family(str, enum.Enum):
    NORMAL = "N"
    STUDENT_T = "t"

    @property
    def n_params(self) -> int:
        """Number of distribution parameters."""
        return 2 if self == Family.NORMAL else 3


@dataclasses.dataclass(frozen=True)
class DistParams:
    """A fitted predictive distribution.

    Attributes:
        family: Normal or Student-t.
        mu: Location in EUR/MWh.
        sigma: Scale in EUR/MWh, positive.
        tau: Degrees of freedom, positive; present for the Student-t family only.
    """

    family: Family
    mu: float
    sigma: float
    tau: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma)):
            raise exceptions.DomainError("Distribution parameters must be finite.")
        if self.sigma <= 0:
            raise exceptions.DomainError(f"Scale {self.sigma} is not positive.")
        if self.family == Family.STUDENT_T:
            if self.tau is None or not np.isfinite(self.tau) or self.tau <= 0:
                raise exceptions.DomainError(f"Tail weight {self.tau} is not positive.")
        elif self.tau is not None:
            raise exceptions.DomainError("The Normal family has no tail weight.")

    @property
    def heavy_tail_flag(self) -> bool:
        """Whether the mean does not exist, so the location stands in for it."""
        return self.family == Family.STUDENT_T and self.tau <= 1  # type: ignore[operator]

    @property
    def mean_summary(self) -> float:
        return self.mu

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self) | {"family": self.family.value}


def log_density(params: DistParams, y: np.ndarray | float) -> np.ndarray:
    """Log-density at `y`."""
    return _log_density(params.family, params.mu, params.sigma, params.tau, y)


def cdf(params: DistParams, y: np.ndarray | float) -> np.ndarray:
    """Distribution function at `y`."""
    z = (np.asarray(y, dtype=np.float64) - params.mu) / params.sigma
    if params.family == Family.NORMAL:
        return special.ndtr(z)
    return _standard_t_cdf(z, params.tau)  # type: ignore[arg-type]


def quantile(params: DistParams, prob: float) -> float:
    """The value q with cdf(q) = prob.

    Raises:
        DomainError: If prob is not in (0, 1).
    """
    if not 0 < prob < 1:
        raise exceptions.DomainError(f"Probability {prob} is not in (0, 1).")
    if params.family == Family.NORMAL:
        return float(params.mu + params.sigma * special.ndtri(prob))
    tau: float = params.tau  # type: ignore[assignment]
    return float(params.mu + params.sigma * standard_t_quantile(prob, tau))


def quantiles(params: DistParams, probs: np.ndarray) -> np.ndarray:
    """Quantiles for several probabilities."""
    probs = np.asarray(probs, dtype=np.float64)
    if params.family == Family.NORMAL:
        if ((probs <= 0) | (probs >= 1)).any():
            raise exceptions.DomainError("Probabilities must lie in (0, 1).")
        return params.mu + params.sigma * special.ndtri(probs)
    return np.array([quantile(params, float(prob)) for prob in probs])


def standard_t_quantile(prob: float, tau: float) -> float:
    """Quantile of the standard Student-t by bracketed root finding."""
    if prob == 0.5:
        return 0.0

    def excess(z: float) -> float:
        return float(_standard_t_cdf(np.float64(z), tau)) - prob

    width = 1.0
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        if excess(-width) < 0 < excess(width):
            break
        width *= 2.0
    else:
        raise exceptions.DomainError(f"Could not bracket the t quantile at {prob}.")
    return float(optimize.brentq(excess, -width, width, xtol=QUANTILE_XTOL, rtol=1e-15))


def loglik_grad(params: DistParams, y: float) -> np.ndarray:
    """Gradient of the log-density at `y` with respect to (mu, sigma[, tau])."""
    _, grads = loglik_and_grads(params.family, params.mu, params.sigma, params.tau, y)
    return np.array([float(np.asarray(grad)) for grad in grads])


def loglik_and_grads(
    family: Family,
    mu: np.ndarray | float,
    sigma: np.ndarray | float,
    tau: np.ndarray | float | None,
    y: np.ndarray | float,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Elementwise log-density and its partial derivatives.

    Args:
        family: The distribution family.
        mu: Locations.
        sigma: Positive scales.
        tau: Positive tail weights for the Student-t family, else None.
        y: Observations.

    Returns:
        The log-densities and the list of derivatives with respect to mu,
        sigma and, for the Student-t family, tau.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if (sigma <= 0).any():
        raise exceptions.DomainError("Scales must be positive.")
    z = (y - mu) / sigma
    logpdf = _log_density(family, mu, sigma, tau, y)
    if family == Family.NORMAL:
        return logpdf, [z / sigma, (z**2 - 1.0) / sigma]

    tau = np.asarray(tau, dtype=np.float64)
    if (tau <= 0).any():
        raise exceptions.DomainError("Tail weights must be positive.")
    weight = (tau + 1.0) / (tau + z**2)
    d_mu = weight * z / sigma
    d_sigma = (weight * z**2 - 1.0) / sigma
    d_tau = 0.5 * (
        special.digamma((tau + 1.0) / 2.0)
        - special.digamma(tau / 2.0)
        - 1.0 / tau
        - np.log1p(z**2 / tau)
        + (tau + 1.0) * z**2 / (tau * (tau + z**2))
    )
    return logpdf, [d_mu, d_sigma, d_tau]


def softplus(x: np.ndarray | float) -> np.ndarray:
    """log(1 + exp(x)), strictly positive for finite input."""
    x = np.asarray(x, dtype=np.float64)
    out = np.logaddexp(0.0, x)
    return np.maximum(out, np.finfo(np.float64).tiny)


def softplus_grad(x: np.ndarray | float) -> np.ndarray:
    return special.expit(x)


def softplus_inverse(y: np.ndarray | float) -> np.ndarray:
    """Inverse of the softplus link for positive `y`."""
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def sample(params: DistParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random draws from the distribution."""
    if params.family == Family.NORMAL:
        return params.mu + params.sigma * rng.standard_normal(size)
    return params.mu + params.sigma * rng.standard_t(params.tau, size)


def _log_density(
    family: Family,
    mu: np.ndarray | float,
    sigma: np.ndarray | float,
    tau: np.ndarray | float | None,
    y: np.ndarray | float,
) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if (sigma <= 0).any():
        raise exceptions.DomainError("Scales must be positive.")
    z = (np.asarray(y, dtype=np.float64) - mu) / sigma
    if family == Family.NORMAL:
        return -0.5 * np.log(2.0 * np.pi) - np.log(sigma) - 0.5 * z**2
    tau = np.asarray(tau, dtype=np.float64)
    return (
        special.gammaln((tau + 1.0) / 2.0)
        - special.gammaln(tau / 2.0)
        - 0.5 * np.log(np.pi * tau)
        - np.log(sigma)
        - 0.5 * (tau + 1.0) * np.log1p(z**2 / tau)
    )


def _standard_t_cdf(z: np.ndarray, tau: float) -> np.ndarray:
    """Student-t distribution function through the regularized incomplete beta."""
    z = np.asarray(z, dtype=np.float64)
    tail = 0.5 * special.betainc(tau / 2.0, 0.5, tau / (tau + z**2))
    return np.where(z > 0, 1.0 - tail, tail)
