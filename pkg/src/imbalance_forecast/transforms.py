""" Variance-stabilizing transformations fitted on training data. """
from __future__ import annotations

import dataclasses
import enum
import logging
from typing import Any

import numpy as np

from imbalance_forecast import exceptions, logs

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

MAD_NORMALIZER = 1.4826
SCALE_FLOOR = 1e-8


class TransformKind(str, enum.Enum):
    ASINH = "asinh"
    STANDARDIZE = "standardize"


@dataclasses.dataclass(frozen=True)
class TransformParams:
    """A fitted transformation.

    Attributes:
        kind: asinh uses the median and normalized MAD; standardize uses the
            mean and sample standard deviation.
        center: Subtracted before scaling.
        scale: Positive divisor.
    """

    kind: TransformKind
    center: float
    scale: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TransformKind(self.kind))
        if not (np.isfinite(self.center) and np.isfinite(self.scale)):
            raise exceptions.InputError("Transform parameters must be finite.")
        if self.scale <= 0:
            raise exceptions.InputError(f"Transform scale {self.scale} is not positive.")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "center": self.center, "scale": self.scale}

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> TransformParams:
        return cls(
            TransformKind(payload["kind"]), float(payload["center"]), float(payload["scale"])
        )


def fit_transform(
    train_values: np.ndarray | list[float], kind: TransformKind | str
) -> TransformParams:
    """Fits a transformation to training values.

    Args:
        train_values: The training slice only. Non-finite entries are ignored.
        kind: asinh or standardize.

    Returns:
        The fitted parameters. A degenerate scale is floored at 1e-8.

    Raises:
        InputError: With fewer than two finite values.
    """
    kind = TransformKind(kind)
    values = np.asarray(train_values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size < 2:
        raise exceptions.InputError("Fitting a transform needs at least two finite values.")

    if kind == TransformKind.ASINH:
        center = float(np.median(values))
        scale = float(np.median(np.abs(values - center)) * MAD_NORMALIZER)
    else:
        center = float(np.mean(values))
        scale = float(np.std(values, ddof=1))

    if scale < SCALE_FLOOR:
        logger.warning("Degenerate %s scale %g floored at %g.", kind.value, scale, SCALE_FLOOR)
        scale = SCALE_FLOOR
    return TransformParams(kind, center, scale)


def apply(params: TransformParams, x: np.ndarray | float) -> np.ndarray:
    """Maps values to the transformed scale."""
    x = np.asarray(x, dtype=np.float64)
    _warn_non_finite(x, "apply")
    z = (x - params.center) / params.scale
    if params.kind == TransformKind.ASINH:
        return np.arcsinh(z)
    return z


def invert(params: TransformParams, z: np.ndarray | float) -> np.ndarray:
    """Maps transformed values back to the original scale."""
    z = np.asarray(z, dtype=np.float64)
    _warn_non_finite(z, "invert")
    if params.kind == TransformKind.ASINH:
        z = np.sinh(z)
    return params.center + params.scale * z


def _warn_non_finite(values: np.ndarray, operation: str) -> None:
    if not np.isfinite(values).all():
        logger.warning(
            "%s received %d non-finite values.", operation, int((~np.isfinite(values)).sum())
        )
