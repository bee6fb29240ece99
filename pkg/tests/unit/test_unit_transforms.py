""" Unit tests for the transforms module. """
import numpy as np
import pytest
import pytest_mock

from imbalance_forecast import exceptions, transforms


def test_standardize_small_sample() -> None:
    """Test the mean and sample standard deviation of 1, 2, 3."""
    params = transforms.fit_transform([1.0, 2.0, 3.0], "standardize")

    assert params.center == pytest.approx(2.0)
    assert params.scale == pytest.approx(1.0)
    np.testing.assert_allclose(transforms.apply(params, [1.0, 2.0, 3.0]), [-1.0, 0.0, 1.0])


def test_asinh_symmetric_sample() -> None:
    """Test the median and normalized MAD of a symmetric sample."""
    params = transforms.fit_transform([-2.0, -1.0, 0.0, 1.0, 2.0], transforms.TransformKind.ASINH)

    assert params.center == 0.0
    assert params.scale == pytest.approx(transforms.MAD_NORMALIZER)
    assert float(transforms.apply(params, 0.0)) == 0.0


def test_constant_values_floor_the_scale(mocker: pytest_mock.MockFixture) -> None:
    """Test that a constant column gets the minimum scale and a warning."""
    spy_warning = mocker.spy(transforms.logger, "warning")

    params = transforms.fit_transform(np.full(10, 7.0), "asinh")

    assert params.scale == transforms.SCALE_FLOOR
    spy_warning.assert_called_once()


@pytest.mark.parametrize("kind", ["asinh", "standardize"])
def test_invert_undoes_apply(kind: str) -> None:
    """Test that inverting the transformed values recovers the inputs."""
    rng = np.random.default_rng(0)
    values = rng.standard_t(2.0, 500) * 30.0 + 40.0
    params = transforms.fit_transform(values, kind)

    np.testing.assert_allclose(
        transforms.invert(params, transforms.apply(params, values)), values, rtol=1e-9, atol=1e-9
    )


def test_asinh_compresses_spikes() -> None:
    """Test that an extreme price lands at a moderate transformed value."""
    rng = np.random.default_rng(1)
    params = transforms.fit_transform(rng.normal(40.0, 10.0, 1000), "asinh")

    assert abs(float(transforms.apply(params, 20000.0))) < 15.0


def test_non_finite_values_are_ignored() -> None:
    """Test that fitting skips missing values."""
    params = transforms.fit_transform([1.0, np.nan, 2.0, np.inf, 3.0], "standardize")

    assert params.center == pytest.approx(2.0)


@pytest.mark.parametrize("values", [[], [1.0], [np.nan, 4.0]])
def test_too_few_values(values: list[float]) -> None:
    """Test that fewer than two finite values cannot be fitted."""
    with pytest.raises(exceptions.InputError):
        transforms.fit_transform(values, "standardize")


def test_params_validation_and_dict() -> None:
    """Test that parameters validate their scale and survive a dict conversion."""
    params = transforms.TransformParams("asinh", 1.5, 2.0)

    assert transforms.TransformParams.from_dict(params.to_dict()) == params
    with pytest.raises(exceptions.InputError):
        transforms.TransformParams("asinh", 0.0, 0.0)
