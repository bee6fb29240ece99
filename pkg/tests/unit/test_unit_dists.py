""" Unit tests for the dists module. """
import numpy as np
import pytest
from scipy import integrate, stats

from imbalance_forecast import dists, exceptions

PROBS = np.linspace(0.01, 0.99, 99)


def _finite_difference(params: dists.DistParams, y: float, h: float = 1e-5) -> np.ndarray:
    values = [params.mu, params.sigma] + ([params.tau] if params.tau is not None else [])
    grad = []
    for position in range(len(values)):
        up, down = list(values), list(values)
        up[position] += h
        down[position] -= h
        grad.append(
            (
                float(dists.log_density(dists.DistParams(params.family, *up), y))
                - float(dists.log_density(dists.DistParams(params.family, *down), y))
            )
            / (2 * h)
        )
    return np.array(grad)


def test_normal_log_density_at_mode() -> None:
    """Test the standard Normal log-density at zero."""
    params = dists.DistParams(dists.Family.NORMAL, 0.0, 1.0)

    assert float(dists.log_density(params, 0.0)) == pytest.approx(-0.9189385, abs=1e-7)


def test_student_t_is_symmetric() -> None:
    """Test that the density is symmetric around the location."""
    params = dists.DistParams(dists.Family.STUDENT_T, 30.0, 4.0, 2.5)

    assert float(dists.log_density(params, 37.0)) == pytest.approx(
        float(dists.log_density(params, 23.0))
    )


def test_student_t_approaches_normal() -> None:
    """Test that a huge tail weight matches the Normal density."""
    student = dists.DistParams(dists.Family.STUDENT_T, 0.0, 1.0, 1e6)
    normal = dists.DistParams(dists.Family.NORMAL, 0.0, 1.0)

    assert float(dists.log_density(student, 1.0)) == pytest.approx(
        float(dists.log_density(normal, 1.0)), abs=1e-4
    )


def test_student_t_matches_scipy() -> None:
    """Test the Student-t density and distribution function against scipy."""
    params = dists.DistParams(dists.Family.STUDENT_T, 5.0, 2.0, 3.0)
    y = np.linspace(-30.0, 40.0, 15)

    np.testing.assert_allclose(
        dists.log_density(params, y), stats.t.logpdf(y, 3.0, loc=5.0, scale=2.0), rtol=1e-10
    )
    np.testing.assert_allclose(
        dists.cdf(params, y), stats.t.cdf(y, 3.0, loc=5.0, scale=2.0), atol=1e-12
    )


@pytest.mark.parametrize(
    ("family", "mu", "sigma", "tau"),
    [
        ("N", 0.0, 0.0, None),
        ("N", 0.0, -1.0, None),
        ("N", np.nan, 1.0, None),
        ("t", 0.0, 1.0, None),
        ("t", 0.0, 1.0, 0.0),
        ("N", 0.0, 1.0, 3.0),
    ],
)
def test_invalid_params(family: str, mu: float, sigma: float, tau: float | None) -> None:
    """Test that invalid parameters are domain errors."""
    with pytest.raises(exceptions.DomainError):
        dists.DistParams(family, mu, sigma, tau)


def test_normal_quantiles() -> None:
    """Test the median and the 97.5% point of the Normal."""
    assert dists.quantile(dists.DistParams("N", 12.0, 3.0), 0.5) == pytest.approx(12.0)
    assert dists.quantile(dists.DistParams("N", 0.0, 1.0), 0.975) == pytest.approx(
        1.959964, abs=1e-6
    )


@pytest.mark.parametrize(
    "params",
    [
        dists.DistParams("N", 40.0, 15.0),
        dists.DistParams("t", 40.0, 15.0, 0.7),
        dists.DistParams("t", -10.0, 2.0, 4.0),
        dists.DistParams("t", 0.0, 1.0, 200.0),
    ],
)
def test_quantile_inverts_cdf(params: dists.DistParams) -> None:
    """Test that the distribution function at each quantile gives back its probability."""
    values = dists.quantiles(params, PROBS)

    np.testing.assert_allclose(dists.cdf(params, values), PROBS, atol=1e-8)
    assert (np.diff(values) > 0).all()


@pytest.mark.parametrize("tau", [0.5, 1.0, 2.5, 30.0])
def test_standard_t_quantile_matches_scipy(tau: float) -> None:
    """Test the root-finding quantile against scipy."""
    actual = [dists.standard_t_quantile(prob, tau) for prob in (0.01, 0.2, 0.5, 0.9, 0.99)]

    np.testing.assert_allclose(actual, stats.t.ppf([0.01, 0.2, 0.5, 0.9, 0.99], tau), rtol=1e-8)


def test_location_scale_equivariance() -> None:
    """Test that quantiles shift and scale with the location and scale."""
    standard = dists.DistParams("t", 0.0, 1.0, 3.0)
    shifted = dists.DistParams("t", 25.0, 4.0, 3.0)

    np.testing.assert_allclose(
        dists.quantiles(shifted, PROBS), 25.0 + 4.0 * dists.quantiles(standard, PROBS), atol=1e-8
    )


@pytest.mark.parametrize("prob", [0.0, 1.0, -0.2, 1.5])
def test_quantile_outside_unit_interval(prob: float) -> None:
    """Test that probabilities outside (0, 1) are rejected."""
    with pytest.raises(exceptions.DomainError):
        dists.quantile(dists.DistParams("t", 0.0, 1.0, 3.0), prob)
    with pytest.raises(exceptions.DomainError):
        dists.quantiles(dists.DistParams("N", 0.0, 1.0), np.array([0.5, prob]))


def test_normal_density_integrates_to_one() -> None:
    """Test the Normal density integral over fifty scales either side."""
    params = dists.DistParams("N", 3.0, 2.0)

    total, _ = integrate.quad(
        lambda y: float(np.exp(dists.log_density(params, y))), -97.0, 103.0, points=[3.0]
    )

    assert total == pytest.approx(1.0, abs=1e-6)


def test_cdf_is_nondecreasing() -> None:
    """Test the monotonicity of the Student-t distribution function."""
    params = dists.DistParams("t", 0.0, 1.0, 1.5)

    values = dists.cdf(params, np.linspace(-1e4, 1e4, 2001))

    assert (np.diff(values) >= 0).all()
    assert float(dists.cdf(params, -1e12)) == pytest.approx(0.0, abs=1e-6)
    assert float(dists.cdf(params, 1e12)) == pytest.approx(1.0, abs=1e-6)


def test_normal_gradient_at_mode() -> None:
    """Test that the location derivative vanishes at the location."""
    grad = dists.loglik_grad(dists.DistParams("N", 7.0, 2.0), 7.0)

    assert grad[0] == 0.0
    assert grad[1] == pytest.approx(-0.5)


@pytest.mark.parametrize("family", ["N", "t"])
def test_gradients_match_finite_differences(family: str) -> None:
    """Test analytic gradients against central differences."""
    rng = np.random.default_rng(5)
    for _ in range(200):
        tau = float(rng.uniform(0.5, 20.0)) if family == "t" else None
        params = dists.DistParams(
            family, float(rng.normal(40.0, 20.0)), float(rng.uniform(0.5, 5.0)), tau
        )
        y = params.mu + params.sigma * float(rng.normal(0.0, 3.0))

        np.testing.assert_allclose(
            dists.loglik_grad(params, y), _finite_difference(params, y), rtol=1e-6, atol=1e-7
        )


def test_tail_observation_favours_heavier_tails() -> None:
    """Test that a far tail observation pushes the tail weight down."""
    grad = dists.loglik_grad(dists.DistParams("t", 0.0, 1.0, 5.0), 50.0)

    assert grad[2] < 0


def test_vectorized_gradients_match_scalar() -> None:
    """Test that the elementwise gradients agree with the scalar version."""
    mu = np.array([0.0, 10.0])
    sigma = np.array([1.0, 3.0])
    tau = np.array([2.0, 7.0])
    y = np.array([1.5, -4.0])

    logpdf, grads = dists.loglik_and_grads(dists.Family.STUDENT_T, mu, sigma, tau, y)

    for position in range(2):
        params = dists.DistParams("t", mu[position], sigma[position], tau[position])
        assert logpdf[position] == pytest.approx(float(dists.log_density(params, y[position])))
        np.testing.assert_allclose(
            [grad[position] for grad in grads], dists.loglik_grad(params, y[position])
        )


def test_heavy_tail_flag() -> None:
    """Test that the location stands in for a missing mean."""
    heavy = dists.DistParams("t", 4.0, 1.0, 0.8)

    assert heavy.heavy_tail_flag
    assert heavy.mean_summary == 4.0
    assert not dists.DistParams("t", 4.0, 1.0, 1.5).heavy_tail_flag
    assert not dists.DistParams("N", 4.0, 1.0).heavy_tail_flag


def test_softplus_inverse() -> None:
    """Test the softplus link and its inverse."""
    x = np.array([-20.0, -1.0, 0.0, 3.0, 40.0])

    np.testing.assert_allclose(dists.softplus_inverse(dists.softplus(x)), x, rtol=1e-6)
    assert (dists.softplus(np.array([-800.0])) > 0).all()
