"""Scalar Laplace machinery against closed forms and quadrature."""

import math

import pytest
from scipy.integrate import quad
from scipy.special import gammaln

from flowcast import (
    LaplaceFit,
    ScalarTarget,
    gamma_laplace,
    laplace_interval_integral,
    scalar_laplace,
)
from flowcast.errors import InvalidInputError, NoInteriorModeError, NotAMaximumError


def gamma_log_density(a: float, b: float, normalized: bool = True) -> ScalarTarget:
    const = a * math.log(b) - float(gammaln(a)) if normalized else 0.0

    def logf(x: float) -> float:
        return const + (a - 1.0) * math.log(x) - b * x

    return ScalarTarget(log_density=logf, support=(0.0, math.inf))


class TestGammaLaplace:
    @pytest.mark.parametrize("a,b,mode,variance", [
        (3.0, 2.0, 1.0, 0.5),
        (10.0, 2.0, 4.5, 2.25),
    ])
    def test_stated_values(self, a, b, mode, variance):
        fit = gamma_laplace(a, b)
        assert fit.mode == pytest.approx(mode, abs=1e-15)
        assert fit.variance == pytest.approx(variance, abs=1e-15)

    def test_boundary_mode_rejected(self):
        with pytest.raises(NoInteriorModeError):
            gamma_laplace(1.0, 1.0)
        with pytest.raises(NoInteriorModeError):
            gamma_laplace(0.5, 2.0)

    def test_bad_rate(self):
        with pytest.raises(InvalidInputError):
            gamma_laplace(3.0, 0.0)


class TestScalarLaplace:
    def test_gaussian_exactness(self):
        target = ScalarTarget(lambda x: -((x - 3.0) ** 2) / 8.0)
        fit = scalar_laplace(target, 0.0)
        assert fit.mode == pytest.approx(3.0, abs=1e-10)
        assert fit.variance == pytest.approx(4.0, rel=1e-10)

    def test_matches_gamma_closed_form(self):
        fit = scalar_laplace(gamma_log_density(10.0, 2.0, normalized=False), 1.0)
        exact = gamma_laplace(10.0, 2.0)
        assert fit.mode == pytest.approx(exact.mode, rel=1e-8)
        assert fit.variance == pytest.approx(exact.variance, rel=1e-8)

    @pytest.mark.parametrize("a", [2.0, 5.0, 10.0, 50.0])
    @pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
    def test_agreement_grid(self, a, b):
        exact = gamma_laplace(a, b)
        fit = scalar_laplace(gamma_log_density(a, b), exact.mode * 0.5)
        assert fit.mode == pytest.approx(exact.mode, rel=1e-8)
        assert fit.variance == pytest.approx(exact.variance, rel=1e-8)

    def test_derivative_near_zero_at_mode(self):
        target = gamma_log_density(10.0, 2.0)
        fit = scalar_laplace(target, 1.0)
        h = 1e-6 * max(1.0, abs(fit.mode))
        deriv = (target.log_density(fit.mode + h) - target.log_density(fit.mode - h)) / (2 * h)
        assert abs(deriv) <= 1e-6

    def test_convex_target_is_not_a_maximum(self):
        with pytest.raises(NotAMaximumError):
            scalar_laplace(ScalarTarget(lambda x: x * x), 1.0)

    def test_init_outside_support(self):
        with pytest.raises(InvalidInputError):
            scalar_laplace(gamma_log_density(3.0, 1.0), -1.0)


class TestIntervalIntegral:
    def test_gamma_total_mass(self):
        value = laplace_interval_integral(gamma_log_density(10.0, 2.0), 0.0, math.inf)
        assert abs(value - 1.0) <= 0.03

    def test_gamma_slice_against_quadrature(self):
        target = gamma_log_density(10.0, 2.0)
        value = laplace_interval_integral(target, 3.0, 6.0)
        oracle, err = quad(lambda x: math.exp(target.log_density(x)), 3.0, 6.0)
        assert err < 1e-10
        assert abs(value - oracle) / oracle <= 0.05

    def test_gaussian_exact(self):
        target = ScalarTarget(lambda x: -0.5 * x * x - 0.5 * math.log(2 * math.pi))
        value = laplace_interval_integral(target, -1.0, 1.0)
        exact = math.erf(1.0 / math.sqrt(2.0))
        assert value == pytest.approx(exact, abs=1e-6)

    def test_shifted_gaussian_exact(self):
        mean, var = 2.0, 0.5
        target = ScalarTarget(
            lambda x: -0.5 * (x - mean) ** 2 / var - 0.5 * math.log(2 * math.pi * var)
        )
        value = laplace_interval_integral(target, 1.0, 3.0)
        exact = math.erf(1.0 / math.sqrt(2 * var))
        assert value == pytest.approx(exact, abs=1e-6)

    def test_bad_interval(self):
        with pytest.raises(InvalidInputError):
            laplace_interval_integral(gamma_log_density(3.0, 1.0), 2.0, 2.0)

    def test_interval_outside_support(self):
        with pytest.raises(InvalidInputError):
            laplace_interval_integral(gamma_log_density(3.0, 1.0), -5.0, -1.0)


def test_laplace_fit_is_plain_data():
    fit = LaplaceFit(mode=1.0, variance=2.0)
    assert (fit.mode, fit.variance) == (1.0, 2.0)
