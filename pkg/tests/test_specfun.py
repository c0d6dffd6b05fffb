"""Bessel functions, their zeros and the bracketed root finder, checked against scipy.special."""

import math

import numpy as np
import pytest
from scipy import special

from models.errors import BracketError, DomainError, EvaluationError
from tests.conftest import J0_FIRST_ZERO, J1_PRIME_FIRST_ZERO
from utils.specfun import (
    SERIES_CUTOFF,
    bessel_j,
    bessel_j_prime,
    bessel_j_zero_prime,
    dirichlet_radial_root,
    find_root,
    neumann_radial_root,
)

ORDERS = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0]
ARGUMENTS = [0.1, 1.0, 2.5, 5.0, 7.9, SERIES_CUTOFF, 8.1, 12.0, 30.0, 100.0]


class TestBesselJ:
    @pytest.mark.parametrize("order", ORDERS)
    def test_matches_scipy(self, order):
        ours = [bessel_j(order, x) for x in ARGUMENTS]
        np.testing.assert_allclose(ours, special.jv(order, ARGUMENTS), rtol=0, atol=1e-11)

    @pytest.mark.parametrize("order", [0.0, 1.0, 2.5])
    def test_derivative_matches_scipy(self, order):
        ours = [bessel_j_prime(order, x) for x in ARGUMENTS]
        np.testing.assert_allclose(ours, special.jvp(order, ARGUMENTS), rtol=0, atol=1e-11)

    def test_values_at_origin(self):
        assert bessel_j(0, 0.0) == 1.0
        assert bessel_j(2.5, 0.0) == 0.0
        assert bessel_j_prime(0, 0.0) == 0.0
        assert bessel_j_prime(1, 0.0) == 0.5
        assert bessel_j_prime(3, 0.0) == 0.0

    def test_first_zeros(self):
        assert abs(bessel_j(0, 2.4048255577)) < 1e-9
        assert abs(bessel_j_prime(1, 1.8411837813)) < 1e-9

    def test_half_integer_closed_form(self):
        # d/dx sqrt(2/(pi x)) sin x at x = pi
        np.testing.assert_allclose(bessel_j_prime(0.5, math.pi), -math.sqrt(2.0) / math.pi, atol=1e-12)
        np.testing.assert_allclose(
            bessel_j(0.5, 20.0), math.sqrt(2.0 / (math.pi * 20.0)) * math.sin(20.0), atol=1e-12
        )

    def test_wronskian_type_identity(self):
        for nu in (0.0, 1.0, 2.5):
            for x in (0.7, 3.3, 9.5, 40.0):
                j0, j1 = bessel_j(nu, x), bessel_j(nu + 1, x)
                d0, d1 = bessel_j_prime(nu, x), bessel_j_prime(nu + 1, x)
                lhs = j0 * d1 - d0 * j1 + j0 * j1 / x
                rhs = j0 ** 2 + j1 ** 2 - (2.0 * nu / x) * j0 * j1
                assert abs(lhs - rhs) < 1e-11

    def test_random_recurrence_and_derivative(self):
        rng = np.random.default_rng(2024)
        orders = rng.uniform(0.0, 5.0, 1000)
        arguments = 30.0 * (1.0 - rng.random(1000))
        for nu, x in zip(orders, arguments):
            j0, j1, j2 = bessel_j(nu, x), bessel_j(nu + 1, x), bessel_j(nu + 2, x)
            middle = 2.0 * (nu + 1) / x * j1
            assert abs(j0 + j2 - middle) <= 1e-10 * max(abs(j0), abs(j2), abs(middle)), (nu, x)
            derivative = bessel_j_prime(nu + 1, x)
            lowered = j0 - (nu + 1) / x * j1
            assert abs(derivative - lowered) <= 1e-10 * max(abs(j0), abs(lowered), abs(derivative)), (nu, x)

    @pytest.mark.parametrize("order, x", [(-1.0, 1.0), (0.0, -0.5), (0.0, 2.0e4), (float("nan"), 1.0)])
    def test_domain_errors(self, order, x):
        with pytest.raises(DomainError):
            bessel_j(order, x)

    def test_unbounded_derivative_at_origin(self):
        with pytest.raises(DomainError):
            bessel_j_prime(0.5, 0.0)


class TestFindRoot:
    def test_bessel_roots(self):
        root = find_root(lambda x: bessel_j_prime(1, x), 1.5, 2.5, 1e-12)
        assert abs(root - 1.8411837813) < 1e-10
        root = find_root(lambda x: bessel_j(0, x), 2.0, 3.0, 1e-12)
        assert abs(root - 2.4048255577) < 1e-10

    def test_repeatable(self):
        runs = [find_root(lambda x: bessel_j(2.5, x), 5.0, 7.0, 1e-13) for _ in range(3)]
        assert runs[0] == runs[1] == runs[2]
        assert find_root(math.cos, 1.0, 2.0, 1e-14) == find_root(math.cos, 1.0, 2.0, 1e-14)

    def test_endpoint_root(self):
        assert find_root(lambda x: x - 1.0, 1.0, 2.0, 1e-12) == 1.0

    def test_no_sign_change(self):
        with pytest.raises(BracketError):
            find_root(lambda x: x * x + 1.0, -1.0, 1.0, 1e-12)

    def test_empty_bracket(self):
        with pytest.raises(BracketError):
            find_root(lambda x: x, 1.0, 1.0, 1e-12)

    def test_non_finite_value(self):
        with pytest.raises(EvaluationError):
            find_root(lambda x: float("nan") if x > 0.2 else -1.0, 0.0, 1.0, 1e-12)

    def test_steep_function(self):
        root = find_root(lambda x: math.tanh(50.0 * (x - 0.3)), 0.0, 1.0, 1e-13)
        assert abs(root - 0.3) < 1e-12


class TestZeros:
    def test_derivative_zeros(self):
        assert abs(bessel_j_zero_prime(1.0, 1) - special.jnp_zeros(1, 1)[0]) < 1e-12
        assert abs(bessel_j_zero_prime(2.0, 2) - special.jnp_zeros(2, 2)[1]) < 1e-12

    def test_disk_roots(self):
        assert abs(neumann_radial_root(2) - J1_PRIME_FIRST_ZERO) < 1e-12
        assert abs(dirichlet_radial_root(2) - J0_FIRST_ZERO) < 1e-12

    def test_ball_roots(self):
        # first nonzero Neumann root of the unit ball in R^3; J_{1/2} vanishes at pi
        assert abs(neumann_radial_root(3) - 2.0815759778) < 1e-9
        assert abs(dirichlet_radial_root(3) - math.pi) < 1e-12

    def test_bad_index(self):
        with pytest.raises(DomainError):
            bessel_j_zero_prime(1.0, 0)
        with pytest.raises(DomainError):
            neumann_radial_root(1)
