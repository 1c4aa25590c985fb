import numpy as np
import pytest

from distopt.core import InputError, UsageError
from distopt.gradients import (
    GradientProvider,
    local_controlled_variable,
    local_gradients,
    opportunity_cost,
    reduced_gradient,
)
from distopt.models import QuadraticSubsystem


def quad():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    return QuadraticSubsystem(H, [1.0, -1.0], [[1.0, 2.0]], [-5, -5], [5, 5])


def test_fd_matches_analytic_on_quadratic(rng):
    m = quad()
    for _ in range(20):
        u = rng.uniform(-4, 4, 2)
        a = local_gradients(GradientProvider(m), u, {})
        f = local_gradients(GradientProvider(m, "fd", 1e-4), u, {})
        # central differences are exact for quadratics up to rounding
        np.testing.assert_allclose(f.gamma, a.gamma, atol=1e-8)
        np.testing.assert_allclose(f.phi, a.phi, atol=1e-8)


def test_fd_stencil_must_stay_in_domain():
    with pytest.raises(InputError):
        local_gradients(GradientProvider(quad(), "fd", 1e-3), np.array([5.0, 0.0]), {})


def test_provider_validation():
    with pytest.raises(UsageError):
        GradientProvider(quad(), "magic")
    with pytest.raises(UsageError):
        GradientProvider(quad(), "fd", 0.0)


def test_controlled_variable():
    c = local_controlled_variable([1.0, 2.0], [[1.0], [2.0]], [0.5])
    np.testing.assert_allclose(c, [1.5, 3.0])
    c = local_controlled_variable([1.0], [[1.0]], [0.5], grad_h=[[2.0]], mu=[0.25])
    np.testing.assert_allclose(c, [2.0])
    with pytest.raises(UsageError):
        local_controlled_variable([1.0], [[1.0]], [0.5, 0.5])


def test_reduced_gradient_and_opportunity_cost():
    gamma, phi = np.array([3.0, 1.0]), np.array([[1.0], [1.0]])
    # null space of [1, 1] is (1, -1)/sqrt 2
    assert reduced_gradient(gamma, phi) == pytest.approx([2.0 / np.sqrt(2.0)])
    assert opportunity_cost(gamma, phi) == pytest.approx([-2.0])
    lam, reg = opportunity_cost([4.0], [[2.0]], full_output=True)
    assert lam == pytest.approx([-2.0]) and not reg
