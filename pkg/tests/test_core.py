import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from distopt.core import (
    Allocation,
    DegenerateConstraintError,
    GradientPair,
    PriceVector,
    ResourceVector,
    SubsystemSpec,
    UsageError,
    least_squares_multipliers,
    null_space_basis,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_multiplier_single_input_is_minus_ratio():
    # one input, one resource: gamma + phi*lam = 0 exactly
    assert least_squares_multipliers([3.0], [[2.0]]) == pytest.approx([-1.5])


def test_multiplier_matches_lstsq(rng):
    for _ in range(20):
        n, m = rng.integers(1, 6), 1
        m = int(rng.integers(1, n + 1))
        phi = rng.normal(size=(n, m))
        gamma = rng.normal(size=n)
        expected = np.linalg.lstsq(phi, -gamma, rcond=None)[0]
        np.testing.assert_allclose(least_squares_multipliers(gamma, phi), expected, rtol=1e-9, atol=1e-12)


def test_multiplier_regularises_near_singular():
    phi = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-12], [0.0, 0.0]])
    lam, reg = least_squares_multipliers([1.0, 1.0, 0.0], phi, full_output=True)
    assert reg
    assert np.all(np.isfinite(lam))


def test_multiplier_rejects_zero_phi_and_bad_shapes():
    with pytest.raises(DegenerateConstraintError):
        least_squares_multipliers([1.0, 2.0], np.zeros((2, 1)))
    with pytest.raises(UsageError):
        least_squares_multipliers([1.0], np.ones((1, 2)))  # n < m
    with pytest.raises(UsageError):
        least_squares_multipliers([1.0, np.nan], np.ones((2, 1)))


@settings(max_examples=60, deadline=None)
@given(arrays(float, (4, 2), elements=finite))
def test_null_space_is_orthonormal_complement(phi):
    try:
        basis = null_space_basis(phi)
    except DegenerateConstraintError:
        return
    assert basis.shape == (4, 2)
    np.testing.assert_allclose(phi.T @ basis, 0.0, atol=1e-9 * max(1.0, np.abs(phi).max()))
    np.testing.assert_allclose(basis.T @ basis, np.eye(2), atol=1e-12)


def test_null_space_square_is_empty_and_sign_fixed():
    assert null_space_basis(np.eye(2)).shape == (2, 0)
    b = null_space_basis(np.array([[1.0], [1.0]]))
    np.testing.assert_allclose(np.abs(b[:, 0]), [2 ** -0.5] * 2)
    assert b[np.flatnonzero(np.abs(b[:, 0]) > 1e-12)[0], 0] > 0


def test_null_space_rank_deficient():
    with pytest.raises(DegenerateConstraintError):
        null_space_basis(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]))


def test_value_types_validate():
    assert ResourceVector([1, 2]).m == 2
    with pytest.raises(UsageError):
        PriceVector([-1.0])
    with pytest.raises(UsageError):
        ResourceVector([np.inf])
    a = Allocation([[1.0], [2.0]])
    assert a.total() == pytest.approx([3.0])
    assert a.within([3.0]) and not a.within([2.9])
    gp = GradientPair([1.0, 2.0], [1.0, 1.0])
    assert gp.phi.shape == (2, 1)
    with pytest.raises(UsageError):
        GradientPair([1.0], np.ones((2, 1)))


def test_subsystem_spec():
    spec = SubsystemSpec(0, 2, 1, (0, 0), (1, 1))
    assert spec.supports_primal()
    with pytest.raises(UsageError):
        SubsystemSpec(0, 1, 1, (2.0,), (1.0,))
    with pytest.raises(UsageError):
        SubsystemSpec(0, 0, 1, (), ())
