import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distopt.control import (
    CONSTRAINT,
    GRADIENT,
    PiState,
    clamped_integral_step,
    min_select,
    pi_step,
    pi_track,
)
from distopt.core import UsageError


def pi(**kw):
    base = dict(kp=0.5, ki=0.2, integral=1.0, lo=-10.0, hi=10.0, kaw=0.0)
    base.update(kw)
    return PiState(**base)


def test_pi_step_by_hand():
    out, s = pi_step(pi(), setpoint=2.0, measurement=1.0, dt=0.5)
    # e = 1, integral = 1 + 0.2*1*0.5 = 1.1, out = 0.5*1 + 1.1
    assert s.integral == pytest.approx(1.1)
    assert out == pytest.approx(1.6)


def test_pi_saturation_and_back_calculation():
    out, s = pi_step(pi(hi=1.2, kaw=1.0), 2.0, 1.0, 0.5)
    assert out == 1.2
    # integral 1.1 pulled back by kaw*(1.2 - 1.6)*dt
    assert s.integral == pytest.approx(1.1 - 0.2)


def test_pi_without_anti_windup_keeps_integrating():
    s = pi(hi=1.2)
    for _ in range(50):
        out, s = pi_step(s, 2.0, 1.0, 1.0)
    assert out == 1.2
    assert s.integral == pytest.approx(1.0 + 50 * 0.2)


def test_integrator_converges_first_order():
    # plant y = u; pure integral loop has pole 1 - ki*dt
    s, y = pi(kp=0.0, ki=0.3, integral=0.0), 0.0
    for _ in range(100):
        y, s = pi_step(s, 5.0, y, 1.0)
    assert y == pytest.approx(5.0, abs=1e-10)


def test_pi_track():
    s = pi(kaw=0.5)
    t = pi_track(s, own_output=3.0, applied=2.0, dt=2.0)
    assert t.integral == pytest.approx(1.0 + 0.5 * (2.0 - 3.0) * 2.0)
    assert pi_track(pi(), 3.0, 2.0, 1.0).integral == 1.0
    with pytest.raises(UsageError):
        pi_step(pi(), 0, 0, 0.0)


def test_clamped_integral_step():
    np.testing.assert_allclose(clamped_integral_step([1.0, 0.5], [2.0, -3.0], 0.5), [2.0, 0.0])
    np.testing.assert_allclose(clamped_integral_step([1.0], [1.0], [2.0], dt=0.25), [1.5])
    with pytest.raises(UsageError):
        clamped_integral_step([1.0], [1.0], [np.nan])


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_clamped_step_never_negative(v, e, k):
    assert clamped_integral_step([abs(v)], [e], [k])[0] >= 0.0


def test_min_select_ties_and_vectors():
    assert min_select(1.0, 2.0) == (1.0, GRADIENT)
    assert min_select(2.0, 1.0) == (1.0, CONSTRAINT)
    assert min_select(1.0, 1.0) == (1.0, CONSTRAINT)
    u, which = min_select([1.0, 3.0], [2.0, 2.0])
    assert u.tolist() == [1.0, 2.0]
    assert which.tolist() == [GRADIENT, CONSTRAINT]
