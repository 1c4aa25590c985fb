import numpy as np
import pytest

from distopt.core import UsageError
from distopt.models import HouseSubsystem, QuadraticSubsystem, WellSubsystem
from distopt.plant import WellParams, house_steady_state


def test_house_matches_plant_steady_state(energy_hub):
    mdl = energy_hub.models()[0]
    d = {"T_a": -4.0, "irradiance": 0.3, "T_sp": 21.0}
    ss = house_steady_state(9.0, -4.0, 0.3, mdl.params)
    assert mdl.steady_temperature([9.0], d) == pytest.approx(ss.T_r, rel=1e-12)
    assert mdl.cost([9.0], d) == pytest.approx((ss.T_r - 21.0) ** 2)


def test_house_best_response_closed_form(energy_hub, rng):
    for mdl in energy_hub.models():
        for _ in range(10):
            d = {"T_a": rng.uniform(-8, 8), "irradiance": rng.uniform(0, 0.5), "T_sp": 22.0}
            lam = rng.uniform(0, 40)
            # stationarity: 2 k (k u + c - T_sp) + lam = 0
            u_star = (22.0 - mdl.steady_temperature([0.0], d) - lam / (2 * mdl.gain)) / mdl.gain
            assert mdl.best_response([lam], d)[0] == pytest.approx(np.clip(u_star, 0, 25), abs=1e-9)


def test_generic_best_response_matches_house_override(energy_hub):
    mdl = energy_hub.models()[1]
    d = {"T_a": 0.0, "irradiance": 0.0, "T_sp": 22.0}
    generic = super(HouseSubsystem, mdl).best_response([5.0], d)
    assert generic[0] == pytest.approx(mdl.best_response([5.0], d)[0], abs=1e-6)


def test_cost_many_agrees_with_cost(energy_hub, gas_lift):
    grid = np.linspace(0.6, 3.4, 17)
    for s, d in ((energy_hub, {"T_a": 1.0, "irradiance": 0.2, "T_sp": 20.0}), (gas_lift, {"opening": 0.7})):
        for mdl in s.models():
            np.testing.assert_allclose(mdl.cost_many(grid, d), [mdl.cost([x], d) for x in grid], rtol=1e-12)


def test_well_model():
    p = WellParams(2.0, 1.0, 0.12, 20.0)
    w = WellSubsystem(p, 0.5, 3.5)
    assert w.cost([1.0], {"opening": 1.0}) == pytest.approx(-20.0 * (2.0 + 1.0 - 0.12))
    assert w.gradients([1.0], {"opening": 1.0}).gamma == pytest.approx([-20.0 * (1.0 - 0.24)])
    assert w.input_constraint
    with pytest.raises(UsageError):
        WellSubsystem(p, 0.0, 5.0)
    # priced optimum: 20 (1 - 0.24 u) = lam
    assert w.best_response([10.0], {"opening": 1.0})[0] == pytest.approx((1 - 0.5) / 0.24, abs=1e-6)


def test_quadratic_best_response():
    q = QuadraticSubsystem(np.diag([2.0, 4.0]), [-4.0, -4.0], [[1.0, 1.0]], [0, 0], [10, 10])
    # min u1^2 - 4u1 + 2u2^2 - 4u2 + lam (u1 + u2), lam = 2 -> u = (1, 0.5)
    np.testing.assert_allclose(q.best_response([2.0], {}), [1.0, 0.5], atol=1e-6)
    assert not q.input_constraint
    assert q.usage([1.0, 2.0], {}) == pytest.approx([3.0])
    q2 = QuadraticSubsystem([[1.0]], [0.0], [[1.0]], [0], [1], C=[[1.0]], e=[0.5])
    assert q2.local_constraints([0.7], {}) == pytest.approx([0.2])
    assert q2.cost([1.0], {"shift_0": 2.0}) == pytest.approx(0.5 + 2.0)
