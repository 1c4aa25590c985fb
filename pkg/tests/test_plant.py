import numpy as np
import pytest
from scipy.linalg import expm

from distopt.core import InputError, SimulationFault, UsageError
from distopt.plant import (
    HouseParams,
    HouseState,
    WellParams,
    battery_step,
    house_dc_gain,
    house_derivatives,
    house_matrices,
    house_steady_state,
    rk4_step,
    well_marginal_gain,
    well_production,
)

# Building parameter table, one column per house.
TABLE = {
    "C_s": (0.0549, 0.0549, 0.0549),
    "C_i": (0.0928, 0.0835, 0.1114),
    "C_e": (3.32, 2.656, 4.648),
    "C_h": (0.889, 0.889, 0.889),
    "R_is": (1.89, 1.89, 1.89),
    "R_ih": (0.146, 0.146, 0.146),
    "R_ie": (0.897, 0.7176, 1.0764),
    "R_ea": (4.38, 3.066, 5.256),
    "R_ia": (2.5, 2.0, 3.0),
    "A_w": (5.75, 3.8525, 9.2),
    "A_e": (3.87, 3.096, 5.805),
}


def house(i):
    return HouseParams(**{k: v[i] for k, v in TABLE.items()})


def test_bundled_houses_match_table(energy_hub):
    for i, sub in enumerate(energy_hub.subsystems):
        for k, col in TABLE.items():
            assert sub.params[k] == col[i], (i, k)


@pytest.mark.parametrize("i", range(3))
def test_dc_gain_is_parallel_resistance(i):
    p = house(i)
    # heat leaves through R_ia in parallel with the envelope path
    series = p.R_ie + p.R_ea
    expected = p.R_ia * series / (p.R_ia + series)
    assert house_dc_gain(p) == pytest.approx(expected, rel=1e-12)


def test_dc_gain_values():
    np.testing.assert_allclose([house_dc_gain(house(i)) for i in range(3)],
                               [1.6963, 1.3084, 2.0356], atol=5e-5)


def test_matrices_reproduce_derivatives(rng):
    p = house(1)
    A, B, E = house_matrices(p)
    for _ in range(10):
        x = rng.uniform(-5, 30, 4)
        u, Ta, irr = rng.uniform(0, 25), rng.uniform(-10, 10), rng.uniform(0, 0.6)
        np.testing.assert_allclose(house_derivatives(x, u, Ta, irr, p),
                                   A @ x + B * u + E @ [Ta, irr], rtol=1e-12, atol=1e-12)


def test_steady_state_is_fixed_point():
    p = house(0)
    ss = house_steady_state(8.0, -3.0, 0.2, p)
    np.testing.assert_allclose(house_derivatives(ss, 8.0, -3.0, 0.2, p), 0.0, atol=1e-10)
    assert ss.T_s == pytest.approx(ss.T_r)
    # heater flux reaches the interior through R_ih
    assert (ss.T_h - ss.T_r) / p.R_ih == pytest.approx(8.0)


def test_rk4_against_matrix_exponential():
    p = house(2)
    A, B, E = house_matrices(p)
    x0 = np.array([15.0, 16.0, 30.0, 5.0])
    f = B * 10.0 + E @ [2.0, 0.1]
    x_eq = np.linalg.solve(A, -f)
    T = 2.0  # hours

    def run(h):
        x = x0.copy()
        for _ in range(int(round(T / h))):
            x = rk4_step(x, lambda y: A @ y + f, h)
        return x

    exact = x_eq + expm(A * T) @ (x0 - x_eq)
    e1 = np.max(np.abs(run(1 / 60) - exact))
    e2 = np.max(np.abs(run(1 / 120) - exact))
    assert e1 < 1e-4
    assert e1 / e2 > 12  # fourth order


def test_rk4_guards():
    with pytest.raises(UsageError):
        rk4_step([1.0], lambda x: x, 0.0)
    with pytest.raises(SimulationFault):
        rk4_step([1.0], lambda x: x * np.inf, 1.0)


def test_house_state_check():
    HouseState(20, 20, 20, 20).check()
    with pytest.raises(SimulationFault):
        HouseState(20, 1e4, 20, 20).check()
    x = HouseState.from_array([1, 2, 3, 4])
    assert x.as_array().tolist() == [1, 2, 3, 4]


def test_house_params_validation_and_scaling():
    with pytest.raises(UsageError):
        HouseParams(**{**{k: v[0] for k, v in TABLE.items()}, "C_s": 0.0})
    p = house(0).scaled_resistances(2.0)
    assert p.R_ia == 5.0 and p.C_s == 0.0549
    assert HouseParams.from_dict(house(0).to_dict()) == house(0)


def test_battery():
    assert battery_step(10.0, 2.0, 5.0, 1.0) == (7.0, False)
    assert battery_step(1.0, 0.0, 5.0, 1.0) == (0.0, True)
    with pytest.raises(UsageError):
        battery_step(1.0, 0.0, 1.0, -1.0)


def test_well_curve():
    p = WellParams(2.0, 1.0, 0.12, 20.0)
    assert well_production(1.5, 0.8, p) == pytest.approx(0.8 * (2.0 + 1.5 - 0.12 * 2.25))
    h = 1e-6
    fd = (well_production(1.5 + h, 0.8, p) - well_production(1.5 - h, 0.8, p)) / (2 * h)
    assert well_marginal_gain(1.5, 0.8, p) == pytest.approx(fd, rel=1e-8)
    assert p.max_gas == pytest.approx(1.0 / 0.24)
    assert well_marginal_gain(p.max_gas, 1.0, p) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InputError):
        well_production(-0.1, 1.0, p)
    with pytest.raises(InputError):
        well_production(p.max_gas + 0.1, 1.0, p)
    with pytest.raises(UsageError):
        WellParams(1.0, 1.0, 0.0, 1.0)
