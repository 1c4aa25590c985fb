import json

import numpy as np
import pytest
from scipy.optimize import minimize

from distopt.core import InputError, ScenarioError, UndefinedMetricError
from distopt.scenarios import (
    ConstantProfile,
    DailyProfile,
    PointsProfile,
    bundled_scenario_path,
    centralized_oracle,
    disturbance_at,
    dump_scenario,
    freeze,
    load_scenario,
    naive_allocation,
    parse_profile,
    profit_diff,
    ramp_windows,
    validate_scenario,
    with_g_max,
)


def _doc(name):
    return json.loads(bundled_scenario_path(name).read_text())


@pytest.mark.parametrize("name", ["energy_hub", "gas_lift"])
def test_bundled_scenarios_validate(name):
    assert validate_scenario(_doc(name)) == []


@pytest.mark.parametrize("name", ["energy_hub", "gas_lift"])
def test_dump_and_reload_is_lossless(name, tmp_path):
    s = load_scenario(name)
    path = tmp_path / "s.json"
    dump_scenario(s, path)
    again = load_scenario(path)
    assert again == s


def test_every_problem_is_reported():
    doc = _doc("gas_lift")
    doc["horizon"] = 3000.05
    doc["subsystems"][0]["params"].pop("beta")
    doc["subsystems"][1]["bounds"] = [2.0, 1.0]
    doc["tuning"]["primal"]["equalizer_gains"] = [1.0]
    problems = validate_scenario(doc)
    joined = "\n".join(problems)
    assert "horizon" in joined
    assert "subsystems/0/params: missing beta" in joined
    assert "subsystems/1/bounds" in joined
    assert "tuning/primal/equalizer_gains" in joined
    with pytest.raises(ScenarioError) as exc:
        from distopt.scenarios import scenario_from_dict
        scenario_from_dict(doc, "broken.json")
    assert str(exc.value).startswith("broken.json")


def test_short_period_needs_opt_in():
    doc = _doc("gas_lift")
    doc["schedule"]["coordinator_period"] = 2
    assert any("allow_unseparated" in p for p in validate_scenario(doc))
    doc["schedule"]["allow_unseparated"] = True
    assert validate_scenario(doc) == []


def test_timeline_must_cover_horizon():
    doc = _doc("gas_lift")
    doc["subsystems"][0]["disturbances"]["opening"] = {"points": [[0, 1.0], [100, 0.5]]}
    assert any("does not cover" in p for p in validate_scenario(doc))


def test_parse_error_reports_line_and_column(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "name": "x",\n  oops\n}\n')
    with pytest.raises(ScenarioError, match=r"bad\.json:3:3: parse error"):
        load_scenario(path)


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(ScenarioError, match="nowhere.json"):
        load_scenario(tmp_path / "nowhere.json")


def test_profiles():
    assert ConstantProfile(3.0)(1e6) == 3.0
    p = PointsProfile(((0.0, 1.0), (10.0, 3.0)))
    assert p(5.0) == pytest.approx(2.0)
    assert p(-1.0) == 1.0 and p(20.0) == 3.0
    d = DailyProfile(10.0, 5.0, 3600.0, clip_min=8.0)
    assert d(3600.0) == pytest.approx(15.0)
    assert d(3600.0 + 43200.0) == 8.0
    for prof in (ConstantProfile(2.0), p, d):
        assert parse_profile(prof.to_json()) == prof
    with pytest.raises(ScenarioError):
        PointsProfile(((0.0, 1.0), (0.0, 2.0)))
    with pytest.raises(ScenarioError):
        parse_profile("sunny")


def test_disturbance_outside_horizon_raises(gas_lift):
    disturbance_at(gas_lift, gas_lift.horizon)
    with pytest.raises(InputError):
        disturbance_at(gas_lift, gas_lift.horizon + 1.0)
    with pytest.raises(InputError):
        disturbance_at(gas_lift, -1.0)


def test_freeze_holds_every_timeline(energy_hub):
    t = 41.5 * 3600
    f = freeze(energy_hub, t, horizon=600.0)
    assert f.horizon == 600.0
    d_ref = disturbance_at(energy_hub, t)
    for tt in (0.0, 300.0, 600.0):
        d = disturbance_at(f, tt)
        np.testing.assert_array_equal(d.g_max, d_ref.g_max)
        assert d.local == d_ref.local


def test_with_g_max(gas_lift):
    s = with_g_max(gas_lift, 60.0)
    assert disturbance_at(s, 100.0).g_max.tolist() == [60.0]


def test_ramp_windows(gas_lift):
    # breakpoints of the bundled opening timelines
    assert ramp_windows(gas_lift) == [(840.0, 930.0), (1260.0, 1440.0), (1770.0, 1980.0),
                                      (2520.0, 3000.0)]


def test_naive_allocation(gas_lift):
    alloc = naive_allocation(gas_lift, 0.0)
    assert [a.tolist() for a in alloc] == [[2.5], [2.5], [2.5]]


def test_profit_diff():
    assert profit_diff(110.0, 100.0) == pytest.approx(10.0)
    assert profit_diff(-90.0, -100.0) == pytest.approx(-10.0)
    np.testing.assert_allclose(profit_diff([1.0, 3.0], [2.0, 2.0]), [-50.0, 50.0])
    with pytest.raises(UndefinedMetricError):
        profit_diff([1.0, 2.0], [1.0, 0.0])


def _brute_force(s, t):
    """Joint SLSQP over all inputs, independent of the price bisection."""
    models = s.models()
    d = disturbance_at(s, t)
    g_bar = float(d.g_max[0])
    sizes = [mdl.n_inputs for mdl in models]
    cuts = np.cumsum(sizes)[:-1]

    def split(x):
        return np.split(x, cuts)

    def cost(x):
        return sum(mdl.cost(u, di) for mdl, u, di in zip(models, split(x), d.local))

    def slack(x):
        return g_bar - sum(mdl.usage(u, di)[0] for mdl, u, di in zip(models, split(x), d.local))

    lo = np.concatenate([mdl.lower for mdl in models])
    hi = np.concatenate([mdl.upper for mdl in models])
    x0 = np.clip(np.full(lo.shape, g_bar / len(lo)), lo, hi)
    res = minimize(cost, x0, method="SLSQP", bounds=list(zip(lo, hi)),
                   constraints=[{"type": "ineq", "fun": slack}],
                   options={"ftol": 1e-12, "maxiter": 500})
    assert res.success, res.message
    return split(res.x), cost(res.x)


@pytest.mark.parametrize("name,t", [("gas_lift", 0.0), ("gas_lift", 1000.0),
                                    ("energy_hub", 24 * 3600.0), ("energy_hub", 41.5 * 3600.0)])
def test_oracle_matches_joint_solver(name, t):
    s = load_scenario(name)
    sol = centralized_oracle(s, t)
    u_bf, j_bf = _brute_force(s, t)
    d = disturbance_at(s, t)
    models = s.models()
    j = sum(mdl.cost(u, di) for mdl, u, di in zip(models, sol.u, d.local))
    assert j <= j_bf + 1e-6 * max(1.0, abs(j_bf))
    for a, b in zip(sol.u, u_bf):
        np.testing.assert_allclose(a, b, atol=1e-3)


@pytest.mark.parametrize("name,t", [("gas_lift", 0.0), ("energy_hub", 36 * 3600.0)])
def test_oracle_kkt(name, t):
    sol = centralized_oracle(load_scenario(name), t)
    assert sol.kkt["primal"] <= 1e-9
    assert sol.kkt["dual"] == 0.0
    assert sol.kkt["complementarity"] <= 1e-8
    assert sol.kkt["stationarity"] <= 1e-6


def test_oracle_zero_price_with_slack(gas_lift):
    sol = centralized_oracle(with_g_max(gas_lift, 60.0), 100.0)
    assert sol.lam.tolist() == [0.0]
    assert not sol.active[0]
