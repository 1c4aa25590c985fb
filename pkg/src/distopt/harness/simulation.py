"""Deterministic fixed-step simulation of one architecture on one scenario.

Every step of length ``dt``: read the disturbances, run the coordinator if
the step is on its period boundary, run every local controller, record the
sample, then integrate the plants over the step with inputs and
disturbances held.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..control import NO_BRANCH, PiState
from ..coordinators import (
    DualCoordinatorState,
    PrimalCoordinatorState,
    SubsystemAgent,
    dual_coordinator_step,
    override_coordinator_step,
    primal_closure,
    primal_coordinator_step,
)
from ..core import SimulationFault, UsageError
from ..gradients import GradientProvider
from ..plant import battery_step
from ..scenarios import Scenario, centralized_oracle, disturbance_at
from .trace import SimulationTrace, trace_columns

log = logging.getLogger(__name__)

__all__ = ["ARCHITECTURES", "run_simulation", "build_agents", "build_coordinator", "plant_columns"]

ARCHITECTURES = ("dual", "dual-override", "primal", "naive", "oracle-track")


def plant_columns(s: Scenario) -> List[str]:
    if s.case == "energy_hub":
        return ["T_r", "Q"]
    return ["Ql"]


def _pi_list(spec, model, u0) -> List[PiState]:
    """One PI loop per input from a tuning entry (dict, or list of dicts)."""
    specs = spec if isinstance(spec, list) else [spec] * model.n_inputs
    if len(specs) != model.n_inputs:
        raise UsageError("one PI tuning per input")
    out = []
    for j, p in enumerate(specs):
        ki = float(p["ki"])
        out.append(
            PiState(
                kp=float(p.get("kp", 0.0)),
                ki=ki,
                integral=float(u0[j]),
                lo=float(model.lower[j]),
                hi=float(model.upper[j]),
                kaw=float(p.get("kaw", abs(ki))),
            )
        )
    return out


def initial_inputs(s: Scenario, models, d0) -> List[np.ndarray]:
    share = d0.g_max[0] / s.N
    return [mdl.clip(np.full(mdl.n_inputs, share)) for mdl in models]


def build_agents(s: Scenario, arch: str, models, d0, gradient_mode: str = "analytic",
                 backoff: float = 0.0) -> List[SubsystemAgent]:
    u0 = initial_inputs(s, models, d0)
    agents = []
    key = "dual_override" if arch == "dual-override" else arch
    tuning = s.tuning.get(key, {})
    critical = [tuple(c) for c in s.tuning["dual_override"]["critical"]]
    for i, mdl in enumerate(models):
        prov = GradientProvider(mdl, gradient_mode)
        ag = SubsystemAgent(index=i, provider=prov, arch=arch, u=u0[i].copy(), dt=s.dt)
        if arch in ("dual", "dual-override"):
            ag.grad_pis = _pi_list(tuning["local"][i], mdl, u0[i])
        if arch == "dual-override":
            paired = [j for j, subs in enumerate(critical) if i in subs]
            if paired:
                if mdl.n_inputs < len(paired):
                    raise UsageError(f"subsystem {i} has fewer inputs than paired constraints")
                ag.paired = paired
                c = tuning["constraint"]
                ag.con_pis = [
                    PiState(
                        kp=float(c.get("kp", 0.0)),
                        ki=float(c["ki"]),
                        integral=float(u0[i][k]),
                        lo=float(mdl.lower[k]),
                        hi=float(mdl.upper[k]),
                        kaw=float(c.get("kaw", abs(float(c["ki"])))),
                    )
                    for k in range(len(paired))
                ]
        if arch == "primal":
            if mdl.n_inputs < s.m:
                raise UsageError("primal coordination needs n_i >= m in every subsystem")
            if not mdl.input_constraint:
                ag.primal_pis = _pi_list(tuning["local"][i], mdl, u0[i])
        ag.start(d0.local[i])
        agents.append(ag)
    return agents


def build_coordinator(s: Scenario, arch: str, d0, period: Optional[int] = None,
                      backoff: float = 0.0):
    key = "dual_override" if arch == "dual-override" else arch
    tuning = s.tuning[key]
    period = s.period_for(arch) if period is None else int(period)
    allow = s.schedule.allow_unseparated
    if arch in ("dual", "dual-override"):
        lam0 = np.broadcast_to(np.asarray(tuning.get("initial_price", [0.0]), dtype=float), (s.m,))
        return DualCoordinatorState(lam0.copy(), tuning["coordinator_gain"], period, allow)
    return PrimalCoordinatorState.naive(
        d0.g_max * (1.0 - backoff), s.N, tuning["equalizer_gains"], tuning["marginal_gain"],
        period, allow,
    )


def _fsum_rows(vectors) -> np.ndarray:
    """Correctly rounded entrywise total of a list of vectors."""
    arr = np.atleast_2d(np.array(vectors, dtype=float))
    return np.array([math.fsum(arr[:, k]) for k in range(arr.shape[1])])


@dataclass
class _Recorder:
    names: List[str]
    n: int

    def __post_init__(self):
        self.data = np.full((self.n, len(self.names)), np.nan)
        self.index = {c: k for k, c in enumerate(self.names)}
        self.rows = 0

    def put(self, row: int, name: str, value) -> None:
        self.data[row, self.index[name]] = value

    def trace(self, meta) -> SimulationTrace:
        cols = {c: self.data[: self.rows, k].copy() for c, k in self.index.items()}
        return SimulationTrace(cols, meta)


def run_simulation(
    s: Scenario,
    arch: str,
    seed: Optional[int] = None,
    backoff: float = 0.0,
    period: Optional[int] = None,
    gradient_mode: str = "analytic",
) -> SimulationTrace:
    """Simulate ``arch`` on ``s`` over its full horizon.

    ``backoff`` tightens the supply seen by the controllers to
    ``(1 - backoff) * g_max``; the recorded ``g_max`` stays the true one.
    ``period`` overrides the coordinator period (in local steps). The
    scenario's ``allow_unseparated`` flag still gates periods below 5.
    ``seed`` is recorded for provenance; the loop itself draws no random
    numbers.
    """
    if arch not in ARCHITECTURES:
        raise UsageError(f"unknown architecture {arch!r}; choose from {', '.join(ARCHITECTURES)}")
    if not 0.0 <= backoff < 1.0:
        raise UsageError("backoff must lie in [0, 1)")
    seed = s.seed if seed is None else int(seed)
    models = s.models()
    N, m, dt, K = s.N, s.m, s.dt, s.n_steps
    d0 = disturbance_at(s, 0.0)

    agents = build_agents(s, arch, models, d0, gradient_mode, backoff) if arch in (
        "dual", "dual-override", "primal") else None
    coord = build_coordinator(s, arch, d0, period, backoff) if agents is not None else None
    P = coord.period if coord is not None else 1

    u = initial_inputs(s, models, d0)
    states = [mdl.initial_state(ui, di) for mdl, ui, di in zip(models, u, d0.local)]
    hub = s.hub
    Q = hub["Q0"] if hub else None
    oracle_every = max(1, int(round(s.schedule.oracle_period / dt)))
    oracle_lam = np.full(m, np.nan)

    plant = plant_columns(s)
    rec = _Recorder(trace_columns(N, [mdl.n_inputs for mdl in models], m, plant), K + 1)
    meta = {"scenario": s.name, "arch": arch, "seed": seed, "backoff": backoff, "period": P,
            "primal_scaled": 0, "battery_depleted": 0}
    t = 0.0
    try:
        for k in range(K + 1):
            t = k * dt
            d = disturbance_at(s, t)
            g_true = d.g_max
            g_bar = g_true * (1.0 - backoff)
            lam = np.full(m, np.nan)
            if arch in ("dual", "dual-override"):
                if k % P == 0:
                    if arch == "dual":
                        total = _fsum_rows([a.usage(d.local[a.index]) for a in agents])
                        coord = dual_coordinator_step(coord, total, g_bar)
                    else:
                        err = np.full(m, -np.inf)
                        for a in agents:
                            for kk, j in enumerate(a.paired):
                                err[j] = max(err[j], a.u_c[kk] - a.u_g[kk])
                        coord = override_coordinator_step(coord, err, np.zeros(m))
                    for a in agents:
                        a.price_step(d.local[a.index])
                total = _fsum_rows([a.usage(d.local[a.index]) for a in agents])
                for a in agents:
                    a.local_step(d.local[a.index], coord.lam, total, g_bar)
                lam = coord.lam
                u = [a.u for a in agents]
            elif arch == "primal":
                if k % P == 0:
                    coord, scaled = primal_coordinator_step(coord, [a.lam_i for a in agents], g_bar)
                else:
                    coord, scaled = primal_closure(coord, g_bar)
                if scaled:
                    meta["primal_scaled"] += 1
                    log.info("t=%g: allocations scaled down to the supply", t)
                for a in agents:
                    a.local_step(d.local[a.index], coord.t[a.index])
                u = [a.u for a in agents]
            elif arch == "naive":
                u = [mdl.clip(np.full(mdl.n_inputs, g_true[0] / N)) for mdl in models]
            else:
                if k % oracle_every == 0:
                    sol = centralized_oracle(s, t, cross_check=False)
                    u = [ui.copy() for ui in sol.u]
                    oracle_lam = sol.lam
                lam = oracle_lam

            row = k
            rec.put(row, "time", t)
            for i, mdl in enumerate(models):
                for j in range(mdl.n_inputs):
                    rec.put(row, f"u[{i}][{j}]", u[i][j])
                if agents is not None:
                    ag = agents[i]
                    for j in range(min(mdl.n_inputs, len(ag.cv))):
                        rec.put(row, f"cv[{i}][{j}]", ag.cv[j])
                    rec.put(row, f"branch[{i}]", ag.branch)
                    if arch == "primal":
                        for kk in range(m):
                            rec.put(row, f"lambda_i[{i}][{kk}]", ag.lam_i[kk])
                            rec.put(row, f"t_alloc[{i}][{kk}]", coord.t[i, kk])
                else:
                    rec.put(row, f"branch[{i}]", NO_BRANCH)
                rec.put(row, f"cost[{i}]", mdl.measured_cost(states[i], u[i], d.local[i]))
                for name, val in mdl.plant_outputs(states[i], u[i], d.local[i]).items():
                    rec.put(row, f"{name}[{i}]", val)
            g_total = _fsum_rows([mdl.usage(ui, di) for mdl, ui, di in zip(models, u, d.local)])
            for kk in range(m):
                rec.put(row, f"lambda[{kk}]", lam[kk])
                rec.put(row, f"g_total[{kk}]", g_total[kk])
                rec.put(row, f"g_max[{kk}]", g_true[kk])
            if hub:
                rec.put(row, "Q", Q)
            rec.rows = k + 1

            if k == K:
                break
            for i, mdl in enumerate(models):
                states[i] = mdl.advance(states[i], u[i], d.local[i], dt)
                if agents is not None:
                    agents[i].state = states[i]
            if hub:
                p_solar = hub["omega"] * d.shared.get("irradiance", 0.0)
                Q, depleted = battery_step(Q, p_solar, float(g_total[0]), dt / 3600.0)
                if depleted:
                    meta["battery_depleted"] += 1
    except SimulationFault as exc:
        partial = rec.trace(meta)
        raise SimulationFault(f"t={t:g}: {exc}", partial) from exc
    if meta["primal_scaled"]:
        log.warning("primal allocations were scaled down %d times", meta["primal_scaled"])
    return rec.trace(meta)
