"""Executable acceptance checks for the bundled scenarios.

Each ``criterion_N`` returns a :class:`CriterionResult`. Simulation runs
are cached so criteria that share a scenario share the run. Every
tolerance used below is a module constant.
"""

from __future__ import annotations

import functools
import logging
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coordinators import SubsystemAgent
from .gradients import GradientProvider, local_gradients
from .harness.distributed import run_distributed_local
from .harness.metrics import cumulative_profit_diff, violation_integral
from .harness.protocol import (
    AllocationUpdate,
    OpportunityCostReport,
    OverrideReport,
    PriceBroadcast,
    UsageReport,
    decode_message,
    encode_message,
)
from .harness.simulation import run_simulation
from .harness.trace import SimulationTrace
from .harness.tracecsv import write_trace_csv
from .scenarios import (
    Scenario,
    centralized_oracle,
    disturbance_at,
    freeze,
    load_scenario,
    ramp_windows,
    with_g_max,
)

log = logging.getLogger(__name__)

__all__ = ["CriterionResult", "CRITERIA", "run_all", "format_report", "clear_cache"]

HOUR = 3600.0

# snapshot times (s) for the frozen-disturbance checks
SNAPSHOTS = {"night": 24 * HOUR, "midday": 36 * HOUR, "transition": 41.5 * HOUR}
FROZEN_HORIZON = 12 * HOUR
ARCHS = ("dual", "dual-override", "primal")

TOTAL_REL_TOL = 0.02
PRICE_REL_TOL = 0.05
PRICE_ABS_FLOOR = 1e-3
KKT_TOL = 1e-2
TRACK_REL_TOL = 0.10
EQUAL_COST_TOL = 1e-2
OVERRIDE_REDUCTION = 0.50
GRAD_REL_TOL = 1e-6
GRAD_POINTS = 50
GRAD_FD_STEP = 1e-4
ZERO_PRICE_TOL = 1e-3
SLACK_SNAPSHOT = 27 * HOUR
SLACK_SUPPLY = 60.0
DISTRIBUTED_REL_TOL = 0.01
DISTRIBUTED_HORIZON = 6 * HOUR
OSC_HORIZON = 24 * HOUR
OSC_FAST_PERIOD = 1
OSC_TAIL = 0.2
OSC_MIN_CHANGES = 3
OSC_MAX_CHANGES_DEFAULT = 1
OSC_STEP_FLOOR = 1e-9
BACKOFF = 0.05
FULL_RUN_BUDGET = 10.0
SNAPSHOT_BUDGET = 30.0
SUITE_BUDGET = 120.0


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    elapsed: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} {status}: {self.title}; {self.detail} ({self.elapsed:.1f} s)"


# --------------------------------------------------------------------------
# cached runs

@functools.lru_cache(maxsize=None)
def _scenario(name: str) -> Scenario:
    return load_scenario(name)


@functools.lru_cache(maxsize=None)
def _frozen(snapshot: str) -> Scenario:
    return freeze(_scenario("energy_hub"), SNAPSHOTS[snapshot], FROZEN_HORIZON)


@functools.lru_cache(maxsize=None)
def _run(name: str, arch: str, backoff: float = 0.0) -> Tuple[SimulationTrace, float]:
    t0 = time.perf_counter()
    tr = run_simulation(_scenario(name), arch, backoff=backoff)
    return tr, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def _frozen_run(snapshot: str, arch: str) -> SimulationTrace:
    return run_simulation(_frozen(snapshot), arch)


@functools.lru_cache(maxsize=None)
def _oracle(snapshot: str):
    return centralized_oracle(_scenario("energy_hub"), SNAPSHOTS[snapshot])


def clear_cache() -> None:
    for f in (_scenario, _frozen, _run, _frozen_run, _oracle):
        f.cache_clear()


def _price(trace: SimulationTrace, arch: str) -> np.ndarray:
    """Price the architecture converges to: lambda, or the mean opportunity cost."""
    if arch == "primal":
        return trace.block("lambda_i").mean(axis=1)
    return trace["lambda[0]"]


# --------------------------------------------------------------------------
# criteria

def criterion_1() -> CriterionResult:
    t0 = time.perf_counter()
    worst_total, worst_price, bad = 0.0, 0.0, []
    for snap in SNAPSHOTS:
        sol = _oracle(snap)
        total_star, lam_star = float(sol.total[0]), float(sol.lam[0])
        for arch in ARCHS:
            tr = _frozen_run(snap, arch)
            total = float(tr["g_total[0]"][-1])
            lam = float(_price(tr, arch)[-1])
            rel_total = abs(total - total_star) / abs(total_star)
            price_err = abs(lam - lam_star)
            price_ok = price_err <= PRICE_REL_TOL * abs(lam_star) + PRICE_ABS_FLOOR
            worst_total = max(worst_total, rel_total)
            worst_price = max(worst_price, price_err / max(abs(lam_star), PRICE_ABS_FLOOR))
            if rel_total > TOTAL_REL_TOL or not price_ok:
                bad.append(f"{arch}@{snap}")
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed <= SNAPSHOT_BUDGET
    detail = (f"worst total-input rel err {worst_total:.2e} (tol {TOTAL_REL_TOL}), "
              f"worst price rel err {worst_price:.2e} (tol {PRICE_REL_TOL}), "
              f"runtime {elapsed:.1f} s (budget {SNAPSHOT_BUDGET:.0f} s)")
    if bad:
        detail += f", failing: {', '.join(bad)}"
    return CriterionResult(1, "oracle steady-state equivalence", ok, detail)


def kkt_residuals(s: Scenario, trace: SimulationTrace, arch: str) -> Dict[str, float]:
    """KKT residuals at the last sample, with the architecture's price."""
    models = s.models()
    d = disturbance_at(s, float(trace.time[-1]))
    g_bar = float(d.g_max[0])
    lam = float(_price(trace, arch)[-1])
    u = trace.block("u")[-1]
    viol = float(trace["g_total[0]"][-1]) - g_bar
    stat = 0.0
    for i, mdl in enumerate(models):
        ui = np.array([u[i]])
        gp = mdl.gradients(ui, d.local[i])
        c = gp.gamma + gp.phi @ np.array([lam])
        stat = max(stat, float(np.max(np.abs(ui - mdl.clip(ui - c)))))
    return {
        "primal": max(viol, 0.0),
        "dual": max(-lam, 0.0),
        "complementarity": abs(lam * viol),
        "stationarity": stat,
    }


def criterion_2() -> CriterionResult:
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for snap in SNAPSHOTS:
        for arch in ARCHS:
            res = kkt_residuals(_frozen(snap), _frozen_run(snap, arch), arch)
            m = max(res.values())
            if m >= worst:
                worst, where = m, f"{arch}@{snap} ({max(res, key=res.get)})"
    ok = worst <= KKT_TOL
    return CriterionResult(2, "KKT residuals at converged snapshots", ok,
                           f"worst residual {worst:.2e} at {where} (tol {KKT_TOL})",
                           time.perf_counter() - t0)


def criterion_3() -> CriterionResult:
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("energy_hub", "gas_lift"):
        tr, _ = _run(name, "primal")
        over = float(np.max(tr["g_total[0]"] - tr["g_max[0]"]))
        ok &= over <= 0.0
        parts.append(f"{name} max(sum g - g_max) = {over:.3g}")
    return CriterionResult(3, "primal hard feasibility", ok, ", ".join(parts),
                           time.perf_counter() - t0)


def criterion_4() -> CriterionResult:
    t0 = time.perf_counter()
    v_dual = float(violation_integral(_run("energy_hub", "dual")[0])[0])
    v_ovr = float(violation_integral(_run("energy_hub", "dual-override")[0])[0])
    reduction = 1.0 - v_ovr / v_dual if v_dual > 0 else 0.0
    ok = v_dual > 0 and v_ovr < v_dual and reduction >= OVERRIDE_REDUCTION
    return CriterionResult(
        4, "dual violates transiently, override reduces it", ok,
        f"violation integral dual {v_dual:.4g} kW*s, override {v_ovr:.4g} kW*s, "
        f"reduction {reduction:.1%} (need >= {OVERRIDE_REDUCTION:.0%})",
        time.perf_counter() - t0)


def price_tracking(name: str = "energy_hub") -> Tuple[float, float]:
    """Normalised L1 gaps: override vs primal where the oracle price is
    positive, override vs dual where it is zero."""
    orc = _run(name, "oracle-track")[0]
    active = orc["lambda[0]"] > 0
    ovr = _run(name, "dual-override")[0]["lambda[0]"]
    dual = _run(name, "dual")[0]["lambda[0]"]
    prim = _price(_run(name, "primal")[0], "primal")
    scale = float(np.mean(np.abs(prim[active])))
    gap_active = float(np.mean(np.abs(ovr - prim)[active])) / scale
    gap_inactive = float(np.mean(np.abs(ovr - dual)[~active])) / scale
    return gap_active, gap_inactive


def criterion_5() -> CriterionResult:
    t0 = time.perf_counter()
    a, i = price_tracking()
    ok = a <= TRACK_REL_TOL and i <= TRACK_REL_TOL
    return CriterionResult(
        5, "override price is a primal/dual hybrid", ok,
        f"active: override vs primal {a:.3f}, inactive: override vs dual {i:.3f} "
        f"(relative to mean active price, tol {TRACK_REL_TOL})",
        time.perf_counter() - t0)


def criterion_6() -> CriterionResult:
    t0 = time.perf_counter()
    s = _scenario("gas_lift")
    tr = _run("gas_lift", "primal")[0]
    lam = tr.block("lambda_i")
    spread = np.max(np.abs(lam - lam[:, -1:]), axis=1)
    parts, ok = [], True
    for end, nxt in ramp_windows(s):
        win = (tr.time >= end) & (tr.time <= nxt)
        hit = np.nonzero(win & (spread <= EQUAL_COST_TOL))[0]
        if hit.size:
            parts.append(f"{tr.time[hit[0]] - end:.0f} s after t={end:.0f}")
        else:
            ok = False
            parts.append(f"not reached after t={end:.0f} (min {spread[win].min():.2e})")
    return CriterionResult(6, "primal equal marginal costs after each ramp", ok,
                           f"max|lambda_i - lambda_N| <= {EQUAL_COST_TOL}: " + ", ".join(parts),
                           time.perf_counter() - t0)


def profit_ordering() -> Dict[str, float]:
    naive = _run("gas_lift", "naive")[0]
    return {
        "primal": cumulative_profit_diff(_run("gas_lift", "primal")[0], naive),
        "dual-override": cumulative_profit_diff(_run("gas_lift", "dual-override")[0], naive),
        "dual-backoff": cumulative_profit_diff(_run("gas_lift", "dual", BACKOFF)[0], naive),
    }


def criterion_7() -> CriterionResult:
    t0 = time.perf_counter()
    p = profit_ordering()
    ok = (p["primal"] > p["dual-override"] > 0.0
          and p["dual-backoff"] < min(p["primal"], p["dual-override"]))
    detail = ", ".join(f"{k} {v:.4g}" for k, v in p.items())
    return CriterionResult(7, "gas-lift cumulative profit ordering", ok,
                           f"cumulative P_diff [%*s]: {detail}", time.perf_counter() - t0)


def gradient_errors(seed: int = 0) -> Dict[str, float]:
    """Worst analytic-vs-central-difference error per bundled model."""
    rng = np.random.default_rng(seed)
    out = {}
    h = GRAD_FD_STEP
    for name in ("energy_hub", "gas_lift"):
        s = _scenario(name)
        for i, mdl in enumerate(s.models()):
            fd = GradientProvider(mdl, "fd", h)
            lo, hi = mdl.domain()
            worst = 0.0
            for _ in range(GRAD_POINTS):
                u = rng.uniform(lo + 2 * h, hi - 2 * h)
                if name == "energy_hub":
                    d = {"T_a": rng.uniform(-10, 12), "irradiance": rng.uniform(0, 0.6),
                         "T_sp": rng.uniform(15, 24)}
                else:
                    d = {"opening": rng.uniform(0.3, 1.0)}
                a = local_gradients(GradientProvider(mdl), u, d)
                f = local_gradients(fd, u, d)
                err = np.max(np.abs(a.gamma - f.gamma) / np.maximum(np.abs(a.gamma), 1.0))
                err = max(err, np.max(np.abs(a.phi - f.phi) / np.maximum(np.abs(a.phi), 1.0)))
                worst = max(worst, float(err))
            out[f"{name}[{i}]"] = worst
    return out


def criterion_8() -> CriterionResult:
    t0 = time.perf_counter()
    errs = gradient_errors()
    worst = max(errs.values())
    return CriterionResult(8, "analytic gradients match central differences", worst <= GRAD_REL_TOL,
                           f"worst relative error {worst:.2e} over {GRAD_POINTS} points x "
                           f"{len(errs)} models (tol {GRAD_REL_TOL:g}, unit floor)",
                           time.perf_counter() - t0)


def slack_scenario() -> Scenario:
    s = freeze(_scenario("energy_hub"), SLACK_SNAPSHOT, FROZEN_HORIZON)
    return with_g_max(s, [SLACK_SUPPLY])


def criterion_9() -> CriterionResult:
    t0 = time.perf_counter()
    s = slack_scenario()
    vals = {
        "dual": float(run_simulation(s, "dual")["lambda[0]"][-1]),
        "dual-override": float(run_simulation(s, "dual-override")["lambda[0]"][-1]),
        "primal": float(np.max(np.abs(run_simulation(s, "primal").block("lambda_i")[-1]))),
    }
    ok = all(abs(v) <= ZERO_PRICE_TOL for v in vals.values())
    return CriterionResult(9, "zero prices when the constraint is slack", ok,
                           ", ".join(f"{k} {v:.2e}" for k, v in vals.items())
                           + f" (tol {ZERO_PRICE_TOL:g})", time.perf_counter() - t0)


def _sample_messages(rng) -> list:
    def vec(n=1):
        return tuple(float(x) for x in rng.normal(scale=10.0 ** rng.integers(-6, 6), size=n))

    tick = int(rng.integers(0, 10**6))
    sub = int(rng.integers(0, 16))
    return [
        PriceBroadcast(vec(), tick),
        UsageReport(sub, vec(), tick),
        OpportunityCostReport(sub, vec(), tick),
        AllocationUpdate(sub, vec(), tick),
        OverrideReport(sub, vec(), vec(), tick),
    ]


def criterion_10() -> CriterionResult:
    t0 = time.perf_counter()
    parts, ok = [], True
    s = _scenario("energy_hub")
    with tempfile.TemporaryDirectory() as tmp:
        paths = [Path(tmp) / f"run{k}.csv" for k in range(2)]
        for p in paths:
            write_trace_csv(run_simulation(s, "dual", seed=7), p)
        same = paths[0].read_bytes() == paths[1].read_bytes()
    ok &= same
    parts.append("CSV bit-identical" if same else "CSV differs between runs")

    rng = np.random.default_rng(0)
    msgs = [m for _ in range(200) for m in _sample_messages(rng)]
    lossless = all(decode_message(encode_message(m)) == m for m in msgs)
    ok &= lossless
    parts.append(f"{len(msgs)} messages round-trip" + ("" if lossless else " FAILED"))

    frozen = freeze(s, SNAPSHOTS["night"], DISTRIBUTED_HORIZON)
    for arch in ("dual", "primal"):
        local = run_simulation(frozen, arch)
        dist = run_distributed_local(frozen, arch)
        u_local = local.block("u")[-1]
        u_dist = np.concatenate(dist.final_u)
        du = float(np.max(np.abs(u_dist - u_local) / np.maximum(np.abs(u_local), 1e-12)))
        if arch == "dual":
            lam_l, lam_d = float(local["lambda[0]"][-1]), float(dist.coordinator.lam[-1][0])
        else:
            lam_l = float(local.block("lambda_i")[-1].mean())
            models = frozen.models()
            d = disturbance_at(frozen, frozen.horizon)
            lam_d = float(np.mean([-mdl.gradients(ui, di).gamma[0]
                                   for mdl, ui, di in zip(models, dist.final_u, d.local)]))
        dl = abs(lam_d - lam_l) / max(abs(lam_l), 1e-12)
        good = du <= DISTRIBUTED_REL_TOL and dl <= DISTRIBUTED_REL_TOL
        ok &= good
        parts.append(f"{arch} distributed vs in-process: u {du:.1e}, price {dl:.1e}")
    return CriterionResult(10, "determinism and protocol", ok,
                           ", ".join(parts) + f" (tol {DISTRIBUTED_REL_TOL})",
                           time.perf_counter() - t0)


def sign_changes(lam: np.ndarray, tail: float = OSC_TAIL) -> int:
    """Sign changes of the price increments over the last ``tail`` of the run.

    Increments smaller than ``OSC_STEP_FLOOR * (1 + max|lam|)`` count as zero.
    """
    seg = lam[int(len(lam) * (1.0 - tail)):]
    step = np.diff(seg)
    floor = OSC_STEP_FLOOR * (1.0 + float(np.max(np.abs(lam))))
    signs = np.sign(step[np.abs(step) > floor])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def oscillation_counts() -> Tuple[int, int]:
    s = freeze(_scenario("energy_hub"), SNAPSHOTS["night"], OSC_HORIZON)
    default = run_simulation(s, "dual")
    fast = replace(s, schedule=replace(s.schedule, allow_unseparated=True))
    quick = run_simulation(fast, "dual", period=OSC_FAST_PERIOD)
    return sign_changes(default["lambda[0]"]), sign_changes(quick["lambda[0]"])


def criterion_11() -> CriterionResult:
    t0 = time.perf_counter()
    n_default, n_fast = oscillation_counts()
    ok = n_fast >= OSC_MIN_CHANGES and n_default <= OSC_MAX_CHANGES_DEFAULT
    return CriterionResult(
        11, "timescale separation", ok,
        f"sign changes of d lambda in final {OSC_TAIL:.0%}: period {_scenario('energy_hub').period_for('dual')}"
        f" -> {n_default} (need <= {OSC_MAX_CHANGES_DEFAULT}), period {OSC_FAST_PERIOD} -> {n_fast} "
        f"(need >= {OSC_MIN_CHANGES})",
        time.perf_counter() - t0)


def criterion_12(suite_elapsed: Optional[float] = None) -> CriterionResult:
    t0 = time.perf_counter()
    times = {}
    for arch in ARCHS:
        s = _scenario("energy_hub")
        t1 = time.perf_counter()
        run_simulation(s, arch)
        times[arch] = time.perf_counter() - t1
    worst = max(times.values())
    ok = worst <= FULL_RUN_BUDGET
    detail = ", ".join(f"{k} {v:.2f} s" for k, v in times.items())
    detail += f" (budget {FULL_RUN_BUDGET:.0f} s each)"
    if suite_elapsed is not None:
        ok &= suite_elapsed <= SUITE_BUDGET
        detail += f", suite {suite_elapsed:.1f} s (budget {SUITE_BUDGET:.0f} s)"
    return CriterionResult(12, "performance", ok, detail, time.perf_counter() - t0)


CRITERIA: Dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
}


def _guarded(number: int, fn) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        res = fn()
    except Exception as exc:  # a crash is a failed criterion, not a crashed suite
        log.exception("criterion %d raised", number)
        res = CriterionResult(number, fn.__name__, False, f"raised {type(exc).__name__}: {exc}")
    res.elapsed = time.perf_counter() - t0
    return res


def run_all(numbers: Optional[Sequence[int]] = None, report=None) -> List[CriterionResult]:
    """Run the selected criteria (all by default); criterion 12 runs last
    and also checks the wall time of the whole suite."""
    numbers = sorted(numbers or list(CRITERIA) + [12])
    start = time.perf_counter()
    results = []
    for n in numbers:
        if n == 12:
            continue
        results.append(_guarded(n, CRITERIA[n]))
        if report:
            report(results[-1])
    if 12 in numbers:
        full = set(numbers) >= set(CRITERIA)
        res = _guarded(12, lambda: criterion_12(None))
        if full:
            suite = time.perf_counter() - start
            res.passed = res.passed and suite <= SUITE_BUDGET
            res.detail += f", suite {suite:.1f} s (budget {SUITE_BUDGET:.0f} s)"
        results.append(res)
        if report:
            report(res)
    return results


def format_report(results: Sequence[CriterionResult]) -> str:
    lines = [r.line() for r in results]
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} criteria passed")
    return "\n".join(lines)
