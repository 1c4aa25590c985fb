"""Scalar summaries of a trace: violation, cost, profit against the naive
baseline, convergence times and the gap to the oracle."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core import UsageError
from ..scenarios import profit_diff
from .trace import SimulationTrace

__all__ = ["Metrics", "compute_metrics", "violation_integral", "cumulative_profit_diff",
           "convergence_time"]


@dataclass
class Metrics:
    violation_integral: List[float]
    max_violation: List[float]
    cumulative_cost: float
    cumulative_pdiff: Optional[float] = None
    convergence_times: List[Optional[float]] = field(default_factory=list)
    steady_state_gap: Optional[Dict[str, float]] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _trapz(y, t) -> float:
    if len(t) < 2:
        return 0.0
    return float(np.trapezoid(y, t))


def violation_integral(trace: SimulationTrace) -> np.ndarray:
    """``integral of max(0, sum g - g_max) dt`` per constraint [unit * s]."""
    over = np.maximum(trace.block("g_total") - trace.block("g_max"), 0.0)
    return np.array([_trapz(over[:, k], trace.time) for k in range(over.shape[1])])


def _profit(trace: SimulationTrace) -> np.ndarray:
    return -trace.block("cost").sum(axis=1)


def _check_aligned(a: SimulationTrace, b: SimulationTrace) -> None:
    if len(a) != len(b) or not np.array_equal(a.time, b.time):
        raise UsageError("traces are on different time grids")


def cumulative_profit_diff(trace: SimulationTrace, naive: SimulationTrace) -> float:
    """Time integral of the percent profit difference to the naive run [% * s]."""
    _check_aligned(trace, naive)
    return _trapz(profit_diff(_profit(trace), _profit(naive)), trace.time)


def convergence_time(trace: SimulationTrace, event: float, tol: float, hold: float) -> Optional[float]:
    """Delay after ``event`` until every ``|cv| < tol`` for at least ``hold`` seconds."""
    t = trace.time
    ok = np.all(np.abs(np.nan_to_num(trace.block("cv"), nan=np.inf)) < tol, axis=1)
    start = None
    for k in np.nonzero(t >= event)[0]:
        if ok[k]:
            if start is None:
                start = t[k]
            if t[k] - start >= hold:
                return float(start - event)
        else:
            start = None
    return None


def compute_metrics(
    trace: SimulationTrace,
    naive_trace: Optional[SimulationTrace] = None,
    oracle_samples=None,
    events: Sequence[float] = (),
    tol: float = 1e-3,
    hold: Optional[float] = None,
) -> Metrics:
    """Summarise ``trace``.

    ``oracle_samples`` is an optional trace (e.g. from the ``oracle-track``
    architecture) on the same grid; the steady-state gap compares the last
    samples. ``hold`` defaults to ten coordinator periods.
    """
    viol = violation_integral(trace)
    over = np.maximum(trace.block("g_total") - trace.block("g_max"), 0.0)
    cost = _trapz(trace.block("cost").sum(axis=1), trace.time)
    pdiff = cumulative_profit_diff(trace, naive_trace) if naive_trace is not None else None
    if hold is None:
        dt = float(trace.time[1] - trace.time[0]) if len(trace) > 1 else 0.0
        hold = 10 * int(trace.meta.get("period", 10)) * dt
    conv = [convergence_time(trace, e, tol, hold) for e in events] if "cv[0][0]" in trace.columns else []
    gap = None
    if oracle_samples is not None and len(trace):
        _check_aligned(trace, oracle_samples)
        u = trace.block("u")[-1]
        u_star = oracle_samples.block("u")[-1]
        total, total_star = float(u.sum()), float(u_star.sum())
        gap = {"total_input_rel": abs(total - total_star) / max(abs(total_star), 1e-12)}
        lam = trace.block("lambda")[-1]
        if np.all(np.isfinite(lam)):
            gap["price_abs"] = float(np.max(np.abs(lam - oracle_samples.block("lambda")[-1])))
    return Metrics(
        violation_integral=[float(v) for v in viol],
        max_violation=[float(v) for v in over.max(axis=0)] if len(trace) else [0.0] * over.shape[1],
        cumulative_cost=cost,
        cumulative_pdiff=pdiff,
        convergence_times=conv,
        steady_state_gap=gap,
    )
