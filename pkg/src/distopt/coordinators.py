"""The three coordination architectures.

Every architecture has a fast local layer inside each subsystem and a slow
coordination layer. Coordinator updates are per tick: the integral gains
in the tuning tables are per coordinator sample, so the slow layer's speed
scales with its period.

* dual: the coordinator integrates the constraint violation into a shadow
  price that every subsystem adds to its cost gradient.
* dual-override: as dual, plus a fast constraint controller in the critical
  subsystems, min-selected against the gradient controller; the coordinator
  integrates the selector gap ``u_c - u_g`` instead of the violation.
* primal: the coordinator allocates resource shares, equalising the
  reported opportunity costs; the last subsystem takes the remainder.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .control import (
    CONSTRAINT,
    GRADIENT,
    NO_BRANCH,
    PiState,
    clamped_integral_step,
    min_select,
    pi_step,
    pi_track,
)
from .core import UsageError
from .gradients import (
    GradientProvider,
    local_controlled_variable,
    opportunity_cost,
    reduced_gradient,
)

log = logging.getLogger(__name__)

__all__ = [
    "MIN_PERIOD",
    "DualCoordinatorState",
    "OverrideConfig",
    "PrimalCoordinatorState",
    "dual_coordinator_step",
    "dual_local_step",
    "override_local_step",
    "override_coordinator_step",
    "primal_local_step",
    "primal_coordinator_step",
    "primal_closure",
    "local_constraint_price_update",
    "SubsystemAgent",
]

# Coordinator period, in local samples, required for timescale separation.
MIN_PERIOD = 5


def _check_period(period: int, allow_unseparated: bool) -> None:
    if period < 1:
        raise UsageError("coordinator period must be at least one local sample")
    if period < MIN_PERIOD and not allow_unseparated:
        raise UsageError(
            f"coordinator period {period} is below {MIN_PERIOD} local samples; "
            "set allow_unseparated to run without timescale separation"
        )


@dataclass(frozen=True)
class DualCoordinatorState:
    lam: np.ndarray
    gain: np.ndarray
    period: int = 10
    allow_unseparated: bool = False

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        gain = np.atleast_1d(np.asarray(self.gain, dtype=float))
        if gain.shape == (1,) and lam.shape[0] > 1:
            gain = np.full(lam.shape, gain[0])
        if gain.shape != lam.shape:
            raise UsageError("one coordinator gain per constraint")
        if np.any(lam < 0):
            raise UsageError("shadow prices must be non-negative")
        _check_period(self.period, self.allow_unseparated)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gain", gain)


@dataclass(frozen=True)
class OverrideConfig:
    """Critical subsystems and the fast constraint controller they run.

    ``critical[j]`` lists the subsystems whose input ``j`` is paired with
    coupling constraint ``j``.
    """

    critical: Tuple[Tuple[int, ...], ...]
    constraint_pi: PiState

    def __post_init__(self):
        if any(len(c) == 0 for c in self.critical):
            raise UsageError("every coupling constraint needs a critical subsystem")

    def constraint_of(self, i: int) -> List[int]:
        return [j for j, subs in enumerate(self.critical) if i in subs]


@dataclass(frozen=True)
class PrimalCoordinatorState:
    """Allocations ``t`` (N, m) plus the marginal controller of subsystem N."""

    t: np.ndarray
    t_marg: np.ndarray
    gains: np.ndarray
    marginal_gain: np.ndarray
    period: int = 10
    allow_unseparated: bool = False

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.t, dtype=float))
        N, m = t.shape
        if N < 2:
            raise UsageError("primal coordination needs at least two subsystems")
        gains = np.asarray(self.gains, dtype=float).reshape(-1)
        if gains.shape[0] != N - 1:
            raise UsageError(f"need {N - 1} equaliser gains, got {gains.shape[0]}")
        mg = np.atleast_1d(np.asarray(self.marginal_gain, dtype=float))
        if mg.shape == (1,) and m > 1:
            mg = np.full(m, mg[0])
        _check_period(self.period, self.allow_unseparated)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "t_marg", np.atleast_1d(np.asarray(self.t_marg, dtype=float)))
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "marginal_gain", mg)

    @classmethod
    def naive(cls, g_bar, N: int, gains, marginal_gain, period=10, allow_unseparated=False):
        g_bar = np.atleast_1d(np.asarray(g_bar, dtype=float))
        t = np.tile(g_bar / N, (N, 1))
        return cls(t, t[-1].copy(), gains, marginal_gain, period, allow_unseparated)


# --------------------------------------------------------------------------
# dual

def dual_coordinator_step(s: DualCoordinatorState, total_usage, g_bar) -> DualCoordinatorState:
    """Shadow-price update from the reported total usage."""
    err = np.atleast_1d(np.asarray(total_usage, dtype=float)) - np.atleast_1d(
        np.asarray(g_bar, dtype=float)
    )
    return replace(s, lam=clamped_integral_step(s.lam, err, s.gain, 1.0))


def _gradient_loops(pis: Sequence[PiState], cv: np.ndarray, dt: float):
    out = np.empty(len(pis))
    new = []
    for j, pi in enumerate(pis):
        out[j], p = pi_step(pi, 0.0, cv[j], dt)
        new.append(p)
    return out, new


def dual_local_step(
    provider: GradientProvider,
    lam,
    pis: Sequence[PiState],
    u,
    d,
    dt: float,
    mu=None,
):
    """Drive the priced gradient to zero with one PI loop per input.

    Returns ``(u_new, pis_new, cv)`` where ``cv`` was measured at ``u``.
    """
    gp = provider(u, d)
    grad_h = None
    if mu is not None and np.size(mu):
        grad_h = provider.model.local_constraint_jacobian(u, d)
    cv = local_controlled_variable(gp.gamma, gp.phi, lam, grad_h, mu)
    u_new, new = _gradient_loops(pis, cv, dt)
    return u_new, new, cv


# --------------------------------------------------------------------------
# dual with override

def override_local_step(
    provider: GradientProvider,
    lam,
    total_usage,
    g_bar,
    grad_pis: Sequence[PiState],
    con_pis: Sequence[PiState],
    paired: Sequence[int],
    u,
    d,
    dt: float,
    mu=None,
):
    """Gradient loop min-selected against a fast total-usage loop.

    ``paired[k]`` is the coupling constraint controlled through input ``k``
    (inputs beyond ``len(paired)`` are gradient-controlled only). The
    deselected loop tracks the applied input.

    Returns ``(u, grad_pis, con_pis, cv, u_c, u_g, which)`` with ``u_c``
    the gradient-loop and ``u_g`` the constraint-loop outputs of the
    paired inputs.
    """
    u_c, grad_new, cv = dual_local_step(provider, lam, grad_pis, u, d, dt, mu)
    total_usage = np.atleast_1d(np.asarray(total_usage, dtype=float))
    g_bar = np.atleast_1d(np.asarray(g_bar, dtype=float))
    u_out = u_c.copy()
    u_g = np.full(len(paired), np.nan)
    which = np.full(len(paired), GRADIENT)
    con_new = []
    for k, j in enumerate(paired):
        u_g[k], con = pi_step(con_pis[k], g_bar[j], total_usage[j], dt)
        u_out[k], which[k] = min_select(u_c[k], u_g[k])
        if which[k] == CONSTRAINT:
            grad_new[k] = pi_track(grad_new[k], u_c[k], u_out[k], dt)
        else:
            con = pi_track(con, u_g[k], u_out[k], dt)
        con_new.append(con)
    return u_out, grad_new, con_new, cv, u_c[: len(paired)], u_g, which


def override_coordinator_step(s: DualCoordinatorState, u_c, u_g) -> DualCoordinatorState:
    """Shadow-price update from the selector gap ``u_c - u_g`` of the critical subsystems."""
    err = np.atleast_1d(np.asarray(u_c, dtype=float)) - np.atleast_1d(np.asarray(u_g, dtype=float))
    return replace(s, lam=clamped_integral_step(s.lam, err, s.gain, 1.0))


# --------------------------------------------------------------------------
# primal

def primal_local_step(
    provider: GradientProvider,
    t_i,
    u,
    d,
    dt: float,
    pis: Optional[Sequence[PiState]] = None,
):
    """Track the allocation and report the opportunity cost.

    Input-constrained models (``g_i = u_i``) apply ``u_i = t_i`` directly,
    clamped to the input bounds. Otherwise the first ``m`` inputs control
    ``g_i - t_i`` and the rest control the reduced gradient.

    Returns ``(u_new, lam_i, cv, pis_new, clamped)``.
    """
    model = provider.model
    t_i = np.atleast_1d(np.asarray(t_i, dtype=float))
    if model.input_constraint:
        u_new = model.clip(t_i)
        clamped = bool(np.any(u_new != t_i))
        gp = provider(u_new, d)
        lam_i = opportunity_cost(gp.gamma, gp.phi)
        cv = model.usage(u_new, d) - t_i
        return u_new, lam_i, cv, pis, clamped
    if pis is None:
        raise UsageError("non-input constraints need local PI loops in the primal architecture")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    gp = provider(u, d)
    m = model.m
    cv = np.concatenate([model.usage(u, d) - t_i, reduced_gradient(gp.gamma, gp.phi)])
    u_new = np.empty_like(u)
    new = []
    for k, pi in enumerate(pis):
        u_new[k], p = pi_step(pi, 0.0, cv[k], dt)
        new.append(p)
    lam_i = opportunity_cost(gp.gamma, gp.phi)
    clamped = bool(np.any(np.isclose(u_new, model.lower) | np.isclose(u_new, model.upper)))
    return u_new, lam_i, cv[: max(m, u.size)], new, clamped


def primal_closure(s: PrimalCoordinatorState, g_bar) -> Tuple[PrimalCoordinatorState, bool]:
    """Give subsystem N the smaller of the remainder and its marginal request.

    If the first N-1 shares already exceed the supply they are scaled down
    proportionally and the flag is set.
    """
    g_bar = np.atleast_1d(np.asarray(g_bar, dtype=float))
    t = s.t.copy()
    head = t[:-1]
    flagged = False
    feas = g_bar - head.sum(axis=0)
    if np.any(feas < 0):
        flagged = True
        totals = head.sum(axis=0)
        scale = np.where(totals > g_bar, g_bar / np.where(totals > 0, totals, 1.0), 1.0)
        head *= scale
        feas = np.maximum(g_bar - head.sum(axis=0), 0.0)
    t_marg = np.maximum(s.t_marg, 0.0)
    t_N, _ = min_select(t_marg, feas)
    t_N = np.atleast_1d(t_N)
    # anti-windup of the marginal controller: never run ahead of the remainder
    t_marg = np.minimum(t_marg, feas)
    t[-1] = t_N
    # the budget must hold in floating point too, not just algebraically
    for j in range(t.shape[1]):
        while (excess := math.fsum(t[:, j]) - g_bar[j]) > 0.0:
            k = t.shape[0] - 1 if t[-1, j] > 0.0 else int(np.argmax(t[:, j]))
            t[k, j] = max(t[k, j] - max(excess, np.spacing(t[k, j])), 0.0)
    return replace(s, t=t, t_marg=t_marg), flagged


def primal_coordinator_step(s: PrimalCoordinatorState, lams, g_bar) -> Tuple[PrimalCoordinatorState, bool]:
    """Equalise opportunity costs against subsystem N, then close the budget."""
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    g_bar = np.atleast_1d(np.asarray(g_bar, dtype=float))
    lam_N = lams[-1]
    t = s.t.copy()
    t[:-1] = t[:-1] + s.gains[:, None] * (lam_N[None, :] - lams[:-1])
    t[:-1] = np.clip(t[:-1], 0.0, g_bar[None, :])
    t_marg = s.t_marg + s.marginal_gain * (0.0 - lam_N)
    return primal_closure(replace(s, t=t, t_marg=t_marg), g_bar)


def local_constraint_price_update(mu, h, K, dt: float = 1.0) -> np.ndarray:
    """Multiplier of a subsystem's own constraints ``h_i <= 0``."""
    return clamped_integral_step(mu, h, K, dt)


# --------------------------------------------------------------------------
# agents

@dataclass
class SubsystemAgent:
    """Everything inside one subsystem's information boundary.

    Holds the applied input, the local controllers, the plant state and
    the last values reported to the coordinator.
    """

    index: int
    provider: GradientProvider
    arch: str
    u: np.ndarray
    dt: float
    grad_pis: List[PiState] = field(default_factory=list)
    con_pis: List[PiState] = field(default_factory=list)
    paired: List[int] = field(default_factory=list)
    primal_pis: Optional[List[PiState]] = None
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_gain: np.ndarray = field(default_factory=lambda: np.zeros(0))
    state: object = None
    cv: np.ndarray = None
    lam_i: np.ndarray = None
    u_c: np.ndarray = None
    u_g: np.ndarray = None
    branch: int = NO_BRANCH
    clamped: bool = False

    @property
    def model(self):
        return self.provider.model

    @property
    def critical(self) -> bool:
        return bool(self.paired)

    def start(self, d) -> None:
        self.state = self.model.initial_state(self.u, d)
        n = self.model.n_inputs
        self.cv = np.full(n, np.nan)
        self.lam_i = np.full(self.model.m, np.nan)
        if self.critical:
            self.u_c = self.u[: len(self.paired)].copy()
            self.u_g = self.u_c.copy()
        if self.arch == "primal":
            gp = self.provider(self.u, d)
            self.lam_i = opportunity_cost(gp.gamma, gp.phi)

    def usage(self, d) -> np.ndarray:
        return self.model.usage(self.u, d)

    def price_step(self, d) -> None:
        """Slow-timescale update of the local-constraint multipliers."""
        if self.mu.size:
            h = self.model.local_constraints(self.u, d)
            self.mu = local_constraint_price_update(self.mu, h, self.mu_gain)

    def local_step(self, d, signal, total_usage=None, g_bar=None) -> None:
        if self.arch in ("dual", "dual-override") and not self.critical:
            self.u, self.grad_pis, self.cv = dual_local_step(
                self.provider, signal, self.grad_pis, self.u, d, self.dt, self.mu
            )
            self.branch = NO_BRANCH
        elif self.arch == "dual-override":
            (
                self.u,
                self.grad_pis,
                self.con_pis,
                self.cv,
                self.u_c,
                self.u_g,
                which,
            ) = override_local_step(
                self.provider,
                signal,
                total_usage,
                g_bar,
                self.grad_pis,
                self.con_pis,
                self.paired,
                self.u,
                d,
                self.dt,
                self.mu,
            )
            self.branch = int(np.max(which))
        elif self.arch == "primal":
            self.u, self.lam_i, self.cv, self.primal_pis, self.clamped = primal_local_step(
                self.provider, signal, self.u, d, self.dt, self.primal_pis
            )
            if self.clamped:
                log.debug("subsystem %d allocation clamped to input bounds", self.index)
        else:
            raise UsageError(f"agent cannot run architecture {self.arch!r}")

    def advance(self, d, dt_s: float) -> None:
        self.state = self.model.advance(self.state, self.u, d, dt_s)
