"""Steady-state subsystem problems built on the plant models.

Each model exposes the local cost ``J_i(u, d)``, the resource usage
``g_i(u, d)``, analytic gradients, and the minimiser of the priced local
problem (used by the centralized oracle). Disturbances arrive as a plain
dict of named scalars for that subsystem.
"""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np
from scipy import optimize

from .core import GradientPair, UsageError
from .plant import (
    HouseParams,
    HouseState,
    WellParams,
    house_derivatives,
    house_matrices,
    rk4_step,
    well_marginal_gain,
    well_production,
)

__all__ = ["SubsystemModel", "HouseSubsystem", "WellSubsystem", "QuadraticSubsystem"]

Disturbance = Dict[str, float]


class SubsystemModel:
    """Common surface for steady-state subsystem problems."""

    n_inputs: int = 1
    m: int = 1
    input_constraint: bool = True
    n_local_constraints: int = 0

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != (self.n_inputs,) or self.upper.shape != (self.n_inputs,):
            raise UsageError("bounds must have one entry per input")

    # Admissible domain for finite differences; bounds by default.
    def domain(self):
        return self.lower, self.upper

    def clip(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)

    def cost(self, u, d: Disturbance) -> float:
        raise NotImplementedError

    def usage(self, u, d: Disturbance) -> np.ndarray:
        return np.atleast_1d(np.asarray(u, dtype=float)).copy()

    def cost_many(self, us, d: Disturbance) -> np.ndarray:
        """Cost of a single-input model at every point of ``us``."""
        return np.array([self.cost(np.array([x]), d) for x in np.asarray(us, dtype=float)])

    def gradients(self, u, d: Disturbance) -> GradientPair:
        raise NotImplementedError

    def local_constraints(self, u, d: Disturbance) -> np.ndarray:
        return np.zeros(0)

    def local_constraint_jacobian(self, u, d: Disturbance) -> np.ndarray:
        return np.zeros((self.n_inputs, 0))

    def best_response(self, lam, d: Disturbance) -> np.ndarray:
        """Minimise ``J(u) + lam^T g(u)`` over the input bounds."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))

        def priced(u):
            return self.cost(u, d) + float(lam @ self.usage(u, d))

        if self.n_inputs == 1:
            lo, hi = float(self.lower[0]), float(self.upper[0])

            def slope(x):
                gp = self.gradients(np.array([x]), d)
                return float(gp.gamma[0] + gp.phi[0] @ lam)

            # convex in u: the priced slope is monotone, so its sign at the
            # bounds decides between a corner and an interior root
            if slope(lo) >= 0.0:
                return np.array([lo])
            if slope(hi) <= 0.0:
                return np.array([hi])
            x = optimize.brentq(slope, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
            return np.array([x])

        def grad(u):
            gp = self.gradients(u, d)
            return gp.gamma + gp.phi @ lam

        x0 = 0.5 * (self.lower + self.upper)
        res = optimize.minimize(
            priced,
            x0,
            jac=grad,
            method="L-BFGS-B",
            bounds=list(zip(self.lower, self.upper)),
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 5000},
        )
        return res.x

    # Dynamic plant hooks; static models have no state.
    def initial_state(self, u, d: Disturbance):
        return None

    def advance(self, state, u, d: Disturbance, dt_s: float):
        return state

    def measured_cost(self, state, u, d: Disturbance) -> float:
        return self.cost(u, d)

    def plant_outputs(self, state, u, d: Disturbance) -> Dict[str, float]:
        return {}


class HouseSubsystem(SubsystemModel):
    """Electrically heated house; cost is the squared steady-state
    deviation of the interior temperature from its setpoint."""

    def __init__(self, params: HouseParams, lower=0.0, upper=25.0):
        super().__init__([lower], [upper])
        self.params = params
        A, B, E = house_matrices(params)
        coef = np.linalg.solve(A, -np.column_stack([B, E]))
        # T_r^ss = gain * u + c_ambient * T_a + c_solar * irradiance
        self.gain = float(coef[1, 0])
        self.c_ambient = float(coef[1, 1])
        self.c_solar = float(coef[1, 2])

    def steady_temperature(self, u, d: Disturbance) -> float:
        u = float(np.atleast_1d(u)[0])
        return self.gain * u + self.c_ambient * d["T_a"] + self.c_solar * d["irradiance"]

    def unconstrained_demand(self, d: Disturbance) -> float:
        t0 = self.steady_temperature(0.0, d)
        return (d["T_sp"] - t0) / self.gain

    def cost(self, u, d):
        return (self.steady_temperature(u, d) - d["T_sp"]) ** 2

    def cost_many(self, us, d):
        us = np.asarray(us, dtype=float)
        t = self.gain * us + self.c_ambient * d["T_a"] + self.c_solar * d["irradiance"]
        return (t - d["T_sp"]) ** 2

    def gradients(self, u, d):
        dev = self.steady_temperature(u, d) - d["T_sp"]
        return GradientPair(np.array([2.0 * dev * self.gain]), np.ones((1, 1)))

    def best_response(self, lam, d):
        lam = float(np.atleast_1d(lam)[0])
        u = self.unconstrained_demand(d) - lam / (2.0 * self.gain**2)
        return self.clip([u])

    def initial_state(self, u, d):
        A, B, E = house_matrices(self.params)
        u0 = float(np.atleast_1d(u)[0])
        return np.linalg.solve(A, -(B * u0 + E @ np.array([d["T_a"], d["irradiance"]])))

    def advance(self, state, u, d, dt_s):
        p = self.params
        u0 = float(np.atleast_1d(u)[0])
        T_a, irr = d["T_a"], d["irradiance"]
        x = rk4_step(state, lambda x: house_derivatives(x, u0, T_a, irr, p), dt_s / 3600.0)
        HouseState.from_array(x).check()
        return x

    def measured_cost(self, state, u, d):
        return float((state[1] - d["T_sp"]) ** 2)

    def plant_outputs(self, state, u, d):
        return {"T_r": float(state[1])}


class WellSubsystem(SubsystemModel):
    """Gas-lifted well; cost is minus the revenue ``price * Q_l``."""

    def __init__(self, params: WellParams, lower=0.0, upper: Optional[float] = None):
        if upper is None:
            upper = params.max_gas
        if lower < 0 or upper > params.max_gas + 1e-12:
            raise UsageError("gas bounds must lie inside the admissible range")
        super().__init__([lower], [upper])
        self.params = params

    def domain(self):
        return np.zeros(1), np.array([self.params.max_gas])

    def liquid_rate(self, u, d) -> float:
        return well_production(float(np.atleast_1d(u)[0]), d["opening"], self.params)

    def cost(self, u, d):
        return -self.params.price * self.liquid_rate(u, d)

    def cost_many(self, us, d):
        us = np.asarray(us, dtype=float)
        p = self.params
        return -p.price * d["opening"] * (p.q0 + p.alpha * us - p.beta * us * us)

    def gradients(self, u, d):
        g = well_marginal_gain(float(np.atleast_1d(u)[0]), d["opening"], self.params)
        return GradientPair(np.array([-self.params.price * g]), np.ones((1, 1)))

    def plant_outputs(self, state, u, d):
        return {"Ql": self.liquid_rate(u, d)}


class QuadraticSubsystem(SubsystemModel):
    """``J = 0.5 u^T H u + f^T u`` with linear usage ``g = A u``.

    Optional local constraints ``C u - e <= 0``. The disturbance dict may
    carry ``shift_k`` entries that are added to ``f[k]``.
    """

    def __init__(self, H, f, A, lower, upper, C=None, e=None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        self.n_inputs = H.shape[0]
        A = np.asarray(A, dtype=float).reshape(-1, self.n_inputs)
        self.m = A.shape[0]
        super().__init__(lower, upper)
        self.H, self.f, self.A = H, np.asarray(f, dtype=float), A
        self.input_constraint = self.m == self.n_inputs and np.allclose(A, np.eye(self.m))
        if C is not None:
            self.C = np.asarray(C, dtype=float).reshape(-1, self.n_inputs)
            self.e = np.atleast_1d(np.asarray(e, dtype=float))
            self.n_local_constraints = self.C.shape[0]
        else:
            self.C, self.e = np.zeros((0, self.n_inputs)), np.zeros(0)

    def _f(self, d):
        f = self.f.copy()
        for k in range(f.size):
            f[k] += d.get(f"shift_{k}", 0.0)
        return f

    def cost(self, u, d):
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.H @ u + self._f(d) @ u)

    def usage(self, u, d):
        return self.A @ np.asarray(u, dtype=float)

    def gradients(self, u, d):
        u = np.asarray(u, dtype=float)
        return GradientPair(self.H @ u + self._f(d), self.A.T.copy())

    def local_constraints(self, u, d):
        return self.C @ np.asarray(u, dtype=float) - self.e

    def local_constraint_jacobian(self, u, d):
        return self.C.T.copy()
