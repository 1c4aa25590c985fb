"""Plant physics for the two case studies.

The house model is a four-state RC thermal network (sensor, interior, heater,
envelope); heat capacities are in kWh/degC and resistances in degC/kW, so
derivatives come out in degC per hour. The well model is a synthetic concave
gas-lift performance curve.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, Tuple

import numpy as np

from .core import InputError, ModelError, SimulationFault, UsageError

__all__ = [
    "HouseParams",
    "HouseState",
    "WellParams",
    "house_matrices",
    "house_derivatives",
    "house_steady_state",
    "house_dc_gain",
    "battery_step",
    "well_production",
    "well_marginal_gain",
    "rk4_step",
    "TEMPERATURE_LIMIT",
]

TEMPERATURE_LIMIT = 200.0


@dataclass(frozen=True)
class HouseParams:
    C_s: float
    C_i: float
    C_e: float
    C_h: float
    R_is: float
    R_ih: float
    R_ie: float
    R_ea: float
    R_ia: float
    A_w: float
    A_e: float

    def __post_init__(self):
        bad = [f.name for f in fields(self) if not (getattr(self, f.name) > 0)]
        if bad:
            raise UsageError(f"house parameters must be strictly positive: {', '.join(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "HouseParams":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls)})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def scaled_resistances(self, c: float) -> "HouseParams":
        d = self.to_dict()
        for k in ("R_is", "R_ih", "R_ie", "R_ea", "R_ia"):
            d[k] *= c
        return HouseParams(**d)


@dataclass(frozen=True)
class HouseState:
    T_s: float
    T_r: float
    T_h: float
    T_e: float

    def as_array(self) -> np.ndarray:
        return np.array([self.T_s, self.T_r, self.T_h, self.T_e])

    @classmethod
    def from_array(cls, x) -> "HouseState":
        x = np.asarray(x, dtype=float)
        return cls(*map(float, x))

    def check(self) -> None:
        if not np.all(np.isfinite(self.as_array())) or np.any(
            np.abs(self.as_array()) > TEMPERATURE_LIMIT
        ):
            raise SimulationFault(f"implausible house state {self}")


@dataclass(frozen=True)
class WellParams:
    """Liquid rate ``Q_l = d (q0 + alpha Q_gl - beta Q_gl^2)`` [L/min]."""

    q0: float
    alpha: float
    beta: float
    price: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise UsageError("well curve needs alpha > 0 and beta > 0")

    @property
    def max_gas(self) -> float:
        """Upper end of the admissible gas range (vertex of the curve)."""
        return self.alpha / (2.0 * self.beta)

    @classmethod
    def from_dict(cls, d: dict) -> "WellParams":
        return cls(float(d["q0"]), float(d["alpha"]), float(d["beta"]), float(d["price"]))

    def to_dict(self) -> dict:
        return {"q0": self.q0, "alpha": self.alpha, "beta": self.beta, "price": self.price}


def house_matrices(p: HouseParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(A, B, E)`` with ``xdot = A x + B u + E [T_a, irradiance]``.

    State order is ``(T_s, T_r, T_h, T_e)``; units are per hour.
    """
    a_rs_s = 1.0 / (p.R_is * p.C_s)
    a_rs_r = 1.0 / (p.R_is * p.C_i)
    a_rh_r = 1.0 / (p.R_ih * p.C_i)
    a_re_r = 1.0 / (p.R_ie * p.C_i)
    a_ra_r = 1.0 / (p.R_ia * p.C_i)
    a_rh_h = 1.0 / (p.R_ih * p.C_h)
    a_re_e = 1.0 / (p.R_ie * p.C_e)
    a_ea_e = 1.0 / (p.R_ea * p.C_e)
    A = np.array(
        [
            [-a_rs_s, a_rs_s, 0.0, 0.0],
            [a_rs_r, -(a_rs_r + a_rh_r + a_re_r + a_ra_r), a_rh_r, a_re_r],
            [0.0, a_rh_h, -a_rh_h, 0.0],
            [0.0, a_re_e, 0.0, -(a_re_e + a_ea_e)],
        ]
    )
    B = np.array([0.0, 0.0, 1.0 / p.C_h, 0.0])
    E = np.array(
        [
            [0.0, 0.0],
            [a_ra_r, p.A_w / p.C_i],
            [0.0, 0.0],
            [a_ea_e, p.A_e / p.C_e],
        ]
    )
    return A, B, E


def house_derivatives(x, u: float, T_a: float, irradiance: float, p: HouseParams) -> np.ndarray:
    """Right-hand side of the RC network, in degC per hour.

    ``x`` is a :class:`HouseState` or an array ``(T_s, T_r, T_h, T_e)``.
    The interior resistances of the ODE are the table's ``R_i*`` values.
    """
    if isinstance(x, HouseState):
        T_s, T_r, T_h, T_e = x.T_s, x.T_r, x.T_h, x.T_e
    else:
        T_s, T_r, T_h, T_e = x
    dT_s = (T_r - T_s) / (p.R_is * p.C_s)
    dT_r = (
        (T_s - T_r) / (p.R_is * p.C_i)
        + (T_h - T_r) / (p.R_ih * p.C_i)
        + p.A_w * irradiance / p.C_i
        + (T_e - T_r) / (p.R_ie * p.C_i)
        + (T_a - T_r) / (p.R_ia * p.C_i)
    )
    dT_h = (T_r - T_h) / (p.R_ih * p.C_h) + u / p.C_h
    dT_e = (
        (T_r - T_e) / (p.R_ie * p.C_e)
        + (T_a - T_e) / (p.R_ea * p.C_e)
        + p.A_e * irradiance / p.C_e
    )
    return np.array([dT_s, dT_r, dT_h, dT_e])


def _solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ModelError("house model matrix is singular") from exc


def house_steady_state(u: float, T_a: float, irradiance: float, p: HouseParams) -> HouseState:
    """Fixed point of :func:`house_derivatives` for constant inputs."""
    A, B, E = house_matrices(p)
    x = _solve(A, -(B * u + E @ np.array([T_a, irradiance])))
    return HouseState.from_array(x)


def house_dc_gain(p: HouseParams) -> float:
    """Steady-state sensitivity of the interior temperature to heater power."""
    A, B, _ = house_matrices(p)
    return float(_solve(A, -B)[1])


def battery_step(Q: float, P_s: float, D: float, dt: float) -> Tuple[float, bool]:
    """Charge after ``dt`` hours; returns ``(Q', depleted)``.

    Charge is clamped at zero and ``depleted`` reports the clamp.
    """
    if not dt > 0:
        raise UsageError("dt must be positive")
    q = Q + (P_s - D) * dt
    if q < 0.0:
        return 0.0, True
    return q, False


def _check_gas(Q_gl: float, p: WellParams) -> None:
    tol = 1e-9 * max(1.0, p.max_gas)
    if not (-tol <= Q_gl <= p.max_gas + tol):
        raise InputError(f"gas rate {Q_gl} outside admissible range [0, {p.max_gas}]")


def well_production(Q_gl: float, d: float, p: WellParams) -> float:
    """Liquid rate [L/min] for gas injection ``Q_gl`` and valve factor ``d``."""
    _check_gas(Q_gl, p)
    return d * (p.q0 + p.alpha * Q_gl - p.beta * Q_gl * Q_gl)


def well_marginal_gain(Q_gl: float, d: float, p: WellParams) -> float:
    """``dQ_l / dQ_gl``; non-negative on the admissible range."""
    _check_gas(Q_gl, p)
    return d * (p.alpha - 2.0 * p.beta * Q_gl)


def rk4_step(state, rhs: Callable[[np.ndarray], np.ndarray], dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``xdot = rhs(x)``."""
    if not dt > 0:
        raise UsageError("dt must be positive")
    x = np.asarray(state, dtype=float)
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * dt * k1)
    k3 = rhs(x + 0.5 * dt * k2)
    k4 = rhs(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise SimulationFault("integrator produced a non-finite state")
    return out
