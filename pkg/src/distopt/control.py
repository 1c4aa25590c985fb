"""Feedback primitives: PI with back-calculation anti-windup, the clamped
integral update used by every price/multiplier loop, and the min selector."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .core import UsageError

__all__ = [
    "PiState",
    "pi_step",
    "pi_track",
    "clamped_integral_step",
    "min_select",
    "GRADIENT",
    "CONSTRAINT",
    "NO_BRANCH",
]

GRADIENT = 0
CONSTRAINT = 1
NO_BRANCH = -1


@dataclass(frozen=True)
class PiState:
    """Gains, output limits and the integral accumulator of one PI loop.

    ``ki`` may be negative; the sign encodes the loop direction.
    """

    kp: float
    ki: float
    integral: float = 0.0
    lo: float = -np.inf
    hi: float = np.inf
    kaw: float = 0.0

    def __post_init__(self):
        if self.lo > self.hi:
            raise UsageError(f"PI output bounds inverted: [{self.lo}, {self.hi}]")
        if not np.isfinite(self.ki) or not np.isfinite(self.kp):
            raise UsageError("PI gains must be finite")


def pi_step(s: PiState, setpoint: float, measurement: float, dt: float) -> Tuple[float, PiState]:
    """Advance one PI sample; returns ``(output, new_state)``."""
    if not dt > 0:
        raise UsageError("dt must be positive")
    e = setpoint - measurement
    integral = s.integral + s.ki * e * dt
    raw = s.kp * e + integral
    out = min(max(raw, s.lo), s.hi)
    if s.kaw and out != raw:
        integral += s.kaw * (out - raw) * dt
    return out, replace(s, integral=integral)


def pi_track(s: PiState, own_output: float, applied: float, dt: float) -> PiState:
    """Pull a deselected loop's integrator toward the value actually applied."""
    if not s.kaw or own_output == applied:
        return s
    return replace(s, integral=s.integral + s.kaw * (applied - own_output) * dt)


def clamped_integral_step(v, error, K, dt: float = 1.0) -> np.ndarray:
    """``max(0, v + K * error * dt)`` entrywise."""
    if not dt > 0:
        raise UsageError("dt must be positive")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    error = np.atleast_1d(np.asarray(error, dtype=float))
    K = np.atleast_1d(np.asarray(K, dtype=float))
    if not np.all(np.isfinite(K)):
        raise UsageError("integral gain must be finite")
    return np.maximum(0.0, v + K * error * dt)


def min_select(u_c, u_g):
    """Elementwise minimum of gradient output ``u_c`` and constraint output ``u_g``.

    Returns ``(u, which)`` where ``which`` is :data:`GRADIENT` or
    :data:`CONSTRAINT` per element. Ties go to the constraint branch.
    """
    a = np.asarray(u_c, dtype=float)
    b = np.asarray(u_g, dtype=float)
    which = np.where(a < b, GRADIENT, CONSTRAINT)
    u = np.minimum(a, b)
    if u.ndim == 0:
        return float(u), int(which)
    return u, which
