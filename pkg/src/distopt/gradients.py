"""Steady-state gradient providers and the controlled variables built from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import GradientPair, InputError, UsageError, least_squares_multipliers, null_space_basis

__all__ = [
    "GradientProvider",
    "local_gradients",
    "local_controlled_variable",
    "reduced_gradient",
    "opportunity_cost",
]

DEFAULT_FD_STEP = 1e-4


@dataclass(frozen=True)
class GradientProvider:
    """Source of ``(Gamma, Phi)`` for one subsystem model.

    ``mode="analytic"`` uses the model's exact steady-state derivatives;
    ``mode="fd"`` takes central differences of the steady-state cost and
    usage maps with step ``h``.
    """

    model: object
    mode: str = "analytic"
    h: float = DEFAULT_FD_STEP

    def __post_init__(self):
        if self.mode not in ("analytic", "fd"):
            raise UsageError(f"unknown gradient mode {self.mode!r}")
        if self.mode == "fd" and not self.h > 0:
            raise UsageError("finite-difference step must be positive")

    def __call__(self, u, d) -> GradientPair:
        return local_gradients(self, u, d)


def _central_differences(model, u, d, h) -> GradientPair:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo, hi = model.domain()
    if np.any(u - h < lo) or np.any(u + h > hi):
        raise InputError(f"finite-difference stencil around {u} leaves the model domain")
    n = u.shape[0]
    gamma = np.empty(n)
    phi = np.empty((n, model.m))
    for j in range(n):
        up, dn = u.copy(), u.copy()
        up[j] += h
        dn[j] -= h
        gamma[j] = (model.cost(up, d) - model.cost(dn, d)) / (2.0 * h)
        phi[j] = (model.usage(up, d) - model.usage(dn, d)) / (2.0 * h)
    return GradientPair(gamma, phi)


def local_gradients(provider: GradientProvider, u, d) -> GradientPair:
    """Cost gradient and constraint Jacobian of one subsystem at ``u``."""
    if provider.mode == "fd":
        return _central_differences(provider.model, u, d, provider.h)
    return provider.model.gradients(u, d)


def local_controlled_variable(gamma, phi, lam, grad_h=None, mu=None) -> np.ndarray:
    """Priced gradient ``Gamma + Phi lam`` (plus ``grad_h mu`` for local constraints)."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    phi = np.asarray(phi, dtype=float).reshape(gamma.shape[0], -1)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if phi.shape[1] != lam.shape[0]:
        raise UsageError(f"price has {lam.shape[0]} entries, constraints have {phi.shape[1]}")
    c = gamma + phi @ lam
    if grad_h is not None and mu is not None and np.size(mu):
        c = c + np.asarray(grad_h, dtype=float).reshape(gamma.shape[0], -1) @ np.atleast_1d(mu)
    return c


def reduced_gradient(gamma, phi) -> np.ndarray:
    """Cost gradient projected on the null space of the constraint Jacobian."""
    basis = null_space_basis(phi)
    return basis.T @ np.atleast_1d(np.asarray(gamma, dtype=float))


def opportunity_cost(gamma, phi, full_output: bool = False):
    """Local multiplier of the allocated-resource constraint.

    The marginal value of one more unit of allocated resource to this
    subsystem.
    """
    return least_squares_multipliers(gamma, phi, full_output=full_output)
