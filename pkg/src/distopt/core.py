"""Shared domain types and the two small linear-algebra routines used by the
coordination architectures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Tuple

import numpy as np

__all__ = [
    "DistOptError",
    "UsageError",
    "DegenerateConstraintError",
    "ModelError",
    "InputError",
    "SimulationFault",
    "OracleError",
    "ScenarioError",
    "ProtocolError",
    "UndefinedMetricError",
    "ResourceVector",
    "PriceVector",
    "Allocation",
    "GradientPair",
    "SubsystemSpec",
    "least_squares_multipliers",
    "null_space_basis",
]

# Relative eigenvalue threshold below which Phi^T Phi is treated as singular.
_NEAR_SINGULAR = 1e-9


class DistOptError(Exception):
    """Base class for all library errors."""


class UsageError(DistOptError, ValueError):
    """Wrong shapes, wrong argument combinations, misaligned data."""


class DegenerateConstraintError(DistOptError, ValueError):
    """Constraint gradient is zero or rank deficient."""


class ModelError(DistOptError):
    """A plant model cannot be evaluated (e.g. singular steady-state map)."""


class InputError(DistOptError, ValueError):
    """Input outside the admissible domain of a model or timeline."""


class SimulationFault(DistOptError):
    """Numerical blow-up during simulation.

    ``trace`` carries whatever was recorded up to the last good sample.
    """

    def __init__(self, message: str, trace: Any = None):
        super().__init__(message)
        self.trace = trace


class OracleError(DistOptError):
    """The centralized reference solver failed its own consistency checks."""


class ScenarioError(DistOptError, ValueError):
    """A scenario file cannot be parsed or violates its invariants.

    ``problems`` lists every violation found.
    """

    def __init__(self, message: str, problems=()):
        super().__init__(message)
        self.problems = list(problems)


class ProtocolError(DistOptError, ValueError):
    """A wire message is malformed or of an unknown type."""


class UndefinedMetricError(DistOptError, ValueError):
    """A metric's formula is undefined for the given inputs."""


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise UsageError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class ResourceVector:
    """Amount of each of the ``m`` shared resources."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_vector(self.values, "ResourceVector"))

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PriceVector:
    """Non-negative price per unit of each shared resource."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_vector(self.values, "PriceVector")
        if np.any(arr < 0):
            raise UsageError("prices must be non-negative")
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Allocation:
    """Resource share per subsystem, shape ``(N, m)``."""

    per_subsystem: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.per_subsystem, dtype=float))
        if not np.all(np.isfinite(arr)):
            raise UsageError("allocation has non-finite entries")
        object.__setattr__(self, "per_subsystem", arr)

    def total(self) -> np.ndarray:
        return self.per_subsystem.sum(axis=0)

    def within(self, g_max) -> bool:
        return bool(np.all(self.total() <= np.asarray(g_max, dtype=float) + 1e-12))


@dataclass(frozen=True)
class GradientPair:
    """Cost gradient ``gamma`` (n,) and constraint Jacobian ``phi`` (n, m)."""

    gamma: np.ndarray
    phi: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        gamma = _as_vector(self.gamma, "gamma")
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi.reshape(gamma.shape[0], -1)
        if phi.ndim != 2 or phi.shape[0] != gamma.shape[0]:
            raise UsageError(f"phi shape {phi.shape} does not match gamma {gamma.shape}")
        if not np.all(np.isfinite(phi)):
            raise UsageError("phi has non-finite entries")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class SubsystemSpec:
    """Static description of one subsystem."""

    id: int
    n_inputs: int
    m: int
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    model: Any = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_inputs < 1:
            raise UsageError("a subsystem needs at least one input")
        if len(self.lower) != self.n_inputs or len(self.upper) != self.n_inputs:
            raise UsageError("bounds must have one entry per input")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise UsageError("lower bound above upper bound")

    def supports_primal(self) -> bool:
        return self.n_inputs >= self.m


def _check_phi(phi, n_expected: Optional[int] = None) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi.reshape(-1, 1)
    if phi.ndim != 2:
        raise UsageError(f"phi must be a matrix, got shape {phi.shape}")
    n, m = phi.shape
    if n_expected is not None and n != n_expected:
        raise UsageError(f"phi has {n} rows, expected {n_expected}")
    if m < 1 or n < m:
        raise UsageError(f"need n >= m >= 1, got n={n}, m={m}")
    if not np.all(np.isfinite(phi)):
        raise UsageError("phi has non-finite entries")
    return phi


def least_squares_multipliers(gamma, phi, full_output: bool = False):
    """Multipliers that best cancel the cost gradient through the constraints.

    Returns ``lam = -(phi^T phi)^{-1} phi^T gamma``, i.e. the minimiser of
    ``||gamma + phi lam||``. A near-singular normal matrix (smallest
    eigenvalue below ``1e-9`` times the largest) is regularised with
    ``eps * I``, ``eps = 1e-9 * trace / m``.

    Parameters
    ----------
    gamma : array_like, shape (n,)
    phi : array_like, shape (n, m)
    full_output : bool
        Also return whether regularisation was applied.

    Returns
    -------
    lam : ndarray, shape (m,)
    regularized : bool
        Only when ``full_output`` is true.
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if gamma.ndim != 1:
        raise UsageError("gamma must be a vector")
    phi = _check_phi(phi, gamma.shape[0])
    if not np.all(np.isfinite(gamma)):
        raise UsageError("gamma has non-finite entries")
    if not np.any(phi):
        raise DegenerateConstraintError("constraint gradient is identically zero")

    m = phi.shape[1]
    normal = phi.T @ phi
    rhs = -(phi.T @ gamma)
    eig = np.linalg.eigvalsh(normal)
    regularized = bool(eig[0] < _NEAR_SINGULAR * eig[-1])
    if regularized:
        normal = normal + (_NEAR_SINGULAR * np.trace(normal) / m) * np.eye(m)
    if m == 1:
        lam = rhs / normal[0, 0]
    else:
        lam = np.linalg.solve(normal, rhs)
    if full_output:
        return lam, regularized
    return lam


def null_space_basis(phi) -> np.ndarray:
    """Orthonormal basis ``N`` of the directions orthogonal to ``phi``'s columns.

    ``phi^T N = 0`` and ``N^T N = I``. Each column's first non-negligible
    entry is positive, so the output is deterministic. For a square ``phi``
    the basis is empty, shape ``(n, 0)``.
    """
    phi = _check_phi(phi)
    n, m = phi.shape
    u, s, _ = np.linalg.svd(phi, full_matrices=True)
    if s[0] == 0.0 or s[-1] < _NEAR_SINGULAR * s[0]:
        raise DegenerateConstraintError("constraint gradient is rank deficient")
    basis = u[:, m:].copy()
    for j in range(basis.shape[1]):
        col = basis[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            basis[:, j] = -col
    return basis
