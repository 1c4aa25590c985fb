"""Column-oriented simulation record."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..core import UsageError

__all__ = ["SimulationTrace", "trace_columns"]

_INDEXED = re.compile(r"^([A-Za-z_]+)((?:\[\d+\])*)$")


def trace_columns(N: int, n_inputs: List[int], m: int, plant: List[str]) -> List[str]:
    """Column names in file order for a scenario's dimensions.

    ``plant`` lists the plant columns: per-subsystem names (``T_r``,
    ``Ql``) get an index, scalar names (``Q``) do not.
    """
    cols = ["time"]
    cols += [f"u[{i}][{j}]" for i in range(N) for j in range(n_inputs[i])]
    cols += [f"cv[{i}][{j}]" for i in range(N) for j in range(n_inputs[i])]
    cols += [f"lambda[{k}]" for k in range(m)]
    cols += [f"lambda_i[{i}][{k}]" for i in range(N) for k in range(m)]
    cols += [f"t_alloc[{i}][{k}]" for i in range(N) for k in range(m)]
    cols += [f"branch[{i}]" for i in range(N)]
    cols += [f"g_total[{k}]" for k in range(m)]
    cols += [f"g_max[{k}]" for k in range(m)]
    cols += [f"cost[{i}]" for i in range(N)]
    for name in plant:
        if name == "Q":
            cols.append("Q")
        else:
            cols += [f"{name}[{i}]" for i in range(N)]
    return cols


@dataclass
class SimulationTrace:
    """Time-indexed record; one float array per named column."""

    columns: Dict[str, np.ndarray]
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if "time" not in self.columns:
            raise UsageError("a trace needs a time column")
        n = len(self.columns["time"])
        for name, col in self.columns.items():
            if len(col) != n:
                raise UsageError(f"column {name} has {len(col)} samples, time has {n}")
            if not _INDEXED.match(name):
                raise UsageError(f"bad column name {name!r}")

    @property
    def names(self) -> List[str]:
        return list(self.columns)

    def __len__(self) -> int:
        return len(self.columns["time"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def time(self) -> np.ndarray:
        return self.columns["time"]

    def block(self, prefix: str) -> np.ndarray:
        """Stack every column ``prefix[...]`` into a (samples, count) array."""
        names = [c for c in self.columns if c == prefix or c.startswith(prefix + "[")]
        if not names:
            raise KeyError(prefix)
        return np.column_stack([self.columns[c] for c in names])

    def head(self, n: int) -> "SimulationTrace":
        return SimulationTrace({k: v[:n].copy() for k, v in self.columns.items()}, dict(self.meta))

    def equals(self, other: "SimulationTrace") -> bool:
        if self.names != other.names:
            return False
        return all(np.array_equal(self[c], other[c], equal_nan=True) for c in self.names)
