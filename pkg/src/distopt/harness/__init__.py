"""Simulation loop, metrics, trace files and the socket runtime."""

from .distributed import run_coordinator, run_distributed_local, run_subsystem
from .metrics import Metrics, compute_metrics, cumulative_profit_diff, violation_integral
from .protocol import (
    AllocationUpdate,
    OpportunityCostReport,
    OverrideReport,
    PriceBroadcast,
    UsageReport,
    decode_message,
    encode_message,
)
from .simulation import ARCHITECTURES, run_simulation
from .trace import SimulationTrace
from .tracecsv import read_trace_csv, write_trace_csv

__all__ = [
    "ARCHITECTURES",
    "run_simulation",
    "SimulationTrace",
    "Metrics",
    "compute_metrics",
    "cumulative_profit_diff",
    "violation_integral",
    "write_trace_csv",
    "read_trace_csv",
    "encode_message",
    "decode_message",
    "PriceBroadcast",
    "UsageReport",
    "OpportunityCostReport",
    "AllocationUpdate",
    "OverrideReport",
    "run_coordinator",
    "run_subsystem",
    "run_distributed_local",
]
