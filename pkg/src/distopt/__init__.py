"""Distributed feedback-optimizing control of subsystems that share a resource.

Three coordination schemes (price-based, price-based with a constraint
override, and resource allocation) run on top of local feedback loops
that drive steady-state gradients to zero.
"""

from .core import (
    DegenerateConstraintError,
    DistOptError,
    InputError,
    ModelError,
    OracleError,
    ProtocolError,
    ScenarioError,
    SimulationFault,
    UsageError,
)
from .scenarios import Scenario, centralized_oracle, disturbance_at, load_scenario

__version__ = "0.1.0"

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
    "Scenario",
    "load_scenario",
    "disturbance_at",
    "centralized_oracle",
]
