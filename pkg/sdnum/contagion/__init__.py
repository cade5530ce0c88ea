"""Contagion engine shared by the pandemic and wildfire scenarios."""

from .graph import (
    EpochConfig,
    Mode,
    NodeState,
    PropagationGraph,
    SystemState,
    read_graph,
    write_graph,
)
from .engine import count_by_state, simulate, step_epoch, step_subinterval, trajectory_rows

__all__ = [
    "EpochConfig",
    "Mode",
    "NodeState",
    "PropagationGraph",
    "SystemState",
    "count_by_state",
    "read_graph",
    "simulate",
    "step_epoch",
    "step_subinterval",
    "trajectory_rows",
    "write_graph",
]
