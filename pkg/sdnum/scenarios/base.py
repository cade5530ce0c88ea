"""
Abstract base class for site scenarios.

A scenario wraps the contagion engine as a finite-horizon MDP for one
site: it knows the initial state, the feasible actions, the transition
and the per-epoch utility. Policies and the Monte Carlo evaluator only
talk to this interface.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from sdnum.contagion import EpochConfig, PropagationGraph, SystemState
from sdnum.errors import ConfigError, RejectedActionError

# Pandemic actions are sorted tuples of node ids to vaccinate; wildfire
# actions are tuples of per-unit target cells. The empty tuple is the
# do-nothing action in both.
Action = Tuple[int, ...]


@dataclass(frozen=True)
class UnitState:
    """Firefighting unit positions (cell ids) and per-epoch movement radius."""

    positions: Tuple[int, ...] = ()
    max_step: int = 1

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))
        if self.max_step < 0:
            raise ConfigError("max_step must be non-negative")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class SiteState:
    """Everything a policy may observe about a site at a decision epoch."""

    system: SystemState
    units: Optional[UnitState] = None

    @property
    def epoch(self) -> int:
        return self.system.epoch


class Scenario(ABC):
    """
    Abstract site MDP.

    Subclasses provide the contagion graph, feasibility masks, the
    transition with its utility and the candidate generator used by
    rollout lookahead.
    """

    mode: str = ""

    def __init__(self, name: str, graph: PropagationGraph, dt: float = 1.0):
        self.name = name
        self.graph = graph
        self.dt = dt
        EpochConfig(dt=dt)  # validates 1/dt
        graph.validate(dt)

    @abstractmethod
    def initial_state(self, rng: np.random.Generator) -> SiteState:
        """
        Draw a starting state.

        Args:
            rng: Stream for the initial infections / ignitions.
        """

    @abstractmethod
    def action_mask(self, state: SiteState) -> np.ndarray:
        """Sorted ids of the nodes an action may target in this state."""

    @abstractmethod
    def step(
        self, state: SiteState, action: Action, rng: np.random.Generator
    ) -> Tuple[SiteState, float]:
        """
        Apply an action and advance one epoch.

        Returns:
            (next state, utility earned during the epoch)
        """

    @abstractmethod
    def candidate_actions(
        self, state: SiteState, budget: int, base_action: Action, k: int
    ) -> List[Action]:
        """
        Actions worth comparing in a one-step lookahead.

        Args:
            state: Current state.
            budget: Per-epoch resource budget.
            base_action: What the base policy would do.
            k: Candidate count per decision slot.
        """

    @abstractmethod
    def validate_action(self, state: SiteState, action: Action, budget: int) -> None:
        """Raise RejectedActionError unless the action is feasible."""

    def deploy(self, state: SiteState, budget: int) -> SiteState:
        """Adapt the state to a new per-epoch budget (no-op by default)."""
        return state

    def summary(self, state: SiteState) -> Dict[str, Any]:
        """Counts reported in traces."""
        return {}

    def epoch_config(self, epoch: int) -> EpochConfig:
        return EpochConfig(dt=self.dt, epoch_index=epoch)

    @staticmethod
    def action_key(action: Action) -> Hashable:
        """Ordering key for deterministic tie-breaks (lowest ids first)."""
        return tuple(action)


def as_budget(y: Any) -> int:
    """
    Convert an allocation to the integer per-epoch budget a site can use.

    Vector allocations use their first component (the simulated resource).
    """
    arr = np.atleast_1d(np.asarray(y, dtype=float))
    value = float(arr[0]) if len(arr) else 0.0
    if value < 0:
        raise RejectedActionError(f"budget must be non-negative, got {value}")
    return int(np.floor(value + 1e-9))


def check_within(ids: Sequence[int], allowed: np.ndarray, what: str) -> None:
    """Raise RejectedActionError when some id is outside an allowed set."""
    bad = np.setdiff1d(np.asarray(ids, dtype=np.int64), allowed)
    if len(bad):
        raise RejectedActionError(f"{what}: node {int(bad[0])} is not allowed")
