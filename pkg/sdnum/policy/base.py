"""
Abstract base class for site policies.

A policy maps an observed site state and a per-epoch budget to a
feasible action. Policies are stateless: all randomness comes from the
generator passed to decide(), so a policy object can be shared between
replicas and worker processes.
"""

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from sdnum.scenarios import Action, Scenario, SiteState


class Policy(ABC):
    """Maps (state, budget, mask) to an action inside the mask and within budget."""

    name: str = "policy"
    modes = ("pandemic", "wildfire")

    @abstractmethod
    def decide(
        self,
        scenario: Scenario,
        state: SiteState,
        budget: int,
        rng: np.random.Generator,
        mask: Optional[np.ndarray] = None,
    ) -> Action:
        """
        Choose the action for the current epoch.

        Args:
            scenario: Site MDP the state belongs to.
            state: Observed state (units already deployed to the budget).
            budget: Per-epoch resource budget.
            rng: Stream for randomized choices.
            mask: Actionable node ids; taken from the scenario when omitted.

        Returns:
            A feasible action; the empty tuple does nothing.
        """

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"
