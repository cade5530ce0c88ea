"""
Monte Carlo rollout policy improvement.

At every decision the rollout policy scores a handful of candidate
actions by simulating the base policy for the rest of a short horizon
and keeps the best one. All candidates of one decision share the same
random streams (common random numbers), so the comparison sees the same
contact and death draws for every candidate.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from sdnum import rng as rngmod
from sdnum.errors import ConfigError
from sdnum.scenarios import Action, Scenario, SiteState
from sdnum.policy.base import Policy

logger = logging.getLogger(__name__)


class RolloutPolicy(Policy):
    """
    One-step lookahead over a base policy.

    Args:
        base: Policy followed after the first step of every rollout.
        n_rollouts: Simulated trajectories per candidate.
        horizon: Epochs per rollout, first step included.
        gamma: Discount factor.
        candidates: Candidates per decision slot handed to the scenario.
    """

    def __init__(
        self,
        base: Policy,
        n_rollouts: int = 8,
        horizon: int = 5,
        gamma: float = 1.0,
        candidates: int = 8,
    ):
        if n_rollouts < 1:
            raise ConfigError(f"n_rollouts must be at least 1, got {n_rollouts}")
        if horizon < 1:
            raise ConfigError(f"rollout horizon must be at least 1, got {horizon}")
        if not 0.0 < gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {gamma}")
        if candidates < 1:
            raise ConfigError("candidates must be at least 1")
        self.base = base
        self.n_rollouts = n_rollouts
        self.horizon = horizon
        self.gamma = gamma
        self.candidates = candidates
        self.modes = base.modes

    @property
    def name(self) -> str:
        return f"rollout({self.base.name})"

    def __repr__(self) -> str:
        return (
            f"RolloutPolicy(base={self.base!r}, n_rollouts={self.n_rollouts}, "
            f"horizon={self.horizon}, gamma={self.gamma})"
        )

    def decide(
        self,
        scenario: Scenario,
        state: SiteState,
        budget: int,
        rng: np.random.Generator,
        mask: Optional[np.ndarray] = None,
    ) -> Action:
        mask = scenario.action_mask(state) if mask is None else mask
        if len(mask) == 0:
            return ()
        base_action = self.base.decide(scenario, state, budget, rng, mask)
        candidates = scenario.candidate_actions(state, budget, base_action, self.candidates)
        if len(candidates) == 1:
            return candidates[0]

        crn_seed = int(rng.integers(0, 2**63 - 1))
        scored: List[Tuple[float, Action]] = []
        for action in candidates:
            values = [
                self.rollout_value(scenario, state, action, budget, crn_seed, j)
                for j in range(self.n_rollouts)
            ]
            scored.append((float(np.mean(values)), action))

        best = max(value for value, _ in scored)
        ties = [a for value, a in scored if value >= best - 1e-12]
        choice = min(ties, key=scenario.action_key)
        logger.debug(
            "[Rollout] %d candidates, best mean %.4f, chose %s", len(scored), best, choice
        )
        return choice

    def rollout_value(
        self,
        scenario: Scenario,
        state: SiteState,
        action: Action,
        budget: int,
        crn_seed: int,
        j: int,
    ) -> float:
        """Discounted utility of taking an action, then following the base policy."""
        first = rngmod.make_rng(crn_seed, rngmod.ROLLOUT, j, 0)
        current, total = scenario.step(state, action, first)
        discount = self.gamma
        for t in range(1, self.horizon):
            policy_rng = rngmod.make_rng(crn_seed, rngmod.POLICY, j, t)
            follow = self.base.decide(scenario, current, budget, policy_rng)
            current, utility = scenario.step(
                current, follow, rngmod.make_rng(crn_seed, rngmod.ROLLOUT, j, t)
            )
            total += discount * utility
            discount *= self.gamma
        return float(total)


def rollout_policy(
    base: Policy, n_rollouts: int, horizon: int, gamma: float, candidates: int = 8
) -> RolloutPolicy:
    """Wrap a base policy with rollout improvement."""
    return RolloutPolicy(base, n_rollouts, horizon, gamma, candidates)
