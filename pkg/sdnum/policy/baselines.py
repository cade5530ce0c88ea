"""
Heuristic baseline policies.

    none          do nothing
    random        pandemic: vaccinate a uniform subset of the susceptible
                  nodes; wildfire: every unit moves to a uniform reachable cell
    old_first     pandemic only: elderly, then adults, then teens, random
                  within each group
    nearest_fire  wildfire only: every unit steps toward the closest burning cell
"""

from typing import List, Optional

import numpy as np

from sdnum.errors import ConfigError
from sdnum.scenarios import Action, AgeGroup
from sdnum.policy.base import Policy


class NonePolicy(Policy):
    name = "none"

    def decide(self, scenario, state, budget, rng, mask=None) -> Action:
        return ()


class RandomPolicy(Policy):
    name = "random"

    def decide(self, scenario, state, budget, rng, mask=None) -> Action:
        if scenario.mode == "wildfire":
            units = state.units
            if units is None or len(units) == 0:
                return ()
            return tuple(
                int(rng.choice(scenario.reachable(p, units.max_step))) for p in units.positions
            )
        mask = scenario.action_mask(state) if mask is None else np.asarray(mask)
        k = min(int(budget), len(mask))
        if k <= 0:
            return ()
        return tuple(sorted(int(p) for p in rng.choice(mask, size=k, replace=False)))


class OldFirstPolicy(Policy):
    """Vaccinate the oldest susceptible people first, at random within an age group."""

    name = "old_first"
    modes = ("pandemic",)

    def decide(self, scenario, state, budget, rng, mask=None) -> Action:
        mask = scenario.action_mask(state) if mask is None else np.asarray(mask)
        if budget <= 0 or len(mask) == 0:
            return ()
        chosen: List[int] = []
        for group in (AgeGroup.ELDERLY, AgeGroup.ADULT, AgeGroup.TEEN):
            members = mask[scenario.groups[mask] == group]
            if len(members):
                chosen.extend(int(p) for p in rng.permutation(members))
            if len(chosen) >= budget:
                break
        return tuple(sorted(chosen[:budget]))


class NearestFirePolicy(Policy):
    """
    Greedy firefighting.

    Units are handled in order. A unit prefers an unclaimed burning cell
    within reach, otherwise the reachable cell closest to any fire
    (ties to the lowest id).
    """

    name = "nearest_fire"
    modes = ("wildfire",)

    def decide(self, scenario, state, budget, rng, mask=None) -> Action:
        units = state.units
        if units is None or len(units) == 0:
            return ()
        distance = scenario.fire_distance(state.system)
        if not np.isfinite(distance).any():
            return units.positions
        claimed = set()
        targets = []
        for pos in units.positions:
            cells = scenario.reachable(pos, units.max_step)
            burning = [int(c) for c in cells if distance[c] == 0 and int(c) not in claimed]
            if burning:
                target = int(pos) if int(pos) in burning else burning[0]
            else:
                target = int(cells[np.lexsort((cells, distance[cells]))][0])
            claimed.add(target)
            targets.append(target)
        return tuple(targets)


BASELINES = {
    "none": NonePolicy,
    "random": RandomPolicy,
    "old_first": OldFirstPolicy,
    "nearest_fire": NearestFirePolicy,
}


def baseline_policy(kind: str, mode: Optional[str] = None) -> Policy:
    """
    Create a baseline policy.

    Args:
        kind: One of none, random, old_first, nearest_fire.
        mode: Scenario mode the policy will run on; checked when given.

    Raises:
        ConfigError: unknown kind or a kind that does not fit the mode.
    """
    try:
        cls = BASELINES[kind]
    except KeyError:
        raise ConfigError(f"unknown policy '{kind}'; choose from {sorted(BASELINES)}") from None
    if mode is not None and mode not in cls.modes:
        raise ConfigError(f"policy '{kind}' does not apply to {mode} scenarios")
    return cls()
