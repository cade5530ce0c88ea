"""
Monte Carlo estimation of a site's expected discounted utility F(y).

Replica r draws its initial state from stream (INITIAL, r), its policy
decisions from (POLICY, r, t) and its contagion draws from (EPOCH, r, t).
Estimates for different budgets under the same seed therefore share
their randomness, and results never depend on the worker count.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from sdnum import rng as rngmod
from sdnum.errors import ConfigError
from sdnum.scenarios import Scenario, SiteState, as_budget
from sdnum.policy.base import Policy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UtilitySample:
    """One discounted-utility realization."""

    y: float
    value: float
    replica: int
    seed: int
    policy: str
    horizon: int


@dataclass(frozen=True)
class UtilityEstimate:
    """Mean and standard error of F(y) over replicas."""

    y: Any
    mean: float
    stderr: float
    n: int
    values: np.ndarray = field(repr=False)
    policy: str = ""
    horizon: int = 0
    seed: int = 0

    def samples(self) -> List[UtilitySample]:
        y = float(np.atleast_1d(np.asarray(self.y, dtype=float))[0])
        return [
            UtilitySample(y, float(v), r, self.seed, self.policy, self.horizon)
            for r, v in enumerate(self.values)
        ]


def play(
    scenario: Scenario,
    policy: Policy,
    budget: int,
    epochs: int,
    seed: int,
    replica: int,
    start: Optional[SiteState] = None,
) -> Iterator[Tuple[SiteState, float]]:
    """Yield (state after epoch t, utility of epoch t) for t = 0..epochs-1."""
    if start is None:
        start = scenario.initial_state(rngmod.make_rng(seed, rngmod.INITIAL, replica))
    state = scenario.deploy(start, budget)
    for t in range(epochs):
        policy_rng = rngmod.make_rng(seed, rngmod.POLICY, replica, t)
        action = policy.decide(scenario, state, budget, policy_rng)
        scenario.validate_action(state, action, budget)
        epoch_rng = rngmod.make_rng(seed, rngmod.EPOCH, replica, t)
        state, utility = scenario.step(state, action, epoch_rng)
        yield state, utility


def run_replica(
    scenario: Scenario,
    policy: Policy,
    budget: int,
    horizon: int,
    gamma: float,
    seed: int,
    replica: int,
    start: Optional[SiteState] = None,
) -> float:
    """Discounted utility of one simulated trajectory of `horizon` epochs."""
    total = 0.0
    discount = 1.0
    for _, utility in play(scenario, policy, budget, horizon, seed, replica, start):
        total += discount * utility
        discount *= gamma
    return total


def run_episode(
    scenario: Scenario,
    policy: Policy,
    budget: int,
    epochs: int,
    seed: int,
    replica: int,
    start: Optional[SiteState] = None,
) -> List[Dict[str, Any]]:
    """Scenario counts after every epoch of one trajectory (epoch 0 is the start)."""
    if start is None:
        start = scenario.initial_state(rngmod.make_rng(seed, rngmod.INITIAL, replica))
    rows = [scenario.summary(scenario.deploy(start, budget))]
    for state, _ in play(scenario, policy, budget, epochs, seed, replica, start):
        rows.append(scenario.summary(state))
    return rows


def _final_chunk(args) -> List[Dict[str, Any]]:
    scenario, policy, budget, epochs, seed, replicas = args
    out = []
    for r in replicas:
        state = None
        for state, _ in play(scenario, policy, budget, epochs, seed, r):
            pass
        out.append(scenario.summary(state))
    return out


def final_counts(
    scenario: Scenario,
    policy: Policy,
    budget: int,
    epochs: int,
    n_replicas: int,
    seed: int,
    workers: int = 1,
) -> List[Dict[str, Any]]:
    """
    Scenario counts at the end of `epochs` epochs, one dict per replica.

    Replicas use the same streams as evaluate_F, so two policies compared
    under one seed see the same initial states and contagion draws.
    """
    if n_replicas < 1:
        raise ConfigError(f"n_replicas must be at least 1, got {n_replicas}")
    if epochs < 1:
        raise ConfigError(f"epochs must be at least 1, got {epochs}")
    if workers <= 1 or n_replicas == 1:
        return _final_chunk((scenario, policy, budget, epochs, seed, range(n_replicas)))
    chunks = np.array_split(np.arange(n_replicas), min(workers, n_replicas))
    jobs = [(scenario, policy, budget, epochs, seed, [int(r) for r in c]) for c in chunks]
    out: List[Dict[str, Any]] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_final_chunk, jobs):
            out.extend(part)
    return out


def _run_chunk(args) -> List[float]:
    scenario, policy, budget, horizon, gamma, seed, start, replicas = args
    return [
        run_replica(scenario, policy, budget, horizon, gamma, seed, r, start) for r in replicas
    ]


def evaluate_F(
    scenario: Scenario,
    policy: Policy,
    y: Any,
    horizon: int,
    gamma: float,
    n_replicas: int,
    seed: int,
    start: Optional[SiteState] = None,
    workers: int = 1,
) -> UtilityEstimate:
    """
    Estimate the expected discounted utility under a constant budget.

    Args:
        scenario: Site MDP.
        policy: Policy run in every replica.
        y: Allocation; its first component is the per-epoch budget.
        horizon: Epochs simulated (utilities of t = 0..horizon-1).
        gamma: Discount factor.
        n_replicas: Monte Carlo replicas.
        seed: Root seed.
        start: Ground state to branch from; a fresh initial state per replica if None.
        workers: Worker processes; 1 runs in-process.

    Returns:
        UtilityEstimate with the per-replica values in replica order.
    """
    if n_replicas < 1:
        raise ConfigError(f"n_replicas must be at least 1, got {n_replicas}")
    if horizon < 1:
        raise ConfigError(f"horizon must be at least 1, got {horizon}")
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"gamma must lie in (0, 1], got {gamma}")
    budget = as_budget(y)

    if workers <= 1 or n_replicas == 1:
        job = (scenario, policy, budget, horizon, gamma, seed, start, range(n_replicas))
        values = _run_chunk(job)
    else:
        chunks = np.array_split(np.arange(n_replicas), min(workers, n_replicas))
        jobs = [
            (scenario, policy, budget, horizon, gamma, seed, start, [int(r) for r in chunk])
            for chunk in chunks
        ]
        values = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, jobs):
                values.extend(part)

    arr = np.asarray(values, dtype=float)
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    logger.debug(
        "[Evaluate] %s y=%s: mean %.4f +/- %.4f over %d replicas",
        scenario.name, budget, arr.mean(), stderr, len(arr),
    )
    return UtilityEstimate(
        y=y,
        mean=float(arr.mean()),
        stderr=stderr,
        n=len(arr),
        values=arr,
        policy=policy.name,
        horizon=horizon,
        seed=seed,
    )


def sample_F(
    scenario: Scenario,
    policy: Policy,
    grid: Sequence[Any],
    horizon: int,
    gamma: float,
    n_replicas: int,
    seed: int,
    start: Optional[SiteState] = None,
    workers: int = 1,
) -> List[UtilityEstimate]:
    """evaluate_F over a budget grid with shared random streams."""
    return [
        evaluate_F(scenario, policy, y, horizon, gamma, n_replicas, seed, start, workers)
        for y in grid
    ]
