"""
Site runtimes: what the rolling-horizon controller drives at each site.

A runtime owns the site's ground-truth state. Once per window it reports
a utility model (refresh), takes part in the market through a MarketSite,
and then plays out its allocation on the ground (advance). Only the model
and the realized utility leave the site.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from sdnum import rng as rngmod
from sdnum.contagion import SystemState
from sdnum.fit import PwlUtility, fit_concave_monotone
from sdnum.market.coordinator import LocalSite, MarketSite
from sdnum.market.oracles import ConcaveOracle
from sdnum.policy import Policy, UtilityEstimate, sample_F
from sdnum.scenarios import Scenario, SiteState, UnitState, as_budget

logger = logging.getLogger(__name__)


@dataclass
class SiteReport:
    """A site's utility model for one window."""

    name: str
    model: Optional[Union[PwlUtility, ConcaveOracle]]
    stale: bool = False
    error_message: Optional[str] = None
    estimates: List[UtilityEstimate] = field(default_factory=list, repr=False)

    @property
    def success(self) -> bool:
        return self.model is not None and self.error_message is None


@dataclass
class WindowOutcome:
    """What happened on the ground while an allocation was in force."""

    realized: float
    summary: Dict[str, Any] = field(default_factory=dict)


class SiteRuntime(ABC):
    """A site as seen by the rolling-horizon controller."""

    name: str = ""
    model: Optional[Union[PwlUtility, ConcaveOracle]] = None

    @property
    def dim(self) -> int:
        return 1

    @abstractmethod
    def refresh(self, window: int, z) -> SiteReport:
        """Re-estimate the utility model from the current ground state."""

    @abstractmethod
    def advance(self, allocation, epochs: int, window: int) -> WindowOutcome:
        """Run the ground truth forward under a fixed allocation."""

    def cap(self, z) -> np.ndarray:
        """Largest allocation the site's model is valid for."""
        return np.atleast_1d(np.asarray(z, dtype=float))

    def market_site(self, report: SiteReport, z) -> MarketSite:
        return LocalSite(report.model, cap=self.cap(z), name=self.name)

    def snapshot(self) -> Dict[str, Any]:
        """Restorable state as plain data; stateless sites return nothing."""
        return {}

    def restore(self, data: Dict[str, Any]) -> None:
        pass


class SimulatedSite(SiteRuntime):
    """
    A scenario-backed site.

    Args:
        name: Site label.
        scenario: The site MDP.
        policy: Lower-layer policy used both for estimates and on the ground.
        seed: Root seed of the experiment.
        site_index: Position of the site; addresses its random streams.
        horizon: Look-ahead horizon T used for F estimates.
        gamma: Discount factor of the estimates.
        replicas: Monte Carlo replicas per grid point.
        grid_cap: Largest budget sampled (defaults to the supply).
        workers: Worker processes for replica fan-out.
        kkt_tol: Accepted KKT residual of the fit.
    """

    def __init__(
        self,
        name: str,
        scenario: Scenario,
        policy: Policy,
        seed: int,
        site_index: int,
        horizon: int,
        gamma: float,
        replicas: int,
        grid_cap: Optional[int] = None,
        workers: int = 1,
        kkt_tol: float = 1e-6,
    ):
        self.name = name
        self.scenario = scenario
        self.policy = policy
        self.seed = seed
        self.site_index = site_index
        self.horizon = horizon
        self.gamma = gamma
        self.replicas = replicas
        self.grid_cap = grid_cap
        self.workers = workers
        self.kkt_tol = kkt_tol
        self.window = 0
        self.model: Optional[PwlUtility] = None
        self.ground: SiteState = scenario.initial_state(
            rngmod.make_rng(seed, rngmod.GROUND, site_index)
        )

    def grid(self, z) -> List[int]:
        top = as_budget(z)
        if self.grid_cap is not None:
            top = min(top, int(self.grid_cap))
        return list(range(top + 1))

    def cap(self, z) -> np.ndarray:
        return np.array([float(self.grid(z)[-1])])

    def refresh(self, window: int, z) -> SiteReport:
        seed = rngmod.derive_seed(self.seed, rngmod.SITE, self.site_index, window)
        estimates = sample_F(
            self.scenario,
            self.policy,
            self.grid(z),
            self.horizon,
            self.gamma,
            self.replicas,
            seed,
            start=self.ground,
            workers=self.workers,
        )
        self.model = fit_concave_monotone(
            [(e.y, e.mean) for e in estimates], kkt_tol=self.kkt_tol
        )
        self.window = window
        logger.info(
            "[Site %s] window %d: F(0..%d) fitted, max slope %.4g",
            self.name, window, len(estimates) - 1, self.model.max_slope(),
        )
        return SiteReport(self.name, self.model, estimates=estimates)

    def advance(self, allocation, epochs: int, window: int) -> WindowOutcome:
        budget = as_budget(allocation)
        state = self.scenario.deploy(self.ground, budget)
        realized = 0.0
        for t in range(epochs):
            policy_rng = rngmod.make_rng(self.seed, rngmod.GROUND, self.site_index, window, t, 0)
            action = self.policy.decide(self.scenario, state, budget, policy_rng)
            self.scenario.validate_action(state, action, budget)
            epoch_rng = rngmod.make_rng(self.seed, rngmod.GROUND, self.site_index, window, t, 1)
            state, utility = self.scenario.step(state, action, epoch_rng)
            realized += utility
        self.ground = state
        summary = self.scenario.summary(state)
        logger.debug(
            "[Site %s] window %d: budget %d, realized %.4g", self.name, window, budget, realized
        )
        return WindowOutcome(realized, summary)

    def snapshot(self) -> Dict[str, Any]:
        """Ground state, window and model as plain data."""
        units = self.ground.units
        return {
            "window": self.window,
            "epoch": self.ground.system.epoch,
            "states": self.ground.system.states.tolist(),
            "units": None if units is None else list(units.positions),
            "max_step": None if units is None else units.max_step,
            "model": None if self.model is None else self.model.to_dict(),
        }

    def restore(self, data: Dict[str, Any]) -> None:
        system = SystemState(np.asarray(data["states"]), int(data["epoch"]))
        system.check_against(self.scenario.graph)
        units = None
        if data.get("units") is not None:
            units = UnitState(tuple(data["units"]), int(data["max_step"]))
        self.ground = SiteState(system, units)
        self.window = int(data["window"])
        model = data.get("model")
        self.model = None if model is None else PwlUtility.from_dict(model)
        logger.info(
            "[Site %s] restored at window %d, epoch %d", self.name, self.window, system.epoch
        )


class OracleSite(SiteRuntime):
    """Synthetic site with a closed-form utility; the ground truth is the oracle itself."""

    def __init__(self, name: str, oracle: ConcaveOracle):
        self.name = name
        self.oracle = oracle
        self.model = oracle

    @property
    def dim(self) -> int:
        return self.oracle.dim

    def refresh(self, window: int, z) -> SiteReport:
        return SiteReport(self.name, self.oracle)

    def advance(self, allocation, epochs: int, window: int) -> WindowOutcome:
        value = self.oracle.value(allocation)
        return WindowOutcome(value * epochs, {"value": value})
