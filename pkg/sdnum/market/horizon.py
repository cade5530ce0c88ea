"""
Rolling-horizon controller.

Every tau epochs each site re-estimates its utility over the next T epochs
from its current ground state, the market reallocates the supply, and the
allocation stays fixed while the sites play out the next tau epochs.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from sdnum.errors import ConfigError, SdnumError
from sdnum.market.aggregate import integer_allocation
from sdnum.market.coordinator import MarketResult, run_market
from sdnum.market.sites import SiteReport, SiteRuntime, WindowOutcome

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HorizonPlan:
    """Allocations committed for one window."""

    T: int
    tau: int
    gamma: float
    window_start: int
    allocations: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 1 or self.tau < 1:
            raise ConfigError("T and tau must be at least 1")
        if self.tau > self.T:
            raise ConfigError(f"update period tau={self.tau} exceeds horizon T={self.T}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")

    @property
    def window_end(self) -> int:
        return self.window_start + self.tau


@dataclass
class WindowRecord:
    """Everything the controller learned in one window."""

    window: int
    plan: HorizonPlan
    market: MarketResult
    reports: List[SiteReport]
    outcomes: List[WindowOutcome]

    @property
    def stale_sites(self) -> List[str]:
        return [r.name for r in self.reports if r.stale]


class RollingHorizonController:
    """
    Drives the re-estimate / reallocate / advance loop.

    Args:
        sites: Site runtimes, in a fixed order.
        z: Supply per resource.
        T: Look-ahead horizon used by the sites' estimates.
        tau: Epochs an allocation stays in force.
        gamma: Discount factor.
        alpha, max_iters, tol: Market parameters.
        integer: Round allocations to whole units.
        parallel: Query sites concurrently.
    """

    def __init__(
        self,
        sites: Sequence[SiteRuntime],
        z,
        T: int,
        tau: int,
        gamma: float,
        alpha: Optional[float] = None,
        max_iters: int = 10000,
        tol: float = 1e-6,
        integer: bool = True,
        parallel: bool = False,
    ):
        if not sites:
            raise ConfigError("the controller needs at least one site")
        names = [s.name for s in sites]
        if len(set(names)) != len(names):
            raise ConfigError("site names must be unique")
        HorizonPlan(T=T, tau=tau, gamma=gamma, window_start=0)
        self.sites = list(sites)
        self.z = np.atleast_1d(np.asarray(z, dtype=float))
        if np.any(self.z < 0):
            raise ConfigError("supply must be non-negative")
        self.T = T
        self.tau = tau
        self.gamma = gamma
        self.alpha = alpha
        self.max_iters = max_iters
        self.tol = tol
        self.integer = integer
        self.parallel = parallel
        self.epoch = 0
        self.history: List[WindowRecord] = []
        self._last_reports: Dict[str, SiteReport] = {}

    def _refresh(self, site: SiteRuntime, window: int) -> SiteReport:
        try:
            report = site.refresh(window, self.z)
        except (SdnumError, OSError) as e:
            report = SiteReport(site.name, None, error_message=str(e))
        if report.success:
            self._last_reports[site.name] = report
            return report
        last = self._last_reports.get(site.name)
        if last is None:
            raise ConfigError(
                f"site {site.name} failed its first report: {report.error_message}"
            )
        logger.warning(
            "[Horizon] site %s failed to report (%s), reusing its last model",
            site.name, report.error_message,
        )
        return SiteReport(
            site.name, last.model, stale=True, error_message=report.error_message
        )

    def rolling_horizon_step(self, window: int) -> WindowRecord:
        """Re-estimate, reallocate and advance every site by tau epochs."""
        reports = [self._refresh(site, window) for site in self.sites]
        market_sites = [
            site.market_site(report, self.z) for site, report in zip(self.sites, reports)
        ]
        market = run_market(
            market_sites,
            self.z,
            alpha=self.alpha,
            max_iters=self.max_iters,
            tol=self.tol,
            parallel=self.parallel,
        )
        demands = np.vstack(market.demands)
        if self.integer:
            demands = integer_allocation(demands, self.z)
        allocations = {site.name: np.atleast_1d(d) for site, d in zip(self.sites, demands)}
        plan = HorizonPlan(self.T, self.tau, self.gamma, self.epoch, allocations)

        outcomes = [
            site.advance(allocations[site.name], self.tau, window) for site in self.sites
        ]
        record = WindowRecord(window, plan, market, reports, outcomes)
        self.history.append(record)
        self.epoch = plan.window_end
        logger.info(
            "[Horizon] window %d (epochs %d-%d): %s",
            window,
            plan.window_start,
            plan.window_end - 1,
            ", ".join(f"{k}={v.tolist()}" for k, v in allocations.items()),
        )
        return record

    def run(self, windows: int) -> List[WindowRecord]:
        if windows < 1:
            raise ConfigError("at least one window is required")
        start = len(self.history)
        return [self.rolling_horizon_step(start + w) for w in range(windows)]

    def allocation_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for record in self.history:
            for report, outcome in zip(record.reports, record.outcomes):
                rows.append(
                    {
                        "window": record.window,
                        "start_epoch": record.plan.window_start,
                        "site": report.name,
                        "allocation": record.plan.allocations[report.name],
                        "realized_utility": outcome.realized,
                        "stale": report.stale,
                    }
                )
        return rows
