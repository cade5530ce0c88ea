"""Higher-layer allocation: price-based market, aggregate reference, rolling horizon."""

from .oracles import ConcaveOracle, LogOracle, QuadraticOracle, oracle_from_dict
from .coordinator import (
    LocalSite,
    MarketIteration,
    MarketResult,
    MarketSite,
    MarketState,
    dual_update,
    duality_gap,
    is_cleared,
    model_value,
    primal_response,
    recover_primal,
    run_market,
)
from .aggregate import integer_allocation, project_budget_set, solve_aggregate
from .sites import OracleSite, SimulatedSite, SiteReport, SiteRuntime, WindowOutcome
from .horizon import HorizonPlan, RollingHorizonController, WindowRecord

__all__ = [
    "ConcaveOracle",
    "LogOracle",
    "QuadraticOracle",
    "oracle_from_dict",
    "LocalSite",
    "MarketIteration",
    "MarketResult",
    "MarketSite",
    "MarketState",
    "dual_update",
    "duality_gap",
    "is_cleared",
    "model_value",
    "primal_response",
    "recover_primal",
    "run_market",
    "integer_allocation",
    "project_budget_set",
    "solve_aggregate",
    "OracleSite",
    "SimulatedSite",
    "SiteReport",
    "SiteRuntime",
    "WindowOutcome",
    "HorizonPlan",
    "RollingHorizonController",
    "WindowRecord",
]
