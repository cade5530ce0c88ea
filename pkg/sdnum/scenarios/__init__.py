"""Site scenarios: the MDPs whose expected utility the market trades on."""

from .base import Action, Scenario, SiteState, UnitState, as_budget
from .pandemic import (
    AgeGroup,
    DemographicSpec,
    PandemicScenario,
    generate_social_graph,
    graph_statistics,
    mask_actions,
    pandemic_utility,
    tune_er_edge_prob,
)
from .wildfire import (
    GridSpec,
    WildfireScenario,
    chebyshev,
    generate_vegetation,
    grid_graph,
    move_and_extinguish,
    spread_probability,
    wildfire_reward,
    wind_vector,
)

__all__ = [
    "Action",
    "Scenario",
    "SiteState",
    "UnitState",
    "as_budget",
    "AgeGroup",
    "DemographicSpec",
    "PandemicScenario",
    "generate_social_graph",
    "graph_statistics",
    "mask_actions",
    "pandemic_utility",
    "tune_er_edge_prob",
    "GridSpec",
    "WildfireScenario",
    "chebyshev",
    "generate_vegetation",
    "grid_graph",
    "move_and_extinguish",
    "spread_probability",
    "wildfire_reward",
    "wind_vector",
]
