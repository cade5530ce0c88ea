"""
Pandemic response scenario.

Builds an age-stratified social graph (families, a school clique for the
teens, random links among adults and the elderly) and exposes it as a
site MDP whose actions vaccinate susceptible people and whose utility is
the negative number of new deaths.
"""

import logging
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx
import numpy as np

from sdnum import rng as rngmod
from sdnum.contagion import Mode, NodeState, PropagationGraph, SystemState, step_epoch
from sdnum.errors import ConfigError, ContractViolation, RejectedActionError
from sdnum.scenarios.base import Action, Scenario, SiteState, check_within

logger = logging.getLogger(__name__)


class AgeGroup(IntEnum):
    """Demographic group of a person."""

    TEEN = 0
    ADULT = 1
    ELDERLY = 2


@dataclass(frozen=True)
class DemographicSpec:
    """
    Population and contact parameters of one location.

    Attributes:
        n_teen: Number of teenagers.
        n_adult: Number of adults.
        n_elderly: Number of elderly people.
        er_edge_prob: Link probability among adults and the elderly.
        family_teens: Min and max teens per family.
        family_adults: Adults per family.
        contact_rate: Contact probability per unit time on every edge.
        teen_death_prob: Teen death rate per unit time while infected.
        mortality_multipliers: Death-rate multipliers for teen, adult, elderly.
        recovery_time: Mean recovery time in epochs.
    """

    n_teen: int = 20
    n_adult: int = 50
    n_elderly: int = 30
    er_edge_prob: float = 0.1
    family_teens: Tuple[int, int] = (1, 2)
    family_adults: int = 2
    contact_rate: float = 0.02
    teen_death_prob: float = 0.001
    mortality_multipliers: Tuple[float, float, float] = (1.0, 10.0, 100.0)
    recovery_time: float = 14.0

    def __post_init__(self):
        for name in ("n_teen", "n_adult", "n_elderly", "family_adults"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0.0 <= self.er_edge_prob <= 1.0:
            raise ConfigError(f"er_edge_prob must lie in [0, 1], got {self.er_edge_prob}")
        lo, hi = self.family_teens
        if lo < 1 or hi < lo:
            raise ConfigError(f"family_teens must be 1 <= min <= max, got {self.family_teens}")
        if not 0.0 <= self.contact_rate <= 1.0:
            raise ConfigError("contact_rate must lie in [0, 1]")
        if len(self.mortality_multipliers) != 3:
            raise ConfigError("mortality_multipliers needs one entry per age group")
        if self.recovery_time <= 0:
            raise ConfigError("recovery_time must be positive")

    @property
    def node_count(self) -> int:
        return self.n_teen + self.n_adult + self.n_elderly

    def groups(self) -> np.ndarray:
        """Age group of every node id; teens first, then adults, then elderly."""
        return np.repeat(
            np.array([AgeGroup.TEEN, AgeGroup.ADULT, AgeGroup.ELDERLY], dtype=np.int8),
            [self.n_teen, self.n_adult, self.n_elderly],
        )

    def death_probs(self) -> np.ndarray:
        multipliers = np.asarray(self.mortality_multipliers, dtype=float)
        return np.clip(self.teen_death_prob * multipliers[self.groups()], 0.0, 1.0)


def generate_social_graph(spec: DemographicSpec, seed: int) -> PropagationGraph:
    """
    Generate a connected social contact graph.

    All random draws are taken in a fixed order (families first, then one
    uniform per adult/elderly pair), so for a fixed seed the edge set only
    grows with er_edge_prob.

    Raises:
        ConfigError: for an empty population.
    """
    n = spec.node_count
    if n == 0:
        raise ConfigError("demographic spec has no nodes")

    rng = rngmod.make_rng(seed, rngmod.GRAPH)
    teens = np.arange(spec.n_teen)
    adults = np.arange(spec.n_teen, spec.n_teen + spec.n_adult)
    others = np.arange(spec.n_teen, n)

    g = nx.Graph()
    g.add_nodes_from(range(n))

    # Families: 1-2 teens with their adults
    order = rng.permutation(teens)
    lo, hi = spec.family_teens
    i = 0
    while i < len(order):
        size = int(rng.integers(lo, hi + 1))
        members = [int(t) for t in order[i : i + size]]
        i += size
        if len(adults) and spec.family_adults:
            k = min(spec.family_adults, len(adults))
            parents = [int(a) for a in rng.choice(adults, size=k, replace=False)]
            members.extend(parents)
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                g.add_edge(members[a], members[b])

    # School
    for a in range(len(teens)):
        for b in range(a + 1, len(teens)):
            g.add_edge(int(teens[a]), int(teens[b]))

    m = len(others)
    if m > 1:
        u = rng.random((m, m))
        rows, cols = np.nonzero(np.triu(u < spec.er_edge_prob, k=1))
        g.add_edges_from(zip(others[rows].tolist(), others[cols].tolist()))

    components = sorted(nx.connected_components(g), key=min)
    for left, right in zip(components, components[1:]):
        g.add_edge(min(left), min(right))
    if len(components) > 1:
        logger.debug("[Pandemic] bridged %d components", len(components))

    edges = sorted((min(a, b), max(a, b)) for a, b in g.edges())
    return PropagationGraph.from_edges(
        n,
        [(a, b, spec.contact_rate) for a, b in edges],
        death_prob=spec.death_probs(),
        recovery_prob=1.0 / spec.recovery_time,
        mode=Mode.PANDEMIC,
        symmetric=True,
    )


def graph_statistics(graph: PropagationGraph, groups: np.ndarray) -> Dict[str, float]:
    """
    Size and degree figures of a social graph.

    Returns:
        Node and edge counts per group, the elderly average degree ("ead")
        and the average degree over everyone except teens ("ad").
    """
    groups = np.asarray(groups)
    if len(groups) != graph.node_count:
        raise ContractViolation("groups must have one entry per node")
    degree = graph.degree()
    elderly = groups == AgeGroup.ELDERLY
    non_teen = groups != AgeGroup.TEEN
    return {
        "nodes": graph.node_count,
        "edges": graph.edge_count // 2,
        "teen": int(np.count_nonzero(groups == AgeGroup.TEEN)),
        "adult": int(np.count_nonzero(groups == AgeGroup.ADULT)),
        "elderly": int(np.count_nonzero(elderly)),
        "ead": float(degree[elderly].mean()) if elderly.any() else 0.0,
        "ad": float(degree[non_teen].mean()) if non_teen.any() else 0.0,
    }


def tune_er_edge_prob(
    spec: DemographicSpec,
    target_ead: float,
    seed: int,
    tolerance: float = 0.5,
    max_iter: int = 40,
) -> float:
    """
    Bisect er_edge_prob until the elderly average degree hits a target.

    Returns:
        An edge probability whose graph (same seed) has |EAD - target| <= tolerance.

    Raises:
        ConfigError: without elderly nodes or when the target is unreachable.
    """
    if spec.n_elderly == 0:
        raise ConfigError("cannot tune elderly degree without elderly nodes")

    def ead(p: float) -> float:
        trial = replace(spec, er_edge_prob=p)
        return graph_statistics(generate_social_graph(trial, seed), trial.groups())["ead"]

    lo, hi = 0.0, 1.0
    if ead(hi) < target_ead - tolerance:
        raise ConfigError(f"target EAD {target_ead} is above the complete-graph degree")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        value = ead(mid)
        if abs(value - target_ead) <= tolerance:
            logger.debug("[Pandemic] er_edge_prob=%.4f gives EAD %.2f", mid, value)
            return mid
        if value < target_ead:
            lo = mid
        else:
            hi = mid
    raise ConfigError(f"could not reach EAD {target_ead} within {tolerance}")


def pandemic_utility(prev: SystemState, nxt: SystemState) -> float:
    """Negative number of deaths between two consecutive states."""
    if len(prev) != len(nxt):
        raise ContractViolation(f"node counts differ: {len(prev)} vs {len(nxt)}")
    return -float(nxt.count(NodeState.DEAD) - prev.count(NodeState.DEAD))


def mask_actions(state: Union[SystemState, SiteState]) -> Set[int]:
    """Node ids that may be vaccinated: exactly the susceptible ones."""
    system = state.system if isinstance(state, SiteState) else state
    return {int(p) for p in system.ids(NodeState.SUSCEPTIBLE)}


class PandemicScenario(Scenario):
    """
    Vaccination MDP on a social graph.

    Actions are sorted tuples of susceptible node ids, at most the budget
    per epoch.
    """

    mode = "pandemic"

    def __init__(
        self,
        name: str,
        spec: DemographicSpec,
        seed: int = 0,
        dt: float = 1.0,
        initial_infections: int = 5,
        initial_infected: Optional[Sequence[int]] = None,
        graph: Optional[PropagationGraph] = None,
    ):
        """
        Initialize the scenario.

        Args:
            name: Site name.
            spec: Demographics.
            seed: Graph generation seed.
            dt: Sub-interval length.
            initial_infections: Random initial infections per replica.
            initial_infected: Fixed initially infected ids (overrides the count).
            graph: Prebuilt graph; generated from spec when omitted.
        """
        graph = graph if graph is not None else generate_social_graph(spec, seed)
        super().__init__(name, graph, dt)
        self.spec = spec
        self.groups = spec.groups()
        if initial_infections < 0:
            raise ConfigError("initial_infections must be non-negative")
        self.initial_infections = initial_infections
        self.initial_infected = None if initial_infected is None else tuple(initial_infected)
        self._score = graph.degree() * graph.death_prob

    def initial_state(self, rng: np.random.Generator) -> SiteState:
        n = self.graph.node_count
        if self.initial_infected is not None:
            return SiteState(SystemState.initial(n, self.initial_infected))
        k = min(self.initial_infections, n)
        infected = rng.choice(n, size=k, replace=False) if k else ()
        return SiteState(SystemState.initial(n, infected))

    def action_mask(self, state: SiteState) -> np.ndarray:
        return state.system.ids(NodeState.SUSCEPTIBLE)

    def validate_action(self, state: SiteState, action: Action, budget: int) -> None:
        if len(action) > budget:
            raise RejectedActionError(f"{len(action)} vaccinations exceed budget {budget}")
        if len(set(action)) != len(action):
            raise RejectedActionError("a node may be vaccinated only once per epoch")
        check_within(action, self.action_mask(state), "vaccinate")

    def step(
        self, state: SiteState, action: Action, rng: np.random.Generator
    ) -> Tuple[SiteState, float]:
        ids = np.asarray(action, dtype=np.int64) if len(action) else None
        nxt = step_epoch(self.graph, state.system, ids, self.epoch_config(state.epoch), rng)
        return SiteState(nxt), pandemic_utility(state.system, nxt)

    def priority(self, ids: np.ndarray) -> np.ndarray:
        """Ids ordered by degree times mortality, highest first, ties by id."""
        ids = np.asarray(ids, dtype=np.int64)
        return ids[np.lexsort((ids, -self._score[ids]))]

    def candidate_actions(
        self, state: SiteState, budget: int, base_action: Action, k: int
    ) -> List[Action]:
        mask = self.action_mask(state)
        base = tuple(sorted(int(p) for p in base_action))
        if budget <= 0 or len(mask) == 0:
            return [base]
        ranked = self.priority(mask)
        candidates: List[Action] = []
        for first in ranked[:k]:
            rest = [int(p) for p in ranked if p != first][: budget - 1]
            candidates.append(tuple(sorted([int(first)] + rest)))
        candidates.append(base)
        return list(dict.fromkeys(candidates))

    def summary(self, state: SiteState) -> Dict[str, Any]:
        system = state.system
        return {
            "susceptible": system.count(NodeState.SUSCEPTIBLE),
            "infected": system.count(NodeState.INFECTED),
            "dead": system.count(NodeState.DEAD),
            "vaccinated": system.count(NodeState.VACCINATED),
            "recovered": system.count(NodeState.RECOVERED),
        }
