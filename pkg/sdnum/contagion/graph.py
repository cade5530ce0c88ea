"""
Propagation graph and state types shared by all contagion scenarios.

A graph stores directed contact channels. Edge (k -> p, w) means that an
infected (burning) node k reaches a susceptible (vulnerable) node p with
probability w * dt in every sub-interval. Social graphs carry both
orientations; the wildfire grid stores the directional spread
probability of each neighbouring pair.

Text format (one record per line, '#' starts a comment):

    graph <mode> <node_count>
    node <id> <death_prob> <recovery_prob>
    edge <source> <target> <rate>

Floats are written with repr() so a write/read cycle is exact.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from sdnum.errors import ConfigError, ContractViolation


class NodeState(IntEnum):
    """Categorical node status. Codes 2, 3 and 4 are absorbing."""

    SUSCEPTIBLE = 0  # vulnerable, for wildfire
    INFECTED = 1  # on fire
    DEAD = 2  # burnt
    VACCINATED = 3  # extinguished
    RECOVERED = 4  # pandemic only

    @property
    def absorbing(self) -> bool:
        return self in (NodeState.DEAD, NodeState.VACCINATED, NodeState.RECOVERED)


NUM_CODES = len(NodeState)


class Mode(str, Enum):
    """Which transition rules a graph follows."""

    PANDEMIC = "pandemic"
    WILDFIRE = "wildfire"

    @property
    def valid_codes(self) -> Tuple[int, ...]:
        if self is Mode.PANDEMIC:
            return (0, 1, 2, 3, 4)
        return (0, 1, 2, 3)


@dataclass(frozen=True, eq=False)
class PropagationGraph:
    """
    Weighted directed contact structure with per-node parameters.

    Attributes:
        node_count: Number of nodes.
        sources: Edge source ids (the infecting side).
        targets: Edge target ids (the side that can be infected).
        rates: Contact rate per unit time for each edge, in [0, 1].
        death_prob: Per-node death (burn-out) rate per unit time.
        recovery_prob: Per-node recovery rate per unit time (zero for wildfire).
        mode: Transition rules.
    """

    node_count: int
    sources: np.ndarray
    targets: np.ndarray
    rates: np.ndarray
    death_prob: np.ndarray
    recovery_prob: np.ndarray
    mode: Mode = Mode.PANDEMIC
    _in_rate: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.node_count < 0:
            raise ConfigError(f"node_count must be non-negative, got {self.node_count}")
        object.__setattr__(self, "mode", Mode(self.mode))
        for name, dtype in (
            ("sources", np.int64),
            ("targets", np.int64),
            ("rates", np.float64),
            ("death_prob", np.float64),
            ("recovery_prob", np.float64),
        ):
            arr = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        n = self.node_count
        if not (len(self.sources) == len(self.targets) == len(self.rates)):
            raise ConfigError("edge arrays must have equal length")
        if len(self.death_prob) != n or len(self.recovery_prob) != n:
            raise ConfigError("node parameter arrays must have node_count entries")
        if len(self.sources) and (
            self.sources.min() < 0
            or self.targets.min() < 0
            or self.sources.max() >= n
            or self.targets.max() >= n
        ):
            raise ConfigError("edge endpoint out of range")
        if np.any(self.sources == self.targets):
            raise ConfigError("self-loops are not allowed; w_pp is implied")
        pairs = self.sources * max(n, 1) + self.targets
        if len(np.unique(pairs)) != len(pairs):
            raise ConfigError("duplicate edge: each ordered pair may appear once")
        if np.any((self.rates < 0) | (self.rates > 1)):
            raise ConfigError("contact rates must lie in [0, 1]")
        for name in ("death_prob", "recovery_prob"):
            arr = getattr(self, name)
            if np.any((arr < 0) | (arr > 1)):
                raise ConfigError(f"{name} must lie in [0, 1]")
        if np.any(self.death_prob + self.recovery_prob > 1 + 1e-12):
            raise ConfigError("death_prob + recovery_prob must not exceed 1")
        if self.mode is Mode.WILDFIRE and np.any(self.recovery_prob > 0):
            raise ConfigError("wildfire graphs cannot recover (recovery_prob must be 0)")

        # node p is reached through the edges (k -> p) that target it
        in_rate = np.bincount(self.targets, weights=self.rates, minlength=n)
        in_rate.setflags(write=False)
        object.__setattr__(self, "_in_rate", in_rate)

    @property
    def edge_count(self) -> int:
        return len(self.sources)

    def validate(self, dt: float) -> None:
        """
        Check the rate-sum invariant for a sub-interval length.

        For every node p the rates w_{p,k} of the edges (k -> p) reaching it
        must satisfy sum_k w_{p,k} * dt <= 1, so that the probability of no
        contact, 1 - sum_k w_{p,k} * dt, is a valid probability.

        Raises:
            ConfigError: if some node's incoming contact probabilities exceed one.
        """
        if self.node_count == 0:
            return
        worst = float(self._in_rate.max()) * dt
        if worst > 1 + 1e-12:
            node = int(self._in_rate.argmax())
            raise ConfigError(
                f"rate sum of node {node} times dt is {worst:.4f} > 1; use a smaller dt"
            )

    def neighbors(self, p: int) -> np.ndarray:
        """Targets reachable from node p."""
        return self.targets[self.sources == p]

    def degree(self) -> np.ndarray:
        """Out-degree of every node."""
        return np.bincount(self.sources, minlength=self.node_count)

    def rate(self, source: int, target: int) -> float:
        """Contact rate of one edge, zero when absent."""
        hit = np.flatnonzero((self.sources == source) & (self.targets == target))
        return float(self.rates[hit[0]]) if len(hit) else 0.0

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[Tuple[int, int, float]],
        death_prob: Union[float, Sequence[float]] = 0.0,
        recovery_prob: Union[float, Sequence[float]] = 0.0,
        mode: Union[Mode, str] = Mode.PANDEMIC,
        symmetric: bool = False,
    ) -> "PropagationGraph":
        """
        Build a graph from (source, target, rate) triples.

        Args:
            node_count: Number of nodes.
            edges: Directed edges.
            death_prob: Scalar or per-node death rate.
            recovery_prob: Scalar or per-node recovery rate.
            mode: "pandemic" or "wildfire".
            symmetric: Also add the reverse of every edge with the same rate.
        """
        triples: List[Tuple[int, int, float]] = []
        for s, t, w in edges:
            triples.append((int(s), int(t), float(w)))
            if symmetric:
                triples.append((int(t), int(s), float(w)))
        src = [e[0] for e in triples]
        tgt = [e[1] for e in triples]
        rates = [e[2] for e in triples]
        return cls(
            node_count=node_count,
            sources=np.array(src, dtype=np.int64),
            targets=np.array(tgt, dtype=np.int64),
            rates=np.array(rates, dtype=np.float64),
            death_prob=np.broadcast_to(np.asarray(death_prob, dtype=float), (node_count,)),
            recovery_prob=np.broadcast_to(np.asarray(recovery_prob, dtype=float), (node_count,)),
            mode=Mode(mode),
        )


@dataclass(frozen=True)
class EpochConfig:
    """Sub-interval layout and stream address of one decision epoch."""

    dt: float = 1.0
    rng_seed: int = 0
    epoch_index: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.dt > 1:
            raise ConfigError(f"dt must lie in (0, 1], got {self.dt}")
        steps = 1.0 / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"1/dt must be an integer, got 1/{self.dt} = {steps}")
        if self.epoch_index < 0:
            raise ConfigError("epoch_index must be non-negative")

    @property
    def substeps(self) -> int:
        return int(round(1.0 / self.dt))


@dataclass(frozen=True, eq=False)
class SystemState:
    """Node codes of one site at one epoch. Treated as a value."""

    states: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        arr = np.array(self.states, dtype=np.int8).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)
        if self.epoch < 0:
            raise ConfigError("epoch must be non-negative")

    def __len__(self) -> int:
        return len(self.states)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SystemState):
            return NotImplemented
        return self.epoch == other.epoch and np.array_equal(self.states, other.states)

    def __hash__(self) -> int:
        return hash((self.epoch, self.states.tobytes()))

    def count(self, code: int) -> int:
        return int(np.count_nonzero(self.states == code))

    def ids(self, code: int) -> np.ndarray:
        return np.flatnonzero(self.states == code)

    def check_against(self, graph: PropagationGraph) -> None:
        """Raise ContractViolation if the state does not fit the graph."""
        if len(self.states) != graph.node_count:
            raise ContractViolation(
                f"state has {len(self.states)} nodes, graph has {graph.node_count}"
            )
        bad = ~np.isin(self.states, graph.mode.valid_codes)
        if np.any(bad):
            raise ContractViolation(
                f"invalid code {int(self.states[bad][0])} for {graph.mode.value} graph"
            )

    @classmethod
    def initial(
        cls, node_count: int, infected: Iterable[int] = (), epoch: int = 0
    ) -> "SystemState":
        """All-susceptible state with the given nodes infected."""
        states = np.zeros(node_count, dtype=np.int8)
        idx = np.fromiter((int(i) for i in infected), dtype=np.int64)
        if len(idx) and (idx.min() < 0 or idx.max() >= node_count):
            raise ConfigError("initially infected node out of range")
        states[idx] = NodeState.INFECTED
        return cls(states=states, epoch=epoch)


def write_graph(graph: PropagationGraph, path: Union[str, Path, None] = None) -> str:
    """
    Serialize a graph to the documented text format.

    Args:
        graph: Graph to serialize.
        path: Optional file to write.

    Returns:
        The serialized text.
    """
    lines = [
        "# sdnum propagation graph v1",
        f"graph {graph.mode.value} {graph.node_count}",
    ]
    for p in range(graph.node_count):
        lines.append(f"node {p} {float(graph.death_prob[p])!r} {float(graph.recovery_prob[p])!r}")
    for s, t, w in zip(graph.sources, graph.targets, graph.rates):
        lines.append(f"edge {int(s)} {int(t)} {float(w)!r}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_graph(source: Union[str, Path]) -> PropagationGraph:
    """
    Parse a graph from text or from a file path.

    Raises:
        ConfigError: on malformed records.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source

    mode: Optional[Mode] = None
    count = 0
    death: Dict[int, float] = {}
    recovery: Dict[int, float] = {}
    edges: List[Tuple[int, int, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "graph" and len(parts) == 3:
                mode, count = Mode(parts[1]), int(parts[2])
            elif parts[0] == "node" and len(parts) == 4:
                p = int(parts[1])
                death[p], recovery[p] = float(parts[2]), float(parts[3])
            elif parts[0] == "edge" and len(parts) == 4:
                edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
            else:
                raise ValueError(f"unknown record '{parts[0]}'")
        except ValueError as e:
            raise ConfigError(f"graph text line {lineno}: {e}") from e
    if mode is None:
        raise ConfigError("graph text has no 'graph' header record")
    if sorted(death) != list(range(count)):
        raise ConfigError("graph text must define every node exactly once")
    return PropagationGraph.from_edges(
        count,
        edges,
        death_prob=[death[p] for p in range(count)],
        recovery_prob=[recovery[p] for p in range(count)],
        mode=mode,
    )
