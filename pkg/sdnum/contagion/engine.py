"""
Stochastic multi-agent propagation engine.

Each decision epoch is split into 1/dt sub-intervals. In every
sub-interval each directed edge realizes a contact with probability
w * dt, a susceptible node touched by an infected neighbour becomes
infected, and an infected node dies (burns out) with probability d * dt
or recovers with probability r * dt. Actions take effect at the start of
sub-interval 0 only. Updates are synchronous: all contacts are judged
against the state at the start of the sub-interval.
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from sdnum import rng as rngmod
from sdnum.errors import RejectedActionError
from sdnum.contagion.graph import (
    EpochConfig,
    Mode,
    NodeState,
    NUM_CODES,
    PropagationGraph,
    SystemState,
)

logger = logging.getLogger(__name__)


def _action_mask(actions: Optional[np.ndarray], node_count: int) -> Optional[np.ndarray]:
    """Normalize actions (bool mask or id list) to a bool mask."""
    if actions is None:
        return None
    arr = np.asarray(actions)
    if arr.dtype == bool:
        if arr.shape != (node_count,):
            raise RejectedActionError(f"action mask must have {node_count} entries")
        return arr
    ids = arr.astype(np.int64).reshape(-1)
    if len(ids) and (ids.min() < 0 or ids.max() >= node_count):
        raise RejectedActionError("action targets a node outside the graph")
    mask = np.zeros(node_count, dtype=bool)
    mask[ids] = True
    return mask


def step_subinterval(
    graph: PropagationGraph,
    state: SystemState,
    actions: Optional[np.ndarray],
    sub_index: int,
    rng: np.random.Generator,
    dt: float = 1.0,
) -> SystemState:
    """
    Advance one sub-interval.

    Args:
        graph: Contact structure.
        state: State at the start of the sub-interval.
        actions: Per-node binary actions (bool mask or node ids); used only
            when sub_index == 0.
        sub_index: Position i of the sub-interval within the epoch.
        rng: Stream for this epoch. Exactly edge_count + node_count uniforms
            are drawn, whatever the state.
        dt: Sub-interval length.

    Returns:
        The state at the end of the sub-interval (same epoch counter).

    Raises:
        ConfigError: if dt breaks the graph's rate-sum invariant.
        RejectedActionError: vaccinating a non-susceptible node or
            extinguishing a non-burning cell.
    """
    graph.validate(dt)
    codes = state.states.copy()
    mask = _action_mask(actions, graph.node_count)
    if sub_index == 0 and mask is not None and mask.any():
        required = NodeState.SUSCEPTIBLE if graph.mode is Mode.PANDEMIC else NodeState.INFECTED
        illegal = mask & (codes != required)
        if illegal.any():
            verb = "vaccinate" if graph.mode is Mode.PANDEMIC else "extinguish"
            raise RejectedActionError(
                f"cannot {verb} node {int(np.flatnonzero(illegal)[0])} "
                f"in state {int(codes[illegal][0])}"
            )
        codes[mask] = NodeState.VACCINATED

    start = codes
    new = start.copy()

    u_edge = rng.random(graph.edge_count)
    u_node = rng.random(graph.node_count)

    if graph.edge_count:
        contact = u_edge < graph.rates * dt
        hit = (
            contact
            & (start[graph.sources] == NodeState.INFECTED)
            & (start[graph.targets] == NodeState.SUSCEPTIBLE)
        )
        if hit.any():
            new[graph.targets[hit]] = NodeState.INFECTED

    infected = start == NodeState.INFECTED
    if infected.any():
        die_p = graph.death_prob * dt
        dies = infected & (u_node < die_p)
        new[dies] = NodeState.DEAD
        if graph.mode is Mode.PANDEMIC:
            recovers = infected & ~dies & (u_node < die_p + graph.recovery_prob * dt)
            new[recovers] = NodeState.RECOVERED

    return SystemState(states=new, epoch=state.epoch)


def step_epoch(
    graph: PropagationGraph,
    state: SystemState,
    actions: Optional[np.ndarray],
    config: EpochConfig,
    rng: Optional[np.random.Generator] = None,
) -> SystemState:
    """
    Advance one decision epoch (1/dt sub-intervals).

    Args:
        graph: Contact structure.
        state: State at the decision epoch.
        actions: Actions applied at sub-interval 0.
        config: dt and stream address.
        rng: Stream to draw from; derived from config when omitted.

    Returns:
        State at the next epoch, epoch counter incremented by one.
    """
    state.check_against(graph)
    if rng is None:
        rng = rngmod.make_rng(config.rng_seed, rngmod.EPOCH, 0, config.epoch_index)
    current = state
    for i in range(config.substeps):
        current = step_subinterval(graph, current, actions, i, rng, config.dt)
    return SystemState(states=current.states, epoch=state.epoch + 1)


def count_by_state(state: SystemState) -> Dict[int, int]:
    """Histogram of node codes; all five codes are present as keys."""
    counts = np.bincount(state.states.astype(np.int64), minlength=NUM_CODES)
    return {code: int(counts[code]) for code in range(NUM_CODES)}


def simulate(
    graph: PropagationGraph,
    state: SystemState,
    epochs: int,
    dt: float,
    seed: int,
    replica: int = 0,
) -> List[SystemState]:
    """
    Run an action-free trajectory.

    Returns:
        States at epochs 0..epochs (inclusive of the start).
    """
    trajectory = [state]
    current = state
    for _ in range(epochs):
        config = EpochConfig(dt=dt, rng_seed=seed, epoch_index=current.epoch)
        stream = rngmod.make_rng(seed, rngmod.EPOCH, replica, current.epoch)
        current = step_epoch(graph, current, None, config, stream)
        trajectory.append(current)
    logger.debug("[Contagion] simulated %d epochs on %d nodes", epochs, graph.node_count)
    return trajectory


def trajectory_rows(states: Iterable[SystemState]) -> List[Sequence[int]]:
    """Rows of (epoch, count_0, ..., count_4) for CSV export."""
    rows = []
    for s in states:
        hist = count_by_state(s)
        rows.append([s.epoch] + [hist[c] for c in range(NUM_CODES)])
    return rows
