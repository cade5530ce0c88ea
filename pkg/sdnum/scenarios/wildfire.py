"""
Wildfire response scenario.

A rectangular grid of forest cells; fire spreads between neighbouring
cells with a probability shaped by vegetation type and density of the
target cell and by how well the spread direction lines up with the wind.
Firefighting units move at most max_step cells per epoch (Chebyshev
metric) and extinguish the burning cell they stand on.

Cell ids are row-major: id = row * width + col, row 0 is the northern edge.
Direction vectors are (east, north).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from sdnum import rng as rngmod
from sdnum.contagion import Mode, NodeState, PropagationGraph, SystemState, step_epoch
from sdnum.errors import ConfigError, ContractViolation, RejectedActionError
from sdnum.scenarios.base import Action, Scenario, SiteState, UnitState

logger = logging.getLogger(__name__)


WIND_DIRECTIONS: Dict[str, Tuple[float, float]] = {
    "N": (0.0, 1.0),
    "NE": (1.0, 1.0),
    "E": (1.0, 0.0),
    "SE": (1.0, -1.0),
    "S": (0.0, -1.0),
    "SW": (-1.0, -1.0),
    "W": (-1.0, 0.0),
    "NW": (-1.0, 1.0),
}


def wind_vector(direction: Union[str, Sequence[float], None]) -> Optional[Tuple[float, float]]:
    """Unit wind vector from a compass name or an (east, north) pair; None for calm."""
    if direction is None or direction == "" or direction == "-":
        return None
    if isinstance(direction, str):
        try:
            direction = WIND_DIRECTIONS[direction.upper()]
        except KeyError:
            raise ConfigError(f"unknown wind direction '{direction}'") from None
    dx, dy = (float(c) for c in direction)
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return None
    return (dx / norm, dy / norm)


@dataclass(frozen=True, eq=False)
class GridSpec:
    """
    Forest grid of one location.

    Attributes:
        width: Columns.
        height: Rows.
        neighborhood: 4 or 8 connected spread.
        wind_dir: Compass name or (east, north) vector; None for calm.
        wind_speed: Fraction of the typical maximum, in [0, 1].
        vegetation: Per-cell vegetation type factor v_p >= 0.
        density: Per-cell vegetation density factor >= 0.
        kappa: Normalization constant.
        wind_scale: Wind strength at full speed.
        burnout_rate: Rate per unit time at which a burning cell burns out.
    """

    width: int = 16
    height: int = 16
    neighborhood: int = 8
    wind_dir: Union[str, Tuple[float, float], None] = None
    wind_speed: float = 0.0
    vegetation: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None
    kappa: float = 0.1
    wind_scale: float = 3.0
    burnout_rate: float = 0.2
    _wind: Optional[Tuple[float, float]] = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.neighborhood not in (4, 8):
            raise ConfigError(f"neighborhood must be 4 or 8, got {self.neighborhood}")
        if not 0.0 <= self.wind_speed <= 1.0:
            raise ConfigError(f"wind_speed must lie in [0, 1], got {self.wind_speed}")
        if self.kappa < 0 or self.wind_scale < 0:
            raise ConfigError("kappa and wind_scale must be non-negative")
        if not 0.0 <= self.burnout_rate <= 1.0:
            raise ConfigError("burnout_rate must lie in [0, 1]")
        object.__setattr__(self, "_wind", wind_vector(self.wind_dir))
        n = self.cell_count
        for name in ("vegetation", "density"):
            value = getattr(self, name)
            arr = np.zeros(n) if value is None else np.asarray(value, dtype=float).reshape(-1)
            if arr.shape == (1,):
                arr = np.full(n, arr[0])
            if arr.shape != (n,):
                raise ConfigError(f"{name} must have {n} entries, got {arr.size}")
            if np.any(arr < 0):
                raise ConfigError(f"{name} factors must be non-negative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def cell_count(self) -> int:
        return self.width * self.height

    @property
    def wind(self) -> Optional[Tuple[float, float]]:
        return self._wind

    @property
    def center(self) -> int:
        return (self.height // 2) * self.width + self.width // 2

    def coords(self, cell: int) -> Tuple[int, int]:
        return divmod(int(cell), self.width)

    def neighbors(self, cell: int) -> List[int]:
        """Adjacent cells in id order."""
        row, col = self.coords(cell)
        out = []
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == dc == 0 or (self.neighborhood == 4 and dr and dc):
                    continue
                r, c = row + dr, col + dc
                if 0 <= r < self.height and 0 <= c < self.width:
                    out.append(r * self.width + c)
        return out


def chebyshev(a: int, b: int, width: int) -> int:
    """Chebyshev distance between two cell ids."""
    ra, ca = divmod(int(a), width)
    rb, cb = divmod(int(b), width)
    return max(abs(ra - rb), abs(ca - cb))


def spread_probability(p: int, k: int, spec: GridSpec) -> float:
    """
    Probability per unit time that burning cell k ignites neighbour p.

    w = kappa * (1 + v_p) * (1 + dens_p) * phi, where
    phi = exp(ws * cos(theta)) / exp(ws) with theta the angle between the
    wind and the direction k -> p, and ws = wind_scale * wind_speed.

    Raises:
        ContractViolation: if p and k are not neighbours.
    """
    if int(p) not in spec.neighbors(k):
        raise ContractViolation(f"cells {p} and {k} are not adjacent")
    phi = 1.0
    wind = spec.wind
    ws = spec.wind_scale * spec.wind_speed
    if wind is not None and ws > 0:
        rk, ck = spec.coords(k)
        rp, cp = spec.coords(p)
        dx, dy = cp - ck, rk - rp
        cos_theta = (dx * wind[0] + dy * wind[1]) / math.hypot(dx, dy)
        phi = math.exp(ws * (cos_theta - 1.0))
    return spec.kappa * (1.0 + spec.vegetation[p]) * (1.0 + spec.density[p]) * phi


def grid_graph(spec: GridSpec) -> PropagationGraph:
    """
    Propagation graph of a grid; edge (k -> p) carries w_{p,k}.

    Raises:
        ConfigError: if some spread probability exceeds one.
    """
    edges = []
    for k in range(spec.cell_count):
        for p in spec.neighbors(k):
            edges.append((k, p, spread_probability(p, k, spec)))
    worst = max((w for _, _, w in edges), default=0.0)
    if worst > 1.0:
        raise ConfigError(f"spread probability {worst:.3f} > 1; lower kappa")
    logger.debug(
        "[Wildfire] %dx%d grid, max spread probability %.3f", spec.width, spec.height, worst
    )
    return PropagationGraph.from_edges(
        spec.cell_count,
        edges,
        death_prob=spec.burnout_rate,
        recovery_prob=0.0,
        mode=Mode.WILDFIRE,
    )


def generate_vegetation(
    navegc: float, width: int, height: int, jitter: float = 0.2, seed: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-cell vegetation type and density factors around an average level.

    The level b satisfies (1 + b)^2 = 4 * navegc, so a location with
    NAVegC 1 has unit factors on average. Each factor is jittered
    uniformly by +/- jitter * b and clipped at zero.

    Returns:
        (vegetation, density) arrays of width * height entries.
    """
    if navegc < 0.25:
        raise ConfigError(f"navegc must be at least 0.25, got {navegc}")
    level = math.sqrt(4.0 * navegc) - 1.0
    rng = rngmod.make_rng(seed, rngmod.GRAPH)
    n = width * height
    spread = jitter * level
    vegetation = np.clip(level + rng.uniform(-spread, spread, n), 0.0, None)
    density = np.clip(level + rng.uniform(-spread, spread, n), 0.0, None)
    return vegetation, density


def move_and_extinguish(
    state: SystemState,
    units: UnitState,
    targets: Sequence[int],
    spec: GridSpec,
) -> Tuple[UnitState, np.ndarray]:
    """
    Move every unit to its target and collect the cells to extinguish.

    Returns:
        (moved units, sorted unique ids of burning cells occupied after the move)

    Raises:
        RejectedActionError: wrong target count, target off the grid, or
            a move longer than max_step.
    """
    if len(targets) != len(units):
        raise RejectedActionError(
            f"{len(units)} units need {len(units)} targets, got {len(targets)}"
        )
    for i, (pos, target) in enumerate(zip(units.positions, targets)):
        if not 0 <= int(target) < spec.cell_count:
            raise RejectedActionError(f"unit {i}: cell {target} is off the grid")
        if chebyshev(pos, target, spec.width) > units.max_step:
            raise RejectedActionError(
                f"unit {i}: move {pos} -> {target} exceeds max_step {units.max_step}"
            )
    moved = UnitState(tuple(targets), units.max_step)
    cells = np.unique(np.asarray(targets, dtype=np.int64))
    burning = cells[state.states[cells] == NodeState.INFECTED] if len(cells) else cells
    return moved, burning


def wildfire_reward(
    prev: SystemState,
    nxt: SystemState,
    extinguished_count: int,
    c_e: float = 1.0,
    c_s: float = 1.0,
) -> float:
    """Extinguish bonus minus the spread penalty over one epoch."""
    ignited = (prev.states == NodeState.SUSCEPTIBLE) & (
        (nxt.states == NodeState.INFECTED) | (nxt.states == NodeState.DEAD)
    )
    return c_e * extinguished_count - c_s * int(np.count_nonzero(ignited))


class WildfireScenario(Scenario):
    """
    Firefighting MDP on a grid.

    An action is a tuple with one target cell per unit; the empty tuple
    leaves every unit idle and extinguishes nothing.
    """

    mode = "wildfire"

    def __init__(
        self,
        name: str,
        spec: GridSpec,
        dt: float = 0.1,
        initial_fires: int = 3,
        ignitions: Optional[Sequence[int]] = None,
        max_step: int = 1,
        staging_cell: Optional[int] = None,
        c_e: float = 1.0,
        c_s: float = 1.0,
    ):
        """
        Initialize the scenario.

        Args:
            name: Site name.
            spec: Grid description.
            dt: Sub-interval length.
            initial_fires: Random ignitions per replica.
            ignitions: Fixed ignited cells (overrides the count).
            max_step: Unit movement radius per epoch.
            staging_cell: Where new units enter; grid centre by default.
            c_e: Reward per extinguished cell.
            c_s: Penalty per newly ignited cell.
        """
        super().__init__(name, grid_graph(spec), dt)
        self.spec = spec
        if initial_fires < 0 or max_step < 0:
            raise ConfigError("initial_fires and max_step must be non-negative")
        self.initial_fires = initial_fires
        self.ignitions = None if ignitions is None else tuple(int(c) for c in ignitions)
        self.max_step = max_step
        self.staging_cell = spec.center if staging_cell is None else int(staging_cell)
        if not 0 <= self.staging_cell < spec.cell_count:
            raise ConfigError(f"staging cell {self.staging_cell} is off the grid")
        self.c_e = c_e
        self.c_s = c_s
        rows, cols = np.divmod(np.arange(spec.cell_count), spec.width)
        self._rows = rows
        self._cols = cols

    def initial_state(self, rng: np.random.Generator) -> SiteState:
        n = self.spec.cell_count
        if self.ignitions is not None:
            system = SystemState.initial(n, self.ignitions)
        else:
            k = min(self.initial_fires, n)
            system = SystemState.initial(n, rng.choice(n, size=k, replace=False) if k else ())
        return SiteState(system, UnitState((), self.max_step))

    def action_mask(self, state: SiteState) -> np.ndarray:
        return state.system.ids(NodeState.INFECTED)

    def deploy(self, state: SiteState, budget: int) -> SiteState:
        """Bring the unit count to the budget: new units appear at the staging cell."""
        units = state.units or UnitState((), self.max_step)
        positions = list(units.positions[:budget])
        positions.extend([self.staging_cell] * (budget - len(positions)))
        return SiteState(state.system, UnitState(tuple(positions), units.max_step))

    def validate_action(self, state: SiteState, action: Action, budget: int) -> None:
        units = state.units or UnitState((), self.max_step)
        if len(units) > budget:
            raise RejectedActionError(f"{len(units)} units exceed budget {budget}")
        if len(action):
            move_and_extinguish(state.system, units, action, self.spec)

    def step(
        self, state: SiteState, action: Action, rng: np.random.Generator
    ) -> Tuple[SiteState, float]:
        units = state.units or UnitState((), self.max_step)
        cells = np.zeros(0, dtype=np.int64)
        if len(action):
            units, cells = move_and_extinguish(state.system, units, action, self.spec)
        nxt = step_epoch(
            self.graph,
            state.system,
            cells if len(cells) else None,
            self.epoch_config(state.epoch),
            rng,
        )
        reward = wildfire_reward(state.system, nxt, len(cells), self.c_e, self.c_s)
        return SiteState(nxt, units), reward

    def reachable(self, cell: int, max_step: Optional[int] = None) -> np.ndarray:
        """Cells within max_step of a cell (Chebyshev), in id order."""
        radius = self.max_step if max_step is None else max_step
        row, col = self.spec.coords(cell)
        near = (np.abs(self._rows - row) <= radius) & (np.abs(self._cols - col) <= radius)
        return np.flatnonzero(near)

    def fire_distance(self, system: SystemState) -> np.ndarray:
        """Chebyshev distance of every cell to the closest burning cell (inf without fire)."""
        burning = system.ids(NodeState.INFECTED)
        if len(burning) == 0:
            return np.full(self.spec.cell_count, np.inf)
        dr = np.abs(self._rows[:, None] - self._rows[burning][None, :])
        dc = np.abs(self._cols[:, None] - self._cols[burning][None, :])
        return np.maximum(dr, dc).min(axis=1).astype(float)

    def candidate_actions(
        self, state: SiteState, budget: int, base_action: Action, k: int
    ) -> List[Action]:
        units = state.units or UnitState((), self.max_step)
        base = tuple(int(c) for c in base_action)
        if len(units) == 0 or len(self.action_mask(state)) == 0:
            return [base]
        start = base if len(base) == len(units) else units.positions
        distance = self.fire_distance(state.system)
        candidates: List[Action] = [base]
        for i, pos in enumerate(units.positions):
            cells = self.reachable(pos, units.max_step)
            ranked = cells[np.lexsort((cells, distance[cells]))][:k]
            for c in ranked:
                action = list(start)
                action[i] = int(c)
                candidates.append(tuple(action))
        return list(dict.fromkeys(candidates))

    def summary(self, state: SiteState) -> Dict[str, Any]:
        system = state.system
        units = state.units.positions if state.units else ()
        return {
            "vulnerable": system.count(NodeState.SUSCEPTIBLE),
            "burning": system.count(NodeState.INFECTED),
            "burnt": system.count(NodeState.DEAD),
            "extinguished": system.count(NodeState.VACCINATED),
            "units": ";".join(str(p) for p in units),
        }
