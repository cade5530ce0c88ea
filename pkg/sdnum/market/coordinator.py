"""
Higher-layer market: sites answer prices with demands, the coordinator
moves prices toward the supply.

    y_l* = argmax_{0 <= y <= cap} F_l(y) - price . y        (each site)
    price' = [price + alpha (sum_l y_l* - z)]^+             (coordinator)

Iterations are synchronous: every site answers before the price moves.
"""

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from sdnum.errors import ConfigError, ContractViolation, DomainError
from sdnum.fit import PwlUtility, evaluate_pwl
from sdnum.market.oracles import ConcaveOracle

logger = logging.getLogger(__name__)

SiteModel = Union[PwlUtility, ConcaveOracle]

STALL_FACTOR = 1e-12
TIE_TOL = 1e-12


def _as_vector(x, dim: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float)).astype(float)
    if arr.shape == (1,) and dim > 1:
        arr = np.full(dim, arr[0])
    if arr.shape != (dim,):
        raise ContractViolation(f"{name} has {arr.size} components, expected {dim}")
    return arr


def _scalar_pwl_response(model: PwlUtility, price: float, cap: Optional[float]) -> float:
    slopes = model.gradients[:, 0]
    anchors = model.anchors[:, 0]
    if slopes.min() > price:
        if cap is None:
            raise DomainError(
                f"unbounded response: marginal utility {slopes.min():.6g} "
                f"exceeds price {price:.6g}"
            )
        logger.debug("[Market] unbounded response capped at %.6g", cap)

    intercepts = model.values - slopes * anchors
    points = [0.0]
    if cap is not None:
        points.append(float(cap))
    points.extend(float(a) for a in anchors)
    for i, j in combinations(range(model.size), 2):
        if slopes[i] != slopes[j]:
            points.append(float((intercepts[j] - intercepts[i]) / (slopes[i] - slopes[j])))
    upper = np.inf if cap is None else float(cap)
    ys = np.unique(np.clip(np.asarray(points), 0.0, upper))
    net = evaluate_pwl(model, ys[:, None]) - price * ys
    best = net.max()
    return float(ys[np.flatnonzero(net >= best - TIE_TOL * (1.0 + abs(best)))[0]])


def _vector_pwl_response(
    model: PwlUtility, price: np.ndarray, cap: Optional[np.ndarray]
) -> np.ndarray:
    """Exact LP: maximize t - price . y subject to t below every anchor plane."""
    dim = model.dim
    a_ub = np.hstack([-model.gradients, np.ones((model.size, 1))])
    b_ub = model.values - np.einsum("nd,nd->n", model.gradients, model.anchors)
    upper = [None] * dim if cap is None else [float(c) for c in cap]
    bounds = [(0.0, u) for u in upper] + [(None, None)]

    first = linprog(np.r_[price, -1.0], A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if first.status == 3:
        raise DomainError("unbounded response: some resource has positive net slope")
    if first.status != 0:
        raise DomainError(f"primal response LP failed: {first.message}")
    optimum = -first.fun
    # Among maximizers, take the one using the least total resource.
    a_tie = np.vstack([a_ub, np.r_[price, -1.0]])
    b_tie = np.r_[b_ub, -optimum + 1e-9 * (1.0 + abs(optimum))]
    second = linprog(
        np.r_[np.ones(dim), 0.0], A_ub=a_tie, b_ub=b_tie, bounds=bounds, method="highs"
    )
    x = second.x if second.status == 0 else first.x
    return np.maximum(x[:dim], 0.0)


def primal_response(model: SiteModel, price, cap=None) -> np.ndarray:
    """
    A site's demand at the given price.

    Args:
        model: Fitted surrogate or closed-form oracle.
        price: Price vector (>= 0), one entry per resource.
        cap: Optional upper bound on the demand per resource.

    Returns:
        The smallest maximizer of F(y) - price . y over 0 <= y <= cap.

    Raises:
        DomainError: the response is unbounded and no cap was given.
    """
    dim = model.dim
    price = _as_vector(price, dim, "price")
    if np.any(price < 0):
        raise ContractViolation("prices must be non-negative")
    cap_vec = None if cap is None else _as_vector(cap, dim, "cap")
    if isinstance(model, ConcaveOracle):
        return model.response(price, cap_vec)
    if isinstance(model, PwlUtility):
        if dim == 1:
            upper = None if cap_vec is None else float(cap_vec[0])
            return np.array([_scalar_pwl_response(model, float(price[0]), upper)])
        return _vector_pwl_response(model, price, cap_vec)
    raise ConfigError(f"cannot compute a primal response for {type(model).__name__}")


def model_value(model: SiteModel, y) -> float:
    if isinstance(model, PwlUtility):
        return float(evaluate_pwl(model, _as_vector(y, model.dim, "allocation")))
    return model.value(y)


@dataclass(frozen=True)
class MarketState:
    """Coordinator state between two dual updates."""

    price: np.ndarray
    k: int
    alpha: float
    z: np.ndarray
    demands: Tuple[np.ndarray, ...] = ()


def dual_update(state: MarketState, demands: Sequence) -> MarketState:
    """Projected price step toward market clearing; k is incremented."""
    total = np.sum([np.atleast_1d(np.asarray(d, dtype=float)) for d in demands], axis=0)
    price = np.maximum(state.price + state.alpha * (total - state.z), 0.0)
    return replace(
        state,
        price=price,
        k=state.k + 1,
        demands=tuple(np.atleast_1d(np.asarray(d, dtype=float)) for d in demands),
    )


class MarketSite(ABC):
    """Anything the coordinator can quote a price to."""

    name: str = ""

    @property
    @abstractmethod
    def dim(self) -> int:
        """Number of resource types."""

    @abstractmethod
    def primal_response(self, price, k: int = 0, supply=None) -> np.ndarray:
        """Demand at a price; `supply` caps it when the site has no cap of its own."""

    @abstractmethod
    def value(self, y) -> float:
        """Current surrogate utility of an allocation."""

    @abstractmethod
    def max_slope(self) -> float:
        """Largest marginal utility, used for the default step size."""


class LocalSite(MarketSite):
    """In-process site backed by a surrogate or an oracle."""

    def __init__(self, model: SiteModel, cap=None, name: str = ""):
        self.model = model
        self.cap = cap
        self.name = name

    @property
    def dim(self) -> int:
        return self.model.dim

    def primal_response(self, price, k: int = 0, supply=None) -> np.ndarray:
        cap = self.cap if self.cap is not None else supply
        return primal_response(self.model, price, cap)

    def value(self, y) -> float:
        return model_value(self.model, y)

    def max_slope(self) -> float:
        return self.model.max_slope()

    def __repr__(self) -> str:
        return f"LocalSite({self.name!r}, {self.model!r})"


@dataclass(frozen=True)
class MarketIteration:
    k: int
    price: np.ndarray
    demands: Tuple[np.ndarray, ...]
    excess: np.ndarray
    alpha: float


@dataclass
class MarketResult:
    """
    Outcome of a market run.

    The demands always satisfy sum_l y_l <= z (+ tol); when the prices did
    not settle they come from primal recovery around the final price.
    """

    price: np.ndarray
    demands: List[np.ndarray]
    converged: bool
    iterations: int
    duality_gap: float
    excess: np.ndarray
    trace: List[MarketIteration] = field(default_factory=list, repr=False)
    message: str = ""
    alpha: float = 0.0

    @property
    def success(self) -> bool:
        return self.converged

    @property
    def error_message(self) -> Optional[str]:
        return None if self.converged else self.message

    @property
    def total(self) -> np.ndarray:
        return np.sum(self.demands, axis=0)


def is_cleared(price: np.ndarray, excess: np.ndarray, tol: float) -> bool:
    """Every resource either balances or is free and under-used."""
    balanced = np.abs(excess) <= tol
    free = (price == 0.0) & (excess <= tol)
    return bool(np.all(balanced | free))


def default_step(sites: Sequence[MarketSite]) -> float:
    slope = max(float(s.max_slope()) for s in sites)
    if slope <= 0:
        return 1.0
    return 0.5 / (len(sites) * slope)


def _as_sites(sites: Sequence) -> List[MarketSite]:
    out = []
    for i, site in enumerate(sites):
        if isinstance(site, MarketSite):
            out.append(site)
        elif isinstance(site, (PwlUtility, ConcaveOracle)):
            out.append(LocalSite(site, name=f"site{i}"))
        else:
            raise ConfigError(f"site {i} has no primal response ({type(site).__name__})")
    return out


class _Responder:
    """Fans price quotes out to the sites and collects demands in site order."""

    def __init__(self, sites: List[MarketSite], z: np.ndarray, pool=None):
        self.sites = sites
        self.z = z
        self.pool = pool

    def __call__(self, price: np.ndarray, k: int) -> Tuple[np.ndarray, ...]:
        def ask(site: MarketSite) -> np.ndarray:
            y = site.primal_response(price.copy(), k, self.z)
            return _as_vector(y, len(self.z), f"demand of {site.name}")

        if self.pool is None:
            return tuple(ask(s) for s in self.sites)
        return tuple(self.pool.map(ask, self.sites))


def recover_primal(
    respond: Callable[[np.ndarray, int], Tuple[np.ndarray, ...]],
    price: np.ndarray,
    z: np.ndarray,
    k: int,
) -> List[np.ndarray]:
    """
    Feasible allocation around a price the iteration could not settle.

    Demands just above the price are topped up toward the demands just
    below it, site by site in order, until the supply runs out; if the
    demands above the price still exceed the supply they are scaled down.
    """
    delta = 1e-6 * max(1.0, float(np.max(price)))
    low = [d.copy() for d in respond(price + delta, k)]
    high = respond(np.maximum(price - delta, 0.0), k + 1)
    total = np.sum(low, axis=0)
    over = total > z
    if np.any(over):
        shrink = np.where(over, z / np.where(total > 0, total, 1.0), 1.0)
        return [d * shrink for d in low]
    remaining = z - total
    for d, h in zip(low, high):
        extra = np.clip(h - d, 0.0, remaining)
        d += extra
        remaining = remaining - extra
    return low


def duality_gap(
    sites: Sequence[MarketSite],
    price: np.ndarray,
    z: np.ndarray,
    responses: Sequence[np.ndarray],
    demands: Sequence[np.ndarray],
) -> float:
    """Dual value at the price minus the primal value of the demands."""
    dual = float(price @ z)
    for site, y in zip(sites, responses):
        dual += site.value(y) - float(price @ y)
    primal = sum(site.value(y) for site, y in zip(sites, demands))
    return dual - primal


def run_market(
    sites: Sequence,
    z,
    alpha: Optional[float] = None,
    max_iters: int = 10000,
    tol: float = 1e-6,
    lambda0=None,
    parallel: bool = False,
    on_iteration: Optional[Callable[[MarketIteration], None]] = None,
) -> MarketResult:
    """
    Iterate prices until the market clears.

    Args:
        sites: MarketSite objects, or bare surrogates / oracles.
        z: Total supply per resource.
        alpha: Initial step size; defaults to 0.5 / (L * largest marginal utility).
        max_iters: Iteration limit.
        tol: Clearing tolerance on the excess demand.
        lambda0: Starting prices (zero by default).
        parallel: Query sites concurrently within an iteration.
        on_iteration: Called with every MarketIteration.

    Returns:
        MarketResult; not converged means the best feasible allocation
        recovered from the final prices, with the duality gap as diagnostic.
    """
    sites = _as_sites(sites)
    if not sites:
        raise ConfigError("a market needs at least one site")
    dim = sites[0].dim
    z = _as_vector(z, dim, "supply")
    if np.any(z < 0):
        raise ConfigError("supply must be non-negative")
    if max_iters < 1 or tol <= 0:
        raise ConfigError("max_iters must be >= 1 and tol > 0")
    alpha0 = default_step(sites) if alpha is None else float(alpha)
    if alpha0 <= 0:
        raise ConfigError("step size must be positive")
    price = np.zeros(dim) if lambda0 is None else np.maximum(_as_vector(lambda0, dim, "price"), 0)

    state = MarketState(price=price, k=0, alpha=alpha0, z=z)
    trace: List[MarketIteration] = []
    converged = False
    message = "iteration limit reached"
    prev_excess = None

    pool = ThreadPoolExecutor(max_workers=len(sites)) if parallel else None
    try:
        respond = _Responder(sites, z, pool)
        while state.k < max_iters:
            demands = respond(state.price, state.k)
            excess = np.sum(demands, axis=0) - z
            step = MarketIteration(state.k, state.price.copy(), demands, excess, state.alpha)
            trace.append(step)
            if on_iteration is not None:
                on_iteration(step)
            if is_cleared(state.price, excess, tol):
                converged = True
                message = "market cleared"
                break
            if prev_excess is not None and np.any(excess * prev_excess < 0):
                state = replace(state, alpha=state.alpha * 0.5)
            if state.alpha < STALL_FACTOR * alpha0:
                message = "step size stalled"
                break
            prev_excess = excess
            state = dual_update(state, demands)

        last = trace[-1]
        if converged:
            final = list(last.demands)
        else:
            final = recover_primal(respond, last.price, z, len(trace))
            converged = is_cleared(last.price, np.sum(final, axis=0) - z, tol)
            if converged:
                message = f"cleared by primal recovery ({message})"
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    gap = duality_gap(sites, last.price, z, last.demands, final)
    excess = np.sum(final, axis=0) - z
    if converged:
        logger.info(
            "[Market] %s after %d iterations, price %s", message, len(trace), last.price.tolist()
        )
    else:
        logger.warning(
            "[Market] no equilibrium after %d iterations (%s), duality gap %.3g",
            len(trace), message, gap,
        )
    return MarketResult(
        price=last.price,
        demands=final,
        converged=converged,
        iterations=len(trace),
        duality_gap=gap,
        excess=excess,
        trace=trace,
        message=message,
        alpha=last.alpha,
    )
