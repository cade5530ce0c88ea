"""
Direct solution of the aggregate allocation problem and integer rounding.

    maximize    sum_l F_l(y_l)
    subject to  sum_l y_l <= z,  y_l >= 0

solve_aggregate() runs projected gradient ascent on the whole allocation
and serves as the reference the market solution is compared against.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from sdnum.errors import ConfigError, ContractViolation
from sdnum.market.oracles import ConcaveOracle

logger = logging.getLogger(__name__)


def _project_column(v: np.ndarray, total: float) -> np.ndarray:
    x = np.maximum(v, 0.0)
    if x.sum() <= total:
        return x
    # Euclidean projection onto the simplex {x >= 0, sum x = total}.
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, len(v) + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_budget_set(y, z) -> np.ndarray:
    """
    Project an (L, d) allocation onto {y >= 0, sum over sites <= z}.

    Resources are independent, so each column is projected separately.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (y.shape[1],):
        raise ContractViolation("supply and allocation disagree on the number of resources")
    return np.column_stack([_project_column(y[:, j], float(z[j])) for j in range(y.shape[1])])


def solve_aggregate(
    oracles: Sequence[ConcaveOracle],
    z,
    step: Optional[float] = None,
    tol: float = 1e-10,
    max_iters: int = 200000,
    y0=None,
) -> np.ndarray:
    """
    Projected gradient ascent on sum_l F_l(y_l) over the budget set.

    Args:
        oracles: One smooth concave utility per site.
        z: Supply per resource.
        step: Step size; defaults to 1 / (largest gradient Lipschitz constant).
        tol: Stop when no component moves more than this.
        max_iters: Iteration limit.
        y0: Starting allocation, (L, d).

    Returns:
        The (L, d) optimal allocation.
    """
    if not oracles:
        raise ConfigError("at least one site is required")
    dim = oracles[0].dim
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if step is None:
        step = 1.0 / max(max(o.lipschitz() for o in oracles), 1e-12)
    y = np.zeros((len(oracles), dim)) if y0 is None else project_budget_set(y0, z)
    for it in range(max_iters):
        grad = np.vstack([o.gradient(row) for o, row in zip(oracles, y)])
        nxt = project_budget_set(y + step * grad, z)
        if np.max(np.abs(nxt - y)) <= tol:
            logger.debug("[Aggregate] converged after %d iterations", it + 1)
            return nxt
        y = nxt
    logger.warning("[Aggregate] iteration limit %d reached", max_iters)
    return y


def integer_allocation(y, z, tol: float = 1e-6) -> np.ndarray:
    """
    Round an allocation to integers without exceeding the supply.

    Each site gets the floor of its share; the leftover integer supply goes
    one unit at a time to the largest fractional parts, ties to the lower
    site index.

    Args:
        y: (L,) or (L, d) allocation with sum over sites <= z + tol.
        z: Supply per resource.

    Returns:
        Integer allocation of the same shape.
    """
    arr = np.asarray(y, dtype=float)
    flat = arr.ndim == 1
    cols = arr[:, None] if flat else arr
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (cols.shape[1],):
        raise ContractViolation("supply and allocation disagree on the number of resources")
    if np.any(cols < -tol):
        raise ContractViolation("allocations must be non-negative")
    if np.any(cols.sum(axis=0) > z + tol * max(1, len(cols))):
        raise ContractViolation("allocation exceeds the supply")

    cols = np.maximum(cols, 0.0)
    out = np.floor(cols + tol)
    for j in range(cols.shape[1]):
        spare = int(np.floor(z[j] + tol) - out[:, j].sum())
        fractions = cols[:, j] - out[:, j]
        order = sorted(range(len(cols)), key=lambda i: (-fractions[i], i))
        for i in order[: max(spare, 0)]:
            if fractions[i] > tol:
                out[i, j] += 1
    out = out.astype(int)
    return out[:, 0] if flat else out
