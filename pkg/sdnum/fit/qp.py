"""
Least-squares fit of a concave non-decreasing PWL utility.

Given samples (y_i, u_i) the fit solves

    minimize    sum_i (v_i - u_i)^2
    subject to  v_j <= v_i + g_i . (y_j - y_i)   for all i, j
                g_i >= 0

over the fitted values v and the supergradients g.

For scalar allocations the feasible set is exactly the sequences with
non-negative, non-increasing slopes between sorted anchors, so the fit
becomes a bounded least-squares problem in the kink parameterization

    v(y) = a + t (y - y_0) + sum_k d_k (min(y, y_k) - y_0),   t, d_k >= 0,

solved with BVLS. Vector allocations (up to three resources) use SLSQP
followed by an active-set polish. Both paths are checked against the KKT
conditions of the full problem.
"""

import logging
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.optimize import lsq_linear, minimize, nnls

from sdnum.errors import ConfigError, FitError
from sdnum.fit.pwl import PwlUtility

logger = logging.getLogger(__name__)

MAX_DIM = 3
ACTIVE_TOL = 1e-7


def _as_samples(samples: Sequence[Tuple[Any, float]]) -> Tuple[np.ndarray, np.ndarray]:
    if len(samples) == 0:
        raise ConfigError("at least one sample is required")
    ys = [np.atleast_1d(np.asarray(y, dtype=float)) for y, _ in samples]
    dims = {len(y) for y in ys}
    if len(dims) != 1:
        raise ConfigError("all sample allocations must have the same dimension")
    y = np.vstack(ys)
    u = np.asarray([float(v) for _, v in samples])
    if y.shape[1] > MAX_DIM:
        raise ConfigError(f"fitting supports at most {MAX_DIM} resource dimensions")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(u))):
        raise ConfigError("samples must be finite")
    if len(np.unique(y, axis=0)) != len(y):
        raise ConfigError("duplicate allocation among the samples")
    return y, u


def _constraint_matrix(y: np.ndarray) -> np.ndarray:
    """Rows D with D x >= 0 for x = (v, g.ravel()): hyperplane pairs, then g >= 0."""
    n, dim = y.shape
    rows = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            row = np.zeros(n + n * dim)
            row[i] += 1.0
            row[j] -= 1.0
            row[n + i * dim : n + (i + 1) * dim] = y[j] - y[i]
            rows.append(row)
    pair = np.asarray(rows).reshape(-1, n + n * dim)
    bounds = np.hstack([np.zeros((n * dim, n)), np.eye(n * dim)])
    return np.vstack([pair, bounds])


def kkt_residual(
    anchors: np.ndarray, raw: np.ndarray, values: np.ndarray, gradients: np.ndarray
) -> Dict[str, float]:
    """
    KKT residuals of a candidate fit, relative to the sample scale.

    Multipliers of the near-active constraints are recovered with NNLS.

    Returns:
        {"stationarity", "feasibility", "max"}
    """
    anchors = np.asarray(anchors, dtype=float).reshape(len(values), -1)
    n = len(values)
    scale = 1.0 + float(np.max(np.abs(raw)))
    x = np.concatenate([values, np.asarray(gradients, dtype=float).ravel()])
    d = _constraint_matrix(anchors)
    slack = d @ x
    feasibility = float(max(0.0, -slack.min())) / scale
    grad = np.zeros_like(x)
    grad[:n] = values - raw
    active = slack <= ACTIVE_TOL * scale
    if active.any():
        _, rnorm = nnls(d[active].T, grad, maxiter=50 * int(active.sum()))
        stationarity = float(rnorm) / scale
    else:
        stationarity = float(np.linalg.norm(grad)) / scale
    return {
        "stationarity": stationarity,
        "feasibility": feasibility,
        "max": max(stationarity, feasibility),
    }


Fit = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def _fit_scalar(y: np.ndarray, u: np.ndarray) -> Fit:
    order = np.argsort(y[:, 0], kind="stable")
    ys = y[order, 0]
    us = u[order]
    n = len(ys)
    if n == 1:
        return ys[:, None], us, us.copy(), np.zeros((1, 1))

    columns = [np.ones(n), ys - ys[0]]
    columns += [np.minimum(ys, ys[k]) - ys[0] for k in range(1, n - 1)]
    a = np.column_stack(columns)
    lower = np.r_[-np.inf, np.zeros(a.shape[1] - 1)]
    upper = np.full(a.shape[1], np.inf)
    result = lsq_linear(a, us, bounds=(lower, upper), method="bvls", tol=1e-12)
    if not result.success:
        raise FitError(
            f"bounded least squares failed: {result.message}", {"status": float(result.status)}
        )
    values = a @ result.x
    slopes = np.maximum(np.diff(values) / np.diff(ys), 0.0)
    gradients = np.r_[slopes, slopes[-1]][:, None]
    return ys[:, None], us, values, gradients


def _fit_vector(y: np.ndarray, u: np.ndarray) -> Fit:
    n, dim = y.shape
    d = _constraint_matrix(y)
    pair_rows = n * (n - 1)

    def objective(x):
        r = x[:n] - u
        return float(r @ r)

    def jacobian(x):
        g = np.zeros_like(x)
        g[:n] = 2.0 * (x[:n] - u)
        return g

    x0 = np.concatenate([np.full(n, u.mean()), np.zeros(n * dim)])
    bounds = [(None, None)] * n + [(0.0, None)] * (n * dim)
    constraints = []
    if pair_rows:
        constraints.append(
            {"type": "ineq", "fun": lambda x: d[:pair_rows] @ x, "jac": lambda x: d[:pair_rows]}
        )
    result = minimize(
        objective,
        x0,
        jac=jacobian,
        bounds=bounds,
        constraints=constraints,
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 2000},
    )
    x = _polish(result.x, u, d, n)
    values = x[:n]
    gradients = np.maximum(x[n:].reshape(n, dim), 0.0)
    return y, u, values, gradients


def _polish(x: np.ndarray, u: np.ndarray, d: np.ndarray, n: int) -> np.ndarray:
    """Re-solve with the near-active constraints as equalities; keep it if still feasible."""
    scale = 1.0 + float(np.max(np.abs(u)))
    active = d @ x <= 1e-6 * scale
    m = len(x)
    h = np.zeros((m, m))
    h[:n, :n] = np.eye(n)
    rhs = np.zeros(m)
    rhs[:n] = u
    a = d[active]
    kkt = np.block([[h, a.T], [a, np.zeros((len(a), len(a)))]])
    sol = np.linalg.lstsq(kkt, np.r_[rhs, np.zeros(len(a))], rcond=None)[0]
    polished = sol[:m]
    if (d @ polished).min() >= -1e-12 * scale:
        return polished
    return x


def fit_concave_monotone(
    samples: Sequence[Tuple[Any, float]], kkt_tol: float = 1e-6
) -> PwlUtility:
    """
    Fit a concave non-decreasing PWL utility to (allocation, utility) samples.

    Args:
        samples: Pairs (y_i, u_i); y_i scalar or a vector of up to three resources.
        kkt_tol: Largest accepted relative KKT residual.

    Returns:
        The fitted model; scalar anchors come back sorted, each gradient the
        slope to the right of its anchor (the last anchor repeats the last slope).

    Raises:
        ConfigError: no samples, duplicate allocations, or too many dimensions.
        FitError: the solver result violates the KKT conditions.
    """
    y, u = _as_samples(samples)
    if y.shape[1] == 1:
        anchors, raw, values, gradients = _fit_scalar(y, u)
    else:
        anchors, raw, values, gradients = _fit_vector(y, u)

    residuals = kkt_residual(anchors, raw, values, gradients)
    if residuals["max"] > kkt_tol:
        raise FitError("concave fit did not reach KKT tolerance", residuals)
    objective = float(np.sum((values - raw) ** 2))
    logger.debug(
        "[Fit] %d anchors, dim %d, objective %.6g, kkt %.2e",
        len(raw), anchors.shape[1], objective, residuals["max"],
    )
    return PwlUtility(
        anchors=anchors,
        values=values,
        gradients=gradients,
        raw=raw,
        objective=objective,
        kkt_residual=residuals["max"],
    )
