"""
Optimality-gap certificate for allocations computed on surrogates.

If the aggregate utility f is m_f-strongly concave and the surrogate
differs from it by at most epsilon everywhere, the allocation that is
optimal for the surrogate lies within 2 * sqrt(epsilon / m_f) of the true
optimum. The true epsilon is a supremum over all allocations and is not
observable; epsilon_proxy() gives the sample-based stand-in used in reports.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from sdnum.errors import DomainError
from sdnum.fit.pwl import PwlUtility


@dataclass(frozen=True)
class GapCertificate:
    """Distance bound between the surrogate optimum and the true optimum."""

    epsilon: float
    m_f: float
    bound: float
    proxy: bool = False

    def recompute(self) -> float:
        return 2.0 * math.sqrt(self.epsilon / self.m_f)


def gap_bound(epsilon: float, m_f: float, proxy: bool = False) -> GapCertificate:
    """
    Certificate for surrogate error epsilon and strong-concavity modulus m_f.

    Raises:
        DomainError: m_f <= 0 or epsilon < 0.
    """
    if not m_f > 0:
        raise DomainError(f"strong-concavity modulus must be positive, got {m_f}")
    if epsilon < 0:
        raise DomainError(f"epsilon must be non-negative, got {epsilon}")
    return GapCertificate(epsilon, m_f, 2.0 * math.sqrt(epsilon / m_f), proxy)


def epsilon_proxy(
    models: Sequence[PwlUtility], stderr: Optional[Sequence[float]] = None
) -> float:
    """
    Sample-based stand-in for the total surrogate error over sites.

    Per site: the largest residual |fitted - sample| plus the Monte Carlo
    standard error of the samples; the total is the sum over sites.
    """
    if stderr is None:
        stderr = [0.0] * len(models)
    if len(stderr) != len(models):
        raise DomainError("one standard error per model is required")
    total = 0.0
    for model, se in zip(models, stderr):
        known = ~np.isnan(model.raw)
        if known.any():
            total += float(np.max(np.abs(model.values[known] - model.raw[known])))
        total += float(se)
    return total


def project_nonnegative(x) -> np.ndarray:
    """Euclidean projection onto the non-negative orthant."""
    return np.maximum(np.asarray(x, dtype=float), 0.0)
