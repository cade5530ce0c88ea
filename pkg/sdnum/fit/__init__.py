"""Concave piecewise-linear surrogates and their optimality-gap certificate."""

from .pwl import PwlUtility, evaluate_pwl
from .qp import fit_concave_monotone, kkt_residual
from .gap import GapCertificate, epsilon_proxy, gap_bound, project_nonnegative

__all__ = [
    "PwlUtility",
    "evaluate_pwl",
    "fit_concave_monotone",
    "kkt_residual",
    "GapCertificate",
    "epsilon_proxy",
    "gap_bound",
    "project_nonnegative",
]
