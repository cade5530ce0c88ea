"""Site policies and Monte Carlo evaluation of F(y)."""

from .base import Policy
from .baselines import (
    BASELINES,
    NearestFirePolicy,
    NonePolicy,
    OldFirstPolicy,
    RandomPolicy,
    baseline_policy,
)
from .rollout import RolloutPolicy, rollout_policy
from .evaluate import (
    UtilityEstimate,
    UtilitySample,
    evaluate_F,
    final_counts,
    play,
    run_episode,
    run_replica,
    sample_F,
)

__all__ = [
    "Policy",
    "BASELINES",
    "NearestFirePolicy",
    "NonePolicy",
    "OldFirstPolicy",
    "RandomPolicy",
    "baseline_policy",
    "RolloutPolicy",
    "rollout_policy",
    "UtilityEstimate",
    "UtilitySample",
    "evaluate_F",
    "final_counts",
    "play",
    "run_episode",
    "run_replica",
    "sample_F",
]
