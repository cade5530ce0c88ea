"""Configuration module for sdnum."""

from .settings import (
    CompareSettings,
    ContagionSettings,
    EvaluationSettings,
    ExperimentConfig,
    HorizonSettings,
    MarketSettings,
    PolicySettings,
    SiteSettings,
    load_settings,
    parse_policy_name,
    resolve_config_path,
    save_settings,
)

__all__ = [
    "CompareSettings",
    "ContagionSettings",
    "EvaluationSettings",
    "ExperimentConfig",
    "HorizonSettings",
    "MarketSettings",
    "PolicySettings",
    "SiteSettings",
    "load_settings",
    "parse_policy_name",
    "resolve_config_path",
    "save_settings",
]
