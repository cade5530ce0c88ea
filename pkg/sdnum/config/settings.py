"""
Experiment configuration for sdnum.

Provides dataclass-based settings with YAML persistence. Loading is
strict: unknown keys and invalid values raise ConfigError naming the
dotted key path, before any simulation starts.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin, get_type_hints

import yaml

from sdnum.errors import ConfigError
from sdnum.policy import BASELINES
from sdnum.scenarios import DemographicSpec, GridSpec

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent
DEFAULTS_FILE = CONFIG_DIR / "defaults.yaml"
SCENARIO_DIR = CONFIG_DIR / "scenarios"

SCHEMA_VERSION = 1
MODES = ("pandemic", "wildfire", "synthetic")
SITE_KINDS = {
    "pandemic": ("pandemic",),
    "wildfire": ("wildfire",),
    "synthetic": ("log", "quadratic"),
}

# Site parameters accepted per kind, on top of the spec dataclass fields.
PANDEMIC_PARAMS = {f.name for f in fields(DemographicSpec)} | {
    "initial_infections",
    "initial_infected",
    "target_ead",
    "graph_seed",
}
WILDFIRE_PARAMS = {f.name for f in fields(GridSpec) if f.init} - {"vegetation", "density"} | {
    "navegc",
    "vegetation_jitter",
    "initial_fires",
    "ignitions",
    "max_step",
    "staging_cell",
    "c_e",
    "c_s",
}
ORACLE_PARAMS = {"log": {"c"}, "quadratic": {"b", "m"}}


@dataclass
class ContagionSettings:
    """Simulation step settings."""

    dt: Optional[float] = None  # None = scenario default (pandemic 1.0, wildfire 0.1)
    trajectory_epochs: int = 50  # epochs written by `evaluate --trajectory`


@dataclass
class HorizonSettings:
    """Rolling-horizon settings."""

    T: int = 10  # look-ahead horizon (epochs)
    tau: int = 5  # allocation update period (epochs), tau <= T
    gamma: float = 0.99
    windows: int = 4
    z: List[float] = field(default_factory=lambda: [6.0])  # supply per resource


@dataclass
class MarketSettings:
    """Price iteration and transport settings."""

    alpha: Optional[float] = None  # None = 0.5 / (L * max slope)
    max_iters: int = 10000
    tol: float = 1e-6
    retry_count: int = 3
    retry_delay: float = 0.5
    timeout: float = 30.0


@dataclass
class PolicySettings:
    """Lower-layer policy; kind None picks the mode's baseline."""

    kind: Optional[str] = None  # none | random | old_first | nearest_fire | rollout:<base>
    n_rollouts: int = 8
    lookahead: int = 5
    candidates: int = 8


@dataclass
class EvaluationSettings:
    """Monte Carlo estimation of F."""

    replicas: int = 100
    grid: Optional[List[float]] = None  # None = integer budgets 0..z
    horizon: Optional[int] = None  # None = horizon.T
    gamma: Optional[float] = None  # None = horizon.gamma
    grid_cap: Optional[int] = None
    kkt_tol: float = 1e-6


@dataclass
class CompareSettings:
    """Fixed-budget policy comparison."""

    policies: List[str] = field(default_factory=lambda: ["none", "random", "old_first"])
    epochs: int = 50
    budget: int = 1
    replicas: int = 10000


@dataclass
class SiteSettings:
    """One location; `params` are checked against the site kind."""

    name: str = "loc1"
    kind: str = "pandemic"
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """Main settings container with all configuration options."""

    schema_version: int = SCHEMA_VERSION
    mode: str = "pandemic"
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    contagion: ContagionSettings = field(default_factory=ContagionSettings)
    horizon: HorizonSettings = field(default_factory=HorizonSettings)
    market: MarketSettings = field(default_factory=MarketSettings)
    policy: PolicySettings = field(default_factory=PolicySettings)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)
    compare: CompareSettings = field(default_factory=CompareSettings)
    sites: List[SiteSettings] = field(default_factory=lambda: [SiteSettings()])

    def to_dict(self) -> dict:
        """Convert settings to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """
        Create settings from a dictionary (a config or a run manifest).

        Raises:
            ConfigError: unknown keys or invalid values.
        """
        if isinstance(data, dict) and "config" in data and "versions" in data:
            data = data["config"]
        config = _build(cls, data, "")
        config.validate()
        return config

    @property
    def policy_kind(self) -> str:
        if self.policy.kind is not None:
            return self.policy.kind
        return {"pandemic": "old_first", "wildfire": "nearest_fire"}.get(self.mode, "none")

    @property
    def eval_horizon(self) -> int:
        return self.evaluation.horizon if self.evaluation.horizon is not None else self.horizon.T

    @property
    def eval_gamma(self) -> float:
        gamma = self.evaluation.gamma
        return gamma if gamma is not None else self.horizon.gamma

    def validate(self) -> None:
        """Raise ConfigError on the first invalid value."""
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version}"
            )
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {', '.join(MODES)}, got '{self.mode}'")
        _check(self.seed >= 0, "seed", "must be non-negative")
        _check(self.workers >= 1, "workers", "must be at least 1")

        c = self.contagion
        _check(c.dt is None or c.dt > 0, "contagion.dt", "must be positive")
        _check(c.trajectory_epochs >= 0, "contagion.trajectory_epochs", "must be non-negative")

        h = self.horizon
        _check(h.T >= 1, "horizon.T", "must be at least 1")
        _check(1 <= h.tau <= h.T, "horizon.tau", f"must lie in [1, T={h.T}]")
        _check(0.0 < h.gamma <= 1.0, "horizon.gamma", "must lie in (0, 1]")
        _check(h.windows >= 1, "horizon.windows", "must be at least 1")
        _check(len(h.z) >= 1, "horizon.z", "needs one entry per resource")
        _check(all(v >= 0 for v in h.z), "horizon.z", "must be non-negative")
        if self.mode != "synthetic":
            _check(len(h.z) == 1, "horizon.z", "simulated sites use a single resource")

        m = self.market
        _check(m.alpha is None or m.alpha > 0, "market.alpha", "must be positive")
        _check(m.max_iters >= 1, "market.max_iters", "must be at least 1")
        _check(m.tol > 0, "market.tol", "must be positive")
        _check(m.retry_count >= 0, "market.retry_count", "must be non-negative")
        _check(m.retry_delay >= 0, "market.retry_delay", "must be non-negative")
        _check(m.timeout > 0, "market.timeout", "must be positive")

        p = self.policy
        _check_policy_name(self.policy_kind, "policy.kind")
        _check(p.n_rollouts >= 1, "policy.n_rollouts", "must be at least 1")
        _check(p.lookahead >= 1, "policy.lookahead", "must be at least 1")
        _check(p.candidates >= 1, "policy.candidates", "must be at least 1")

        e = self.evaluation
        _check(e.replicas >= 1, "evaluation.replicas", "must be at least 1")
        _check(e.grid is None or len(e.grid) >= 1, "evaluation.grid", "must not be empty")
        _check(e.grid is None or all(v >= 0 for v in e.grid), "evaluation.grid", "negative budget")
        _check(e.horizon is None or e.horizon >= 1, "evaluation.horizon", "must be at least 1")
        _check(
            e.gamma is None or 0.0 < e.gamma <= 1.0, "evaluation.gamma", "must lie in (0, 1]"
        )
        _check(e.grid_cap is None or e.grid_cap >= 0, "evaluation.grid_cap", "negative cap")
        _check(e.kkt_tol > 0, "evaluation.kkt_tol", "must be positive")

        cmp_ = self.compare
        _check(len(cmp_.policies) >= 1, "compare.policies", "must not be empty")
        for i, name in enumerate(cmp_.policies):
            _check_policy_name(name, f"compare.policies[{i}]")
        _check(cmp_.epochs >= 1, "compare.epochs", "must be at least 1")
        _check(cmp_.budget >= 0, "compare.budget", "must be non-negative")
        _check(cmp_.replicas >= 1, "compare.replicas", "must be at least 1")

        _check(len(self.sites) >= 1, "sites", "at least one site is required")
        names = [s.name for s in self.sites]
        _check(len(set(names)) == len(names), "sites", "site names must be unique")
        for i, site in enumerate(self.sites):
            _check_site(site, self.mode, len(h.z), f"sites[{i}]")


def _check(ok: bool, path: str, message: str) -> None:
    if not ok:
        raise ConfigError(f"{path}: {message}")


def parse_policy_name(name: str):
    """'rollout:old_first' -> ('rollout', 'old_first'); 'random' -> ('random', None)."""
    head, sep, base = name.partition(":")
    if head == "rollout":
        return head, (base if sep else "none")
    return name, None


def _check_policy_name(name: str, path: str) -> None:
    head, base = parse_policy_name(name)
    known = set(BASELINES)
    if head == "rollout":
        _check(base in known, path, f"unknown rollout base policy '{base}'")
    else:
        _check(head in known, path, f"unknown policy '{name}'")


def _check_site(site: SiteSettings, mode: str, dim: int, path: str) -> None:
    _check(bool(site.name), f"{path}.name", "must not be empty")
    kinds = SITE_KINDS[mode]
    _check(site.kind in kinds, f"{path}.kind", f"must be {' or '.join(kinds)} in {mode} mode")
    if site.kind == "pandemic":
        allowed = PANDEMIC_PARAMS
    elif site.kind == "wildfire":
        allowed = WILDFIRE_PARAMS
    else:
        allowed = ORACLE_PARAMS[site.kind]
    unknown = sorted(set(site.params) - allowed)
    if unknown:
        raise ConfigError(f"unknown key '{path}.params.{unknown[0]}'")
    if site.kind == "log":
        c = site.params.get("c")
        _check(c is not None, f"{path}.params.c", "is required")
        c = c if isinstance(c, list) else [c]
        _check(len(c) in (1, dim), f"{path}.params.c", f"needs 1 or {dim} entries")
    if site.kind == "quadratic":
        _check("b" in site.params and "m" in site.params, f"{path}.params", "needs b and m")


def _build(cls, data: Any, path: str):
    """Instantiate a settings dataclass from plain data, rejecting unknown keys."""
    where = path or "config"
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls) if f.init}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else str(key)
        if key not in known:
            raise ConfigError(f"unknown key '{dotted}'")
        kwargs[key] = _coerce(value, hints[key], dotted)
    return cls(**kwargs)


def _coerce(value: Any, typ: Any, path: str) -> Any:
    origin = get_origin(typ)
    if origin is Union:
        if value is None:
            return None
        inner = [a for a in get_args(typ) if a is not type(None)]
        return _coerce(value, inner[0], path)
    if value is None:
        raise ConfigError(f"{path}: must not be null")
    if is_dataclass(typ):
        return _build(typ, value, path)
    if origin is list:
        if not isinstance(value, list):
            value = [value]
        (inner,) = get_args(typ) or (Any,)
        return [_coerce(v, inner, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return dict(value)
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def resolve_config_path(name: Union[str, Path]) -> Path:
    """A config file path, or the name of a shipped scenario."""
    path = Path(name)
    if path.exists():
        return path
    shipped = SCENARIO_DIR / f"{Path(name).stem}.yaml"
    if shipped.exists():
        return shipped
    raise ConfigError(f"config file not found: {name}")


def load_settings(path: Union[str, Path, None] = None) -> ExperimentConfig:
    """
    Load settings from a YAML file.

    Args:
        path: Config file, manifest, or shipped scenario name; None for defaults.

    Returns:
        Validated ExperimentConfig.

    Raises:
        ConfigError: missing file, bad YAML, unknown keys or invalid values.
    """
    if path is None:
        config = ExperimentConfig()
        config.validate()
        return config
    settings_path = resolve_config_path(path)
    try:
        with open(settings_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {settings_path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"cannot read {settings_path}: {e}") from e
    logger.debug("[Config] loaded %s", settings_path)
    return ExperimentConfig.from_dict(data)


def save_settings(settings: ExperimentConfig, path: Union[str, Path]) -> bool:
    """
    Save settings to a YAML file.

    Returns:
        True if save was successful, False otherwise.
    """
    settings_path = Path(path)
    try:
        settings_path.parent.mkdir(parents=True, exist_ok=True)
        with open(settings_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(
                settings.to_dict(),
                f,
                default_flow_style=False,
                allow_unicode=True,
                sort_keys=False,
            )
        return True
    except OSError as e:
        logger.error("[Config] could not save settings to %s: %s", settings_path, e)
        return False
