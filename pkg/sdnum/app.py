"""
sdnum application layer.

Builds scenarios, policies and site runtimes from an ExperimentConfig and
runs the subcommands. Each cmd_* writes its CSV tables and manifest.yaml
into the configured output directory.
"""

import csv
import logging
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from sdnum import output
from sdnum import rng as rngmod
from sdnum.config import ExperimentConfig, SiteSettings, parse_policy_name
from sdnum.errors import ConfigError
from sdnum.fit import PwlUtility, epsilon_proxy, fit_concave_monotone, gap_bound
from sdnum.market import (
    ConcaveOracle,
    LogOracle,
    OracleSite,
    QuadraticOracle,
    RollingHorizonController,
    SimulatedSite,
    SiteRuntime,
)
from sdnum.policy import (
    Policy,
    baseline_policy,
    final_counts,
    rollout_policy,
    run_episode,
    sample_F,
)
from sdnum.protocol import coordinate, parse_endpoint, parse_sites, serve_site
from sdnum.scenarios import (
    DemographicSpec,
    GridSpec,
    PandemicScenario,
    Scenario,
    WildfireScenario,
    generate_vegetation,
    tune_er_edge_prob,
)

logger = logging.getLogger(__name__)

DEFAULT_DT = {"pandemic": 1.0, "wildfire": 0.1}
COMPARE_METRIC = {"pandemic": "dead", "wildfire": "burnt"}


# Builders


def _spec_kwargs(cls, params: Dict[str, Any]) -> Dict[str, Any]:
    names = {f.name for f in fields(cls) if f.init}
    out = {}
    for key, value in params.items():
        if key in names:
            out[key] = tuple(value) if isinstance(value, list) else value
    return out


def build_scenario(config: ExperimentConfig, index: int) -> Scenario:
    """Scenario of site `index`; graphs are generated from the (GRAPH, site) stream."""
    site = config.sites[index]
    params = site.params
    graph_seed = int(params.get("graph_seed", rngmod.derive_seed(config.seed, rngmod.GRAPH, index)))
    dt = config.contagion.dt if config.contagion.dt is not None else DEFAULT_DT[site.kind]

    if site.kind == "pandemic":
        spec = DemographicSpec(**_spec_kwargs(DemographicSpec, params))
        if "target_ead" in params and "er_edge_prob" not in params:
            p = tune_er_edge_prob(spec, float(params["target_ead"]), graph_seed)
            spec = replace(spec, er_edge_prob=p)
        return PandemicScenario(
            site.name,
            spec,
            seed=graph_seed,
            dt=dt,
            initial_infections=int(params.get("initial_infections", 5)),
            initial_infected=params.get("initial_infected"),
        )

    if site.kind == "wildfire":
        kwargs = _spec_kwargs(GridSpec, params)
        if "navegc" in params:
            vegetation, density = generate_vegetation(
                float(params["navegc"]),
                int(kwargs.get("width", 16)),
                int(kwargs.get("height", 16)),
                jitter=float(params.get("vegetation_jitter", 0.2)),
                seed=graph_seed,
            )
            kwargs.update(vegetation=vegetation, density=density)
        return WildfireScenario(
            site.name,
            GridSpec(**kwargs),
            dt=dt,
            initial_fires=int(params.get("initial_fires", 3)),
            ignitions=params.get("ignitions"),
            max_step=int(params.get("max_step", 1)),
            staging_cell=params.get("staging_cell"),
            c_e=float(params.get("c_e", 1.0)),
            c_s=float(params.get("c_s", 1.0)),
        )
    raise ConfigError(f"site {site.name}: kind '{site.kind}' is not a simulated scenario")


def build_oracle(site: SiteSettings, dim: int) -> ConcaveOracle:
    if site.kind == "log":
        c = np.atleast_1d(np.asarray(site.params["c"], dtype=float))
        return LogOracle(np.full(dim, c[0]) if c.size == 1 else c)
    if site.kind == "quadratic":
        return QuadraticOracle(site.params["b"], site.params["m"])
    raise ConfigError(f"site {site.name}: kind '{site.kind}' has no closed form")


def build_policy(name: str, config: ExperimentConfig, mode: str) -> Policy:
    """A baseline by name, or 'rollout:<base>' for rollout over a baseline."""
    head, base = parse_policy_name(name)
    if head == "rollout":
        p = config.policy
        return rollout_policy(
            baseline_policy(base, mode),
            n_rollouts=p.n_rollouts,
            horizon=p.lookahead,
            gamma=config.eval_gamma,
            candidates=p.candidates,
        )
    return baseline_policy(head, mode)


def build_runtime(config: ExperimentConfig, index: int) -> SiteRuntime:
    site = config.sites[index]
    if config.mode == "synthetic":
        return OracleSite(site.name, build_oracle(site, len(config.horizon.z)))
    scenario = build_scenario(config, index)
    return SimulatedSite(
        site.name,
        scenario,
        build_policy(config.policy_kind, config, scenario.mode),
        seed=config.seed,
        site_index=index,
        horizon=config.eval_horizon,
        gamma=config.eval_gamma,
        replicas=config.evaluation.replicas,
        grid_cap=config.evaluation.grid_cap,
        workers=config.workers,
        kkt_tol=config.evaluation.kkt_tol,
    )


def site_index(config: ExperimentConfig, name: str) -> int:
    for i, site in enumerate(config.sites):
        if site.name == name:
            return i
    raise ConfigError(f"no site named '{name}' in the config")


def budget_grid(config: ExperimentConfig) -> List[float]:
    if config.evaluation.grid is not None:
        return list(config.evaluation.grid)
    top = int(np.floor(config.horizon.z[0] + 1e-9))
    if config.evaluation.grid_cap is not None:
        top = min(top, config.evaluation.grid_cap)
    return [float(y) for y in range(top + 1)]


def _output_dir(config: ExperimentConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


# Commands


def cmd_evaluate(config: ExperimentConfig, trajectory: bool = False) -> Path:
    """
    Estimate F over the budget grid for every site.

    Writes evaluate.csv, plus trajectory.csv when asked for.
    """
    out = _output_dir(config)
    grid = budget_grid(config)
    rows: List[Dict[str, Any]] = []
    traj_rows: List[Dict[str, Any]] = []
    traj_keys: List[str] = []
    for i, site in enumerate(config.sites):
        if config.mode == "synthetic":
            oracle = build_oracle(site, len(config.horizon.z))
            for y in grid:
                value = oracle.value(np.full(oracle.dim, y))
                rows.append({"site": site.name, "y": y, "mean": value, "stderr": 0.0, "n": 1})
            continue
        scenario = build_scenario(config, i)
        policy = build_policy(config.policy_kind, config, scenario.mode)
        seed = rngmod.derive_seed(config.seed, rngmod.SITE, i)
        estimates = sample_F(
            scenario,
            policy,
            grid,
            config.eval_horizon,
            config.eval_gamma,
            config.evaluation.replicas,
            seed,
            workers=config.workers,
        )
        for e in estimates:
            rows.append(
                {"site": site.name, "y": e.y, "mean": e.mean, "stderr": e.stderr, "n": e.n}
            )
        logger.info(
            "[Evaluate] %s: F(%s..%s) = %.4g..%.4g",
            site.name, grid[0], grid[-1], estimates[0].mean, estimates[-1].mean,
        )
        if trajectory:
            counts = run_episode(
                scenario,
                policy,
                config.compare.budget,
                config.contagion.trajectory_epochs,
                seed,
                replica=0,
            )
            for epoch, c in enumerate(counts):
                traj_keys.extend(k for k in c if k not in traj_keys)
                traj_rows.append({"site": site.name, "epoch": epoch, **c})

    output.write_csv(out / "evaluate.csv", output.EVALUATE_HEADER, rows)
    if trajectory:
        header = output.counts_header(["site", "epoch"], traj_keys)
        output.write_csv(out / "trajectory.csv", header, traj_rows)
    output.write_manifest(out, config, "evaluate", {"trajectory": trajectory})
    return out


def read_samples(path: Union[str, Path]) -> Dict[str, List[Tuple[List[float], float, float]]]:
    """
    Read (y, u) samples from CSV.

    Columns: optional `site`; `y` or `y0`, `y1`, ...; `u` or `mean`;
    optional `stderr`. Vector components may also be joined with ';' in `y`.
    """
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as f:
            records = list(csv.DictReader(f))
    except OSError as e:
        raise ConfigError(f"cannot read samples {path}: {e}") from e
    if not records:
        raise ConfigError(f"{path}: no samples")
    columns = set(records[0])
    value_col = "u" if "u" in columns else "mean" if "mean" in columns else None
    if value_col is None:
        raise ConfigError(f"{path}: needs a 'u' or 'mean' column")
    y_cols = sorted(c for c in columns if c.startswith("y") and c[1:].isdigit())
    if "y" not in columns and not y_cols:
        raise ConfigError(f"{path}: needs a 'y' column or y0, y1, ... columns")

    groups: Dict[str, List[Tuple[List[float], float, float]]] = {}
    for lineno, rec in enumerate(records, start=2):
        try:
            if "y" in columns:
                y = [float(v) for v in rec["y"].split(";")]
            else:
                y = [float(rec[c]) for c in y_cols]
            u = float(rec[value_col])
            se = float(rec["stderr"]) if rec.get("stderr") else 0.0
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{path} line {lineno}: {e}") from e
        groups.setdefault(rec.get("site") or "site", []).append((y, u, se))
    return groups


def cmd_fit(
    config: ExperimentConfig, samples: Union[str, Path], m_f: Optional[float] = None
) -> Dict[str, PwlUtility]:
    """
    Fit concave surrogates to sample files.

    Writes fit.csv and one <site>.pwl per site; with m_f also gap.csv.
    """
    out = _output_dir(config)
    groups = read_samples(samples)
    models: Dict[str, PwlUtility] = {}
    rows = []
    stderr = []
    for name, pts in groups.items():
        model = fit_concave_monotone([(y, u) for y, u, _ in pts], kkt_tol=config.evaluation.kkt_tol)
        models[name] = model
        stderr.append(max(se for _, _, se in pts))
        model.to_text(out / f"{name}.pwl")
        for y, raw, value, g in zip(model.anchors, model.raw, model.values, model.gradients):
            rows.append({"site": name, "y": y, "u": raw, "u_hat": value, "gradient": g})
        logger.info(
            "[Fit] %s: %d anchors, objective %.6g, kkt %.2e",
            name, model.size, model.objective, model.kkt_residual,
        )
    output.write_csv(out / "fit.csv", output.FIT_HEADER, rows)
    if m_f is not None:
        eps = epsilon_proxy(list(models.values()), stderr)
        cert = gap_bound(eps, m_f, proxy=True)
        output.write_csv(
            out / "gap.csv",
            output.GAP_HEADER,
            [{"site": "all", "epsilon": eps, "m_f": m_f, "bound": cert.bound, "proxy": True}],
        )
    output.write_manifest(out, config, "fit", {"samples": str(samples), "m_f": m_f})
    return models


def write_run_outputs(
    config: ExperimentConfig, controller: RollingHorizonController, command: str
) -> Path:
    """allocations.csv, market_trace.csv, markets.csv and stats.csv of a horizon run."""
    out = _output_dir(config)
    names = [s.name for s in controller.sites]

    trace_rows = []
    market_rows = []
    stats_rows = []
    stats_keys: List[str] = []
    for record in controller.history:
        market = record.market
        for it in market.trace:
            for j in range(len(it.price)):
                row = {
                    "window": record.window,
                    "k": it.k,
                    "resource": j,
                    "lambda": it.price[j],
                    "excess": it.excess[j],
                }
                row.update({name: d[j] for name, d in zip(names, it.demands)})
                trace_rows.append(row)
        market_rows.append(
            {
                "window": record.window,
                "converged": market.converged,
                "iterations": market.iterations,
                "price": market.price,
                "duality_gap": market.duality_gap,
                "message": market.message,
            }
        )
        for report, outcome in zip(record.reports, record.outcomes):
            stats_keys.extend(k for k in outcome.summary if k not in stats_keys)
            stats_rows.append({"window": record.window, "site": report.name, **outcome.summary})

    rows = controller.allocation_rows()
    output.write_csv(out / "allocations.csv", output.ALLOCATIONS_HEADER, rows)
    output.write_csv(out / "market_trace.csv", output.market_trace_header(names), trace_rows)
    output.write_csv(out / "markets.csv", output.MARKETS_HEADER, market_rows)
    output.write_csv(
        out / "stats.csv", output.counts_header(["window", "site"], stats_keys), stats_rows
    )
    output.write_manifest(out, config, command)
    return out


def _controller(config: ExperimentConfig, sites: Sequence[SiteRuntime], parallel: bool):
    h, m = config.horizon, config.market
    return RollingHorizonController(
        sites,
        h.z,
        T=h.T,
        tau=h.tau,
        gamma=h.gamma,
        alpha=m.alpha,
        max_iters=m.max_iters,
        tol=m.tol,
        integer=config.mode != "synthetic",
        parallel=parallel,
    )


def cmd_run(config: ExperimentConfig) -> RollingHorizonController:
    """Run the rolling-horizon experiment in-process."""
    sites = [build_runtime(config, i) for i in range(len(config.sites))]
    controller = _controller(config, sites, parallel=False)
    controller.run(config.horizon.windows)
    write_run_outputs(config, controller, "run")
    return controller


def cmd_compare_policies(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """
    Fixed-budget policy comparison.

    Every policy runs compare.replicas trajectories of compare.epochs
    epochs with compare.budget units per epoch under shared random
    streams; the final death (pandemic) or burnt-cell (wildfire) count is
    normalized by the no-action policy's mean.
    """
    if config.mode == "synthetic":
        raise ConfigError("compare-policies needs simulated sites")
    out = _output_dir(config)
    cmp_ = config.compare
    rows = []
    for i, site in enumerate(config.sites):
        scenario = build_scenario(config, i)
        metric = COMPARE_METRIC[scenario.mode]
        seed = rngmod.derive_seed(config.seed, rngmod.SITE, i)
        names = list(cmp_.policies)
        if "none" not in names:
            names.append("none")
        means = {}
        for name in names:
            policy = build_policy(name, config, scenario.mode)
            counts = final_counts(
                scenario, policy, cmp_.budget, cmp_.epochs, cmp_.replicas, seed, config.workers
            )
            values = np.asarray([c[metric] for c in counts], dtype=float)
            se = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
            means[name] = (float(values.mean()), se, len(values))
            logger.info("[Compare] %s %s: mean %s %.4g +/- %.4g", site.name, name, metric,
                        means[name][0], se)
        base = means["none"][0]
        for name in cmp_.policies:
            mean, se, n = means[name]
            if base > 0:
                normalized = mean / base
            else:
                normalized = 1.0 if mean == 0 else float("inf")
            rows.append(
                {
                    "site": site.name,
                    "policy": name,
                    "metric": metric,
                    "mean": mean,
                    "stderr": se,
                    "normalized": normalized,
                    "n": n,
                }
            )
    output.write_csv(out / "compare.csv", output.COMPARE_HEADER, rows)
    output.write_manifest(out, config, "compare-policies")
    return rows


def cmd_serve_site(
    config: ExperimentConfig,
    site: str,
    listen: str,
    state_dir: Union[str, Path, None] = None,
):
    """Serve one configured site to a remote coordinator until shut down."""
    runtime = build_runtime(config, site_index(config, site))
    return serve_site(runtime, parse_endpoint(listen), state_dir)


def cmd_coordinate(config: ExperimentConfig, sites: str) -> RollingHorizonController:
    """Run the rolling-horizon experiment against site agents."""
    h, m = config.horizon, config.market
    controller = coordinate(
        parse_sites(sites),
        h.z,
        T=h.T,
        tau=h.tau,
        gamma=h.gamma,
        windows=h.windows,
        alpha=m.alpha,
        max_iters=m.max_iters,
        tol=m.tol,
        retry_count=m.retry_count,
        retry_delay=m.retry_delay,
        timeout=m.timeout,
        integer=config.mode != "synthetic",
    )
    write_run_outputs(config, controller, "coordinate")
    return controller
