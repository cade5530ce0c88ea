"""
CSV and manifest writers.

Every command writes its tables to the output directory together with
manifest.yaml (resolved config, package versions, seed, command), which
is itself a valid --config input. Floats are written with repr() so a
replayed run reproduces the files byte for byte.

    evaluate.csv      site,y,mean,stderr,n
    fit.csv           site,y,u,u_hat,gradient
    gap.csv           site,epsilon,m_f,bound,proxy
    market_trace.csv  window,k,resource,lambda,<site...>,excess
    markets.csv       window,converged,iterations,price,duality_gap,message
    allocations.csv   window,start_epoch,site,allocation,realized_utility,stale
    stats.csv         window,site,<scenario counts...>
    compare.csv       site,policy,metric,mean,stderr,normalized,n
    trajectory.csv    site,epoch,<scenario counts...>

Vector values (allocations and prices with several resources) are joined
with ';'.
"""

import csv
import logging
import platform
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import networkx
import numpy as np
import scipy
import yaml

from sdnum import __version__

logger = logging.getLogger(__name__)

EVALUATE_HEADER = ["site", "y", "mean", "stderr", "n"]
FIT_HEADER = ["site", "y", "u", "u_hat", "gradient"]
GAP_HEADER = ["site", "epsilon", "m_f", "bound", "proxy"]
MARKETS_HEADER = ["window", "converged", "iterations", "price", "duality_gap", "message"]
ALLOCATIONS_HEADER = ["window", "start_epoch", "site", "allocation", "realized_utility", "stale"]
COMPARE_HEADER = ["site", "policy", "metric", "mean", "stderr", "normalized", "n"]


def market_trace_header(sites: Sequence[str]) -> List[str]:
    return ["window", "k", "resource", "lambda", *sites, "excess"]


def counts_header(lead: Sequence[str], keys: Iterable[str]) -> List[str]:
    return [*lead, *keys]


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        items = np.asarray(value).reshape(-1).tolist()
        return ";".join(format_value(v) for v in items)
    return str(value)


def write_csv(
    path: Union[str, Path], fieldnames: Sequence[str], rows: Iterable[Dict[str, Any]]
) -> Path:
    """Write rows (dicts keyed by column) to a CSV file; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format_value(row.get(k)) for k in fieldnames})
            count += 1
    logger.info("[Output] %s (%d rows)", path, count)
    return path


def versions() -> Dict[str, str]:
    return {
        "sdnum": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "networkx": networkx.__version__,
        "pyyaml": yaml.__version__,
        "python": platform.python_version(),
    }


def write_manifest(
    output_dir: Union[str, Path],
    config,
    command: str,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write manifest.yaml: everything needed to replay the run.

    Args:
        output_dir: Run output directory.
        config: The resolved ExperimentConfig.
        command: Subcommand name.
        extra: Command arguments that are not part of the config.
    """
    path = Path(output_dir) / "manifest.yaml"
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "command": command,
        "seed": config.seed,
        "arguments": dict(extra or {}),
        "versions": versions(),
        "config": config.to_dict(),
    }
    with path.open("w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, default_flow_style=False, allow_unicode=True, sort_keys=False)
    return path
