#!/usr/bin/env python3
"""
sdnum - Main Entry Point

Command-line front end for the rolling-horizon resource allocation toolkit.

Exit codes: 0 success, 2 configuration or usage error, 3 fit or domain
error, 4 protocol or transport error, 5 a market window did not clear
(results are still written), 1 anything else.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from sdnum import __version__

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_FIT = 3
EXIT_PROTOCOL = 4
EXIT_NOT_CLEARED = 5

logger = logging.getLogger("sdnum")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        help="Config file, run manifest, or shipped scenario name (e.g. pandemic_table1)",
    )
    parser.add_argument("--seed", type=int, help="Override the root seed")
    parser.add_argument("--workers", type=int, help="Worker processes for replica fan-out")
    parser.add_argument("--output-dir", type=Path, help="Directory for CSVs and manifest.yaml")
    parser.add_argument("--debug", action="store_true", help="Enable debug output")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdnum",
        description="Stochastic dynamic resource allocation across sites",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"sdnum {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="Estimate each site's utility over the budget grid")
    _common(p)
    p.add_argument("--trajectory", action="store_true", help="Also write trajectory.csv")

    p = sub.add_parser("run", help="Run the rolling-horizon experiment in-process")
    _common(p)

    p = sub.add_parser("compare-policies", help="Compare site policies at a fixed budget")
    _common(p)

    p = sub.add_parser("fit", help="Fit concave surrogates to sample files")
    _common(p)
    p.add_argument("--samples", type=Path, required=True, help="CSV of (site, y, u) samples")
    p.add_argument("--m-f", type=float, help="Strong-concavity modulus for gap.csv")

    p = sub.add_parser("serve-site", help="Serve one configured site to a coordinator")
    _common(p)
    p.add_argument("--site", required=True, help="Site name from the config")
    p.add_argument(
        "--listen",
        default=os.environ.get("SDNUM_LISTEN", "127.0.0.1:7000"),
        help="host:port to listen on (env SDNUM_LISTEN)",
    )
    p.add_argument("--state-dir", type=Path, help="Checkpoint directory for restarts")

    p = sub.add_parser("coordinate", help="Run the rolling-horizon experiment over site agents")
    _common(p)
    p.add_argument(
        "--sites",
        default=os.environ.get("SDNUM_SITES"),
        help="name=host:port,... (env SDNUM_SITES)",
    )
    return parser


def setup_logging(debug: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if debug else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def load_config(args):
    from sdnum.config import load_settings

    config = load_settings(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    if args.output_dir is not None:
        config.output_dir = str(args.output_dir)
    config.validate()
    return config


def dispatch(args) -> int:
    from sdnum import app

    config = load_config(args)
    command = args.command
    if command == "evaluate":
        app.cmd_evaluate(config, trajectory=args.trajectory)
    elif command == "run":
        return _run_status(app.cmd_run(config))
    elif command == "compare-policies":
        app.cmd_compare_policies(config)
    elif command == "fit":
        app.cmd_fit(config, args.samples, m_f=args.m_f)
    elif command == "serve-site":
        app.cmd_serve_site(config, args.site, args.listen, args.state_dir)
    elif command == "coordinate":
        if not args.sites:
            from sdnum.errors import ConfigError

            raise ConfigError("coordinate needs --sites or SDNUM_SITES")
        return _run_status(app.cmd_coordinate(config, args.sites))
    return EXIT_OK


def _run_status(controller) -> int:
    failed = [r.window for r in controller.history if not r.market.converged]
    if failed:
        logger.warning("[sdnum] market did not clear in windows %s", failed)
        return EXIT_NOT_CLEARED
    return EXIT_OK


def main(argv=None) -> int:
    """Main entry point for sdnum."""
    args = build_parser().parse_args(argv)
    setup_logging(args.debug, args.quiet)

    from sdnum.errors import (
        ConfigError,
        DomainError,
        FitError,
        ProtocolError,
        TransportError,
    )

    try:
        return dispatch(args)
    except ConfigError as e:
        logger.error("[sdnum] configuration error: %s", e)
        return EXIT_CONFIG
    except (FitError, DomainError) as e:
        logger.error("[sdnum] %s", e)
        return EXIT_FIT
    except (ProtocolError, TransportError) as e:
        logger.error("[sdnum] %s", e)
        return EXIT_PROTOCOL
    except ValueError as e:
        logger.error("[sdnum] invalid argument: %s", e)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        logger.info("[sdnum] interrupted")
        return EXIT_ERROR
    except Exception:
        logger.exception("[sdnum] unexpected error")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
