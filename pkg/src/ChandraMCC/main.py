"""Main entry point for the ChandraMCC command line.

Subcommands:

* ``simulate`` draws one trajectory and writes it as JSON.
* ``filter`` runs one filter over a trajectory file.
* ``bench`` runs the Monte-Carlo comparison and prints the report.
* ``verify`` runs the equivalence and identity suite.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 data or numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from typing import Any

from rich.table import Table

from .bench import (
    PROTOCOLS,
    REPORT_FORMATS,
    compare_with_reference,
    render_report,
    run_experiment,
)
from .config import PI0_CHOICES, ConfigManager
from .core import FILTER_NAMES, run_filter
from .exceptions import ChandraMCCError, ConfigurationError
from .statespace import load_trajectory, save_trajectory, simulate, trajectory_summary
from .utils import configure_logging, render_table, write_text
from .verify import render_verification, verify_model

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_VERIFY_FAILED", "EXIT_USAGE", "EXIT_DATA"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3

# Get version from package metadata
try:
    from importlib.metadata import version as get_version

    VERSION: str = get_version("chandramcc")
except Exception:
    # Fallback for development/uninstalled
    try:
        from ._version import __version__ as VERSION
    except ImportError:
        VERSION = "0.0.0+dev"


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    common.add_argument("--out", metavar="PATH", help="output file")
    common.add_argument("--format", choices=REPORT_FORMATS, default="table")
    common.add_argument("--seed", type=int, help="simulation seed")
    common.add_argument("--runs", type=int, help="Monte-Carlo runs")
    common.add_argument("--q4", type=float, help="satellite process-noise variance")
    common.add_argument("--pi0", choices=PI0_CHOICES, help="satellite initial covariance")
    common.add_argument(
        "--lambda", dest="lam", metavar="REAL|adaptive", help="adjusting weight strategy"
    )
    common.add_argument("--sigma", type=float, help="fixed kernel size (Riccati forms only)")
    common.add_argument(
        "--filter",
        dest="filters",
        action="append",
        choices=FILTER_NAMES,
        metavar="NAME",
        help=f"filter to run (repeatable): {', '.join(FILTER_NAMES)}",
    )
    common.add_argument("--parallel", type=int, help="worker processes for bench")
    common.add_argument("-v", "--verbose", action="count", default=0)
    return common


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with its four subcommands."""
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="chandramcc",
        description="Chandrasekhar-type maximum correntropy Kalman filters and their benchmark.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[common], help="simulate one trajectory")
    p_sim.set_defaults(handler=cmd_simulate)

    p_filter = sub.add_parser("filter", parents=[common], help="run one filter on a trajectory")
    p_filter.add_argument("--trajectory", metavar="PATH", required=True)
    p_filter.set_defaults(handler=cmd_filter)

    p_bench = sub.add_parser("bench", parents=[common], help="run the Monte-Carlo benchmark")
    p_bench.add_argument(
        "--reference", action="store_true", help="compare with the published RMSE values"
    )
    p_bench.add_argument("--protocol", choices=PROTOCOLS, help="error alignment and initial state")
    p_bench.set_defaults(handler=cmd_bench)

    p_verify = sub.add_parser("verify", parents=[common], help="run the equivalence checks")
    p_verify.add_argument("--trajectory", metavar="PATH")
    p_verify.add_argument(
        "--reference-lambda",
        type=float,
        metavar="REAL",
        help="lambda of the Riccati oracle (defaults to the filters' lambda)",
    )
    p_verify.set_defaults(handler=cmd_verify)
    return parser


def _load_config(args: argparse.Namespace) -> ConfigManager:
    cm = ConfigManager()
    if args.config:
        cm.load_config(args.config)
    cm.apply_overrides(
        {
            "seed": args.seed,
            "runs": args.runs,
            "q4": args.q4,
            "pi0": args.pi0,
            "lambda": args.lam,
            "sigma": args.sigma,
            "filters": args.filters,
            "parallel": args.parallel,
            "protocol": getattr(args, "protocol", None),
        }
    )
    return cm


def _emit(text: str, out: str | None) -> None:
    if out:
        write_text(text, out)
        logger.info("Wrote %s", out)
    else:
        sys.stdout.write(text)


def cmd_simulate(args: argparse.Namespace) -> int:
    """Simulate one trajectory and write it to ``--out``."""
    if not args.out:
        raise ConfigurationError("simulate requires --out PATH.")
    cm = _load_config(args)
    model = cm.build_model()
    traj = simulate(model, cm.N, cm.shot, cm.seed)
    save_trajectory(traj, args.out)
    s = trajectory_summary(traj)
    print(f"N={s['N']} n={s['n']} m={s['m']} corrupted={s['corrupted']}")
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    """Run one filter over a trajectory file and write its output to ``--out``."""
    if not args.out:
        raise ConfigurationError("filter requires --out PATH.")
    if not args.filters or len(args.filters) != 1:
        raise ConfigurationError("filter requires exactly one --filter NAME.")
    cm = _load_config(args)
    traj = load_trajectory(args.trajectory)
    # the generating model travels with the trajectory unless one is configured explicitly
    configured = args.config or args.q4 is not None or args.pi0 is not None
    model = traj.model if traj.model is not None and not configured else cm.build_model()
    out = run_filter(model, traj, cm.filters[0])
    write_text(json.dumps(out.to_json(), indent=1) + "\n", args.out)
    if out.alpha is not None:
        print(f"alpha={out.alpha}")
    logger.info("%s: %d steps in %.3f ms", out.filter, out.N + 1, out.elapsed_ns / 1e6)
    return EXIT_OK


def _reference_table(rows: list[Any]) -> str:
    table = Table(title="Comparison with published RMSE", header_style="bold cyan")
    table.add_column("Filter", style="bold")
    table.add_column("Quantity")
    table.add_column("Measured", justify="right")
    table.add_column("Published", justify="right")
    table.add_column("Deviation (%)", justify="right")
    table.add_column("Within 15%", justify="center")
    for c in rows:
        dev = "-" if c.reference == 0.0 else f"{100.0 * c.relative_deviation:+.1f}"
        table.add_row(
            c.filter,
            c.quantity,
            f"{c.measured:.2f}",
            f"{c.reference:.2f}",
            dev,
            "yes" if c.within_tolerance else "no",
        )
    return render_table(table)


def cmd_bench(args: argparse.Namespace) -> int:
    """Run the Monte-Carlo experiment and print or write the report."""
    cm = _load_config(args)
    if cm.runs < 500:
        logger.warning("Running %d Monte-Carlo runs; published values use 500.", cm.runs)
    report = run_experiment(cm.to_experiment_config())
    _emit(render_report(report, args.format), args.out)
    if args.reference:
        if report.q4 is None:
            raise ConfigurationError("--reference requires the satellite preset.")
        comparison = compare_with_reference(report, report.q4, report.pi0_label)
        sys.stdout.write(_reference_table(comparison))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    """Run the equivalence suite; exit 1 if any check fails."""
    cm = _load_config(args)
    model = cm.build_model()
    traj = load_trajectory(args.trajectory) if args.trajectory else None
    report = verify_model(
        model,
        lam=cm.constant_lambda(),
        N=cm.N,
        seed=cm.seed,
        shot=cm.shot,
        trajectory=traj,
        reference_lambda=args.reference_lambda,
    )
    if args.format == "json":
        _emit(json.dumps(report.to_json(), indent=2) + "\n", args.out)
    else:
        _emit(render_verification(report), args.out)
    for c in report.failures:
        print(
            f"FAILED {c.name}: residual {c.max_residual:.3e} > {c.tolerance:.0e} "
            f"at step {c.failing_step}",
            file=sys.stderr,
        )
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run a subcommand and map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    configure_logging(args.verbose)
    try:
        return int(args.handler(args))
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ChandraMCCError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
