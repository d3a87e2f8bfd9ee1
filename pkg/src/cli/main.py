"""
Command-line entry point

    python src/cli/main.py [global options] <command> [inputs]

Global options precede the command; reports land in --out.
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

sys.path.append(str(Path(__file__).parent.parent))

from cli.commands import EXIT_INPUT_ERROR, CommandName, CommandRunner  # noqa: E402
from config import settings  # noqa: E402
from utils.helpers import setup_logging  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmono",
        description=f"{settings.APP_NAME} {settings.APP_VERSION}",
    )
    parser.add_argument("--config", type=Path, help="Run config file (key = value, dotted sections)")
    parser.add_argument("--seed", type=int, help="Seed for every random draw of the run")
    parser.add_argument("--tol", type=float, help="Absolute tolerance overriding the scaled defaults")
    parser.add_argument("--quad-order", type=int, help="Gauss-Legendre points per axis and panel")
    parser.add_argument("--out", type=Path, default=Path(settings.REPORTS_DIR), help="Report directory")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    parser.add_argument("--log-file", action="store_true", help=f"Also log to {settings.LOGS_DIR}")

    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser(CommandName.VALIDATE_COST.value, help="Check homogeneity and ellipticity of the cost")
    validate.add_argument("--dim", dest="cost_dim", type=int, help="Dimension of a power cost")

    form = sub.add_parser(CommandName.FORM.value, help="Averaged Hessian and gaps on a quadruple CSV")
    form.add_argument("quadruples", type=Path)

    check = sub.add_parser(CommandName.CHECK.value, help="Monotonicity checks on a map CSV")
    check.add_argument("map", type=Path)
    check.add_argument("--max-cycle", type=int)
    check.add_argument("--inverse", action="store_true", default=None)

    generate = sub.add_parser(CommandName.GENERATE.value, help="Write an exact assignment instance")
    generate.add_argument("--m", type=int)
    generate.add_argument("--dim", type=int)
    generate.add_argument("--p", type=float)
    generate.add_argument("--grid", type=int)

    angles = sub.add_parser(CommandName.ANGLES.value, help="F and G angle bounds on a quadruple CSV")
    angles.add_argument("quadruples", type=Path)

    rectify = sub.add_parser(CommandName.RECTIFY.value, help="Lipschitz chart of a pair CSV")
    rectify.add_argument("pairs", type=Path)
    rectify.add_argument("--base-index", type=int)
    rectify.add_argument("--radius", type=float)
    rectify.add_argument("--auto-shrink", action="store_true", default=None)

    measure = sub.add_parser(CommandName.MEASURE.value, help="Push-forward and density ratios")
    measure.add_argument("map", type=Path)
    measure.add_argument("density", type=Path)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested overrides for the run config; unset flags leave file values alone"""
    blocks = {
        "cost": {"dim": "cost_dim"},
        "check": {"max_cycle": "max_cycle", "inverse": "inverse"},
        "generate": {"m": "m", "dim": "dim", "p": "p", "grid": "grid"},
        "rectify": {"base_index": "base_index", "radius": "radius", "auto_shrink": "auto_shrink"},
    }
    overrides: Dict[str, Any] = {"seed": args.seed, "tol": args.tol, "quad_order": args.quad_order}
    block_values = {
        block: {key: getattr(args, attr) for key, attr in fields.items() if getattr(args, attr, None) is not None}
        for block, fields in blocks.items()
    }
    overrides.update({block: values for block, values in block_values.items() if values})
    return overrides


def _inputs(args: argparse.Namespace) -> Dict[str, Path]:
    return {name: getattr(args, name) for name in ("quadruples", "map", "pairs", "density") if hasattr(args, name)}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT_ERROR if exc.code else 0

    setup_logging(args.log_level, Path(settings.LOGS_DIR) if args.log_file else None)
    runner = CommandRunner()
    return runner.execute(CommandName(args.command), _inputs(args), args.out, args.config, _overrides(args))


if __name__ == "__main__":
    sys.exit(main())
