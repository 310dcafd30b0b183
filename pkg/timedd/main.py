"""
timedd - command-line entry point.

Commands:

    run      one experiment over a list of subdomain counts
    tables   stand-alone iteration tables for all variants and levels
    refine   direct-solve refinement study
    probe    interface error quantities for K = 2

Example:

    python -m timedd.main run --problem example1 --M 128 --variant msn --K 2,4,8
"""
import argparse
import sys
from typing import List, Optional

import orjson
from pydantic import ValidationError

from timedd.config import settings
from timedd.logging_config import logger, set_level
from timedd.models.configs import ExperimentConfig
from timedd.models.errors import ErrorCode, ErrorDetail, ErrorResponse, TimeDDError
from timedd.services.experiment_runner import TABLE_K, get_experiment_runner

EXIT_OK = 0
EXIT_SOLVER_ERROR = 1
EXIT_CONFIG_ERROR = 2


def _int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got '{value}'")


def _emit_error(detail: ErrorDetail) -> None:
    sys.stderr.write(orjson.dumps(ErrorResponse(error=detail).model_dump()).decode() + "\n")


# ============================================================================
# Parser
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Time-domain Schwarz solvers for parabolic optimal control",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default from LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--problem", default="example1", choices=["example1", "example2"])
    run.add_argument("--M", type=int, default=16, help="spatial subdivisions (h = 1/M)")
    run.add_argument("--N", type=int, default=None, help="time steps (default: tau = h, aligned to K)")
    run.add_argument("--gamma", type=float, default=None)
    run.add_argument("--variant", default="asn", choices=["msn", "asn", "mso", "aso", "MSN", "ASN", "MSO", "ASO"])
    run.add_argument("--levels", type=int, default=1, choices=[1, 2])
    run.add_argument("--K", type=_int_list, default=[2], help="comma separated subdomain counts")
    run.add_argument("--overlap", type=int, default=None, help="overlap in time steps")
    run.add_argument("--mode", default="stationary", choices=["stationary", "gmres", "direct"])
    run.add_argument("--precond", default="schwarz", choices=["none", "schwarz"])
    run.add_argument("--tol", type=float, default=None, help="relative residual tolerance")
    run.add_argument("--max-iters", type=int, default=None)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--subdomain-solver", default=None, choices=["direct", "ilu_bicgstab"])
    run.add_argument("--coarse-solver", default=None, choices=["direct", "ilu_bicgstab"])
    run.add_argument("--two-color", action="store_true", help="two-color multiplicative schedule")
    run.add_argument("--dump", action="store_true", help="write the assembled matrix as triplets")
    run.add_argument("--out", default=None)

    tables = sub.add_parser("tables", help="reproduce the iteration tables")
    tables.add_argument("--problem", default="example1", choices=["example1", "example2"])
    tables.add_argument("--M", type=int, default=None, help="default 128 in 1D, 32 in 2D")
    tables.add_argument("--full-scale", action="store_true", help="use M = 128 for example2")
    tables.add_argument("--K", type=_int_list, default=list(TABLE_K))
    tables.add_argument("--out", default=None)

    refine = sub.add_parser("refine", help="direct-solve refinement study")
    refine.add_argument("--problem", default="example1", choices=["example1", "example2"])
    refine.add_argument("--M", type=_int_list, default=[8, 16, 32, 64], help="comma separated list of M")
    refine.add_argument("--gamma", type=float, default=None)
    refine.add_argument("--out", default=None)

    probe = sub.add_parser("probe", help="interface error quantities of a two-subdomain run")
    probe.add_argument("--problem", default="example1", choices=["example1", "example2"])
    probe.add_argument("--M", type=int, default=33)
    probe.add_argument("--N", type=int, default=None)
    probe.add_argument("--variant", default="asn", choices=["asn", "msn", "ASN", "MSN"])
    probe.add_argument("--gamma", type=float, default=None)
    probe.add_argument("--out", default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Build the run configuration; unset flags fall back to settings."""
    values = {
        "problem": args.problem,
        "M": args.M,
        "N": args.N,
        "gamma": args.gamma,
        "variant": args.variant,
        "levels": args.levels,
        "K": args.K,
        "overlap_steps": args.overlap,
        "mode": args.mode,
        "precond": args.precond,
        "rel_tol": args.tol,
        "max_iters": args.max_iters,
        "seed": args.seed,
        "subdomain_solver": args.subdomain_solver,
        "coarse_solver": args.coarse_solver,
        "two_color": args.two_color,
        "dump": args.dump,
        "out": args.out,
    }
    return ExperimentConfig(**{k: v for k, v in values.items() if v is not None})


# ============================================================================
# Entry point
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_level(args.log_level)
    runner = get_experiment_runner()
    out = args.out or settings.OUTPUT_DIR

    try:
        if args.command == "run":
            result = runner.run_experiment(config_from_args(args))
            for detail in result.errors:
                _emit_error(detail)
            return result.exit_status
        if args.command == "tables":
            M = args.M if args.M is not None else (128 if args.full_scale else None)
            result = runner.reproduce_tables(args.problem, M=M, out=out, Ks=args.K)
            for detail in result.errors:
                _emit_error(detail)
            return result.exit_status
        if args.command == "probe":
            runner.probe_study(args.problem, M=args.M, N=args.N, variant=args.variant, gamma=args.gamma, out=out)
            return EXIT_OK
        runner.refinement_study(args.problem, Ms=args.M, gamma=args.gamma, out=out)
        return EXIT_OK
    except ValidationError as e:
        _emit_error(ErrorDetail(
            code=ErrorCode.INVALID_CONFIG,
            message="invalid configuration",
            details={"errors": [{"loc": list(err["loc"]), "msg": err["msg"]} for err in e.errors()]},
        ))
        return EXIT_CONFIG_ERROR
    except TimeDDError as e:
        logger.error("%s: %s", e.code, e.message)
        _emit_error(e.to_detail())
        return EXIT_SOLVER_ERROR


if __name__ == "__main__":
    sys.exit(main())
