"""
Experiment runner service.

Drives assembly, partitioning, the selected solver and the report writer
for the command-line interface.
"""
import math
import time
from functools import reduce
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from timedd.logging_config import logger
from timedd.middleware.cache import cached_system
from timedd.models.configs import ExperimentConfig, SchwarzConfig
from timedd.models.errors import MaxItersExceeded, TimeDDError
from timedd.models.reports import ExperimentResult, IterationReport, ProbeRecord, RefinementRow, SummaryRow
from timedd.services.discretize import BlockSystem, Grid, assemble_system, dump_system
from timedd.services.linalg import lu_factor
from timedd.services.partition import build_coarse_space, partition_time
from timedd.services.problems import ManufacturedCase, error_norms, get_case, to_problem_spec
from timedd.services.report_writer import ReportWriter, get_report_writer
from timedd.services.schwarz import build_subdomains, monotonicity_probe, solve_gmres, solve_stationary

TABLE_K = (2, 4, 8, 16, 32, 64)
TABLE_VARIANTS = ("MSN", "ASN", "MSO", "ASO")
FAILED = "failed"


# =============================================================================
# Cached setup
# =============================================================================

@cached_system
def assemble_case(problem: str, gamma: Optional[float], M: int, N: int) -> Tuple[ManufacturedCase, BlockSystem]:
    """Manufactured case and its assembled system on an M x N grid."""
    case = get_case(problem, gamma)
    grid = Grid.uniform(case.dim, M, case.T, N=N)
    return case, assemble_system(to_problem_spec(case), grid)


@cached_system
def direct_solution(problem: str, gamma: Optional[float], M: int, N: int) -> np.ndarray:
    """Global sparse direct solution of the system from assemble_case."""
    _, sys = assemble_case(problem, gamma, M, N)
    return lu_factor(sys.L).solve(sys.b)


def align_time_steps(M: int, T: float, Ks: Iterable[int], min_steps: int = 1) -> int:
    """
    Smallest N >= T*M such that every K divides N - 1 and every strip of
    the largest K holds at least min_steps levels.
    """
    Ks = list(Ks)
    step = reduce(math.lcm, Ks, 1)
    N = max(5, int(round(T * M)))
    N += (-(N - 1)) % step
    while (N - 1) // max(Ks) < min_steps:
        N += step
    return N


def strip_levels_needed(cfg: SchwarzConfig) -> int:
    """Fewest levels a strip needs for the overlap of cfg."""
    return 2 * cfg.overlap_steps + 1 if cfg.overlapping else 1


class ExperimentRunner:
    """
    Runs solver experiments and writes their output.

    Each run appends to ``<out>/summary.csv`` and writes one history CSV
    and one report JSON per K.
    """

    def __init__(self, writer: Optional[ReportWriter] = None):
        """Initialize runner."""
        self.writer = writer or get_report_writer()

    # ========================================================================
    # Single runs
    # ========================================================================

    def resolve_steps(self, cfg: ExperimentConfig) -> int:
        """Time-step count of a run: cfg.N, or tau = h aligned to the K list."""
        case = get_case(cfg.problem, cfg.gamma)
        if cfg.N is not None:
            return cfg.N
        if cfg.mode == "direct":
            return align_time_steps(cfg.M, case.T, [1])
        min_steps = strip_levels_needed(cfg.schwarz_config(max(cfg.K)))
        N = align_time_steps(cfg.M, case.T, cfg.K, min_steps)
        if N != int(round(case.T * cfg.M)):
            logger.warning("N adjusted from %d to %d so that N-1 is divisible by K=%s "
                           "and every strip holds %d levels", int(round(case.T * cfg.M)), N, cfg.K, min_steps)
        return N

    @staticmethod
    def _stem(cfg: ExperimentConfig, K: int, N: int) -> str:
        if cfg.mode == "direct":
            return f"{cfg.problem}_direct_M{cfg.M}_N{N}"
        method = cfg.variant if cfg.mode == "stationary" or cfg.precond == "schwarz" else "none"
        return f"{cfg.problem}_{cfg.mode}_{method}_L{cfg.levels}_K{K}_M{cfg.M}_N{N}"

    @staticmethod
    def _row(cfg: ExperimentConfig, case: ManufacturedCase, K: int, N: int, **fields) -> SummaryRow:
        return SummaryRow(
            problem=cfg.problem,
            variant="direct" if cfg.mode == "direct" else cfg.variant,
            levels=cfg.levels,
            K=K,
            M=cfg.M,
            N=N,
            gamma=case.gamma,
            mode=cfg.mode,
            **fields,
        )

    def solve_one(self, cfg: ExperimentConfig, K: int, sys: BlockSystem) -> Tuple[np.ndarray, IterationReport]:
        """
        Solve ``sys`` with the configured mode for one K.

        Raises:
            MaxItersExceeded: carries the report and the last iterate
        """
        if cfg.mode == "direct":
            start = time.perf_counter()
            w = lu_factor(sys.L).solve(sys.b)
            b_norm = float(np.linalg.norm(sys.b))
            rel = float(np.linalg.norm(sys.b - sys.L @ w)) / b_norm if b_norm else 0.0
            return w, IterationReport(
                history=[1.0, rel], iterations=1, status="converged",
                wall_seconds=time.perf_counter() - start, initial_residual=b_norm, solver="direct",
            )

        scfg = cfg.schwarz_config(K)
        if cfg.mode == "gmres" and cfg.precond == "none":
            w, report = solve_gmres(sys, None, None, scfg, cfg.krylov_config(), precondition=False)
        else:
            start = time.perf_counter()
            part = partition_time(sys.grid.N, K, scfg.overlap_steps)
            cs = build_coarse_space(part, sys, scfg.coarse_solver) if scfg.levels == 2 else None
            subdomains = build_subdomains(sys, part, scfg)
            setup = time.perf_counter() - start
            logger.debug("setup for K=%d took %.3fs", K, setup)
            if cfg.mode == "stationary":
                return solve_stationary(sys, part, cs, scfg, subdomains=subdomains)
            w, report = solve_gmres(sys, part, cs, scfg, cfg.krylov_config(), subdomains=subdomains)

        if not report.converged:
            raise MaxItersExceeded(f"{report.solver} did not converge in {report.iterations} iterations", report, w)
        return w, report

    def run_experiment(self, cfg: ExperimentConfig) -> ExperimentResult:
        """
        Run every K of ``cfg`` and write history, report and summary files.

        A run that hits the iteration cap still writes its files; the
        result then carries exit status 1. Any other solver error is
        recorded as a ``failed`` row and the next K still runs.
        """
        N = self.resolve_steps(cfg)
        case, sys = assemble_case(cfg.problem, cfg.gamma, cfg.M, N)
        out = Path(cfg.out)
        result = ExperimentResult()

        if cfg.dump:
            stem = out / f"{cfg.problem}_M{cfg.M}_N{N}"
            result.files.extend(str(p) for p in dump_system(sys, stem))

        Ks: Sequence[int] = [1] if cfg.mode == "direct" else cfg.K
        for K in Ks:
            stem = out / self._stem(cfg, K, N)
            try:
                w, report = self.solve_one(cfg, K, sys)
            except MaxItersExceeded as e:
                w, report = e.solution, e.report
                result.exit_status = 1
            except TimeDDError as e:
                logger.error("%s K=%d failed: %s", cfg.variant, K, e)
                result.exit_status = 1
                result.errors.append(e.to_detail())
                result.rows.append(self._row(cfg, case, K, N, iters=None, status=FAILED, wall_seconds=0.0))
                meta = {"config": cfg.model_dump(), "K": K, "N": N}
                path = self.writer.write_failure_json(e.to_detail(), stem.with_name(stem.name + ".report.json"), meta)
                result.files.append(str(path))
                continue

            err_y, err_p = error_norms(case, sys.grid, w)
            row = self._row(cfg, case, K, N, iters=report.iterations, status=report.status,
                            wall_seconds=report.wall_seconds, err_y=err_y, err_p=err_p)
            result.rows.append(row)

            history = self.writer.write_history(report, stem.with_name(stem.name + ".history.csv"))
            meta = {"config": cfg.model_dump(), "K": K, "N": N, "err_y": err_y, "err_p": err_p}
            report_path = self.writer.write_report_json(report, stem.with_name(stem.name + ".report.json"), meta)
            result.files.extend([str(history), str(report_path)])
            logger.info("%s K=%d: %s after %d iterations, err_y=%.3e err_p=%.3e",
                        row.variant, K, row.status, row.iters, err_y, err_p)

        summary = self.writer.append_summary(result.rows, out / "summary.csv")
        result.files.append(str(summary))
        return result

    # ========================================================================
    # Studies
    # ========================================================================

    def reproduce_tables(
        self,
        problem: str = "example1",
        M: Optional[int] = None,
        out: Optional[str] = None,
        Ks: Sequence[int] = TABLE_K,
    ) -> ExperimentResult:
        """
        Stand-alone iteration counts for all four variants, both levels and
        every K, written as ``<problem>_tables.csv``.

        All cells share one N, chosen so that the overlapping variants fit
        into the strips of the largest K.
        """
        if M is None:
            M = 128 if problem == "example1" else 32
        T = get_case(problem).T
        N = align_time_steps(M, T, Ks, strip_levels_needed(SchwarzConfig(variant="MSO")))
        if N != int(round(T * M)):
            logger.warning("tables use N=%d for M=%d", N, M)
        result = ExperimentResult()
        for levels in (1, 2):
            for variant in TABLE_VARIANTS:
                extra = {} if out is None else {"out": out}
                cfg = ExperimentConfig(problem=problem, M=M, N=N, variant=variant, levels=levels,
                                       K=list(Ks), mode="stationary", **extra)
                run = self.run_experiment(cfg)
                result.rows.extend(run.rows)
                result.files.extend(run.files)
                result.errors.extend(run.errors)
                result.exit_status = max(result.exit_status, run.exit_status)
                out = cfg.out

        table = self.writer.write_table(result.rows, Path(out) / f"{problem}_tables.csv")
        result.files.append(str(table))
        return result

    def refinement_study(
        self,
        problem: str = "example1",
        Ms: Sequence[int] = (8, 16, 32, 64),
        gamma: Optional[float] = None,
        out: Optional[str] = None,
    ) -> List[RefinementRow]:
        """Direct-solve max-norm errors over successively refined grids (tau = h)."""
        rows: List[RefinementRow] = []
        for M in Ms:
            case = get_case(problem, gamma)
            N = max(5, int(round(case.T * M)))
            _, sys = assemble_case(problem, gamma, M, N)
            err_y, err_p = error_norms(case, sys.grid, direct_solution(problem, gamma, M, N))
            prev = rows[-1] if rows else None
            rows.append(RefinementRow(
                M=M, N=N, h=1.0 / M, err_y=err_y, err_p=err_p,
                ratio_y=prev.err_y / err_y if prev and err_y else None,
                ratio_p=prev.err_p / err_p if prev and err_p else None,
            ))
            logger.info("M=%d N=%d: err_y=%.3e err_p=%.3e", M, N, err_y, err_p)
        if out is not None:
            self.writer.write_refinement(rows, Path(out) / f"{problem}_refinement.csv")
        return rows

    def probe_study(
        self,
        problem: str = "example1",
        M: int = 33,
        N: Optional[int] = None,
        variant: str = "ASN",
        gamma: Optional[float] = None,
        out: Optional[str] = None,
    ) -> List[ProbeRecord]:
        """Interface error quantities of a two-subdomain nonoverlapping run."""
        case = get_case(problem, gamma)
        N = N if N is not None else align_time_steps(M, case.T, [2])
        _, sys = assemble_case(problem, gamma, M, N)
        cfg = SchwarzConfig(variant=variant, K=2)
        records = monotonicity_probe(sys, partition_time(N, 2, 0), case, cfg)
        if out is not None:
            self.writer.write_probe(records, Path(out) / f"{problem}_probe_{cfg.variant}_M{M}_N{N}.csv")
        return records


# Singleton instance
_experiment_runner: Optional[ExperimentRunner] = None


def get_experiment_runner() -> ExperimentRunner:
    """Get or create experiment runner singleton."""
    global _experiment_runner
    if _experiment_runner is None:
        _experiment_runner = ExperimentRunner()
    return _experiment_runner
