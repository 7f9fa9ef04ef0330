"""Solve, benchmark and rate-experiment orchestration used by the management commands."""

import csv
import logging
import statistics
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Optional

import numpy as np
from django.conf import settings

from .exceptions import SolverError
from .qp_dual import DualIterate, IterationLogWriter, SolveResult, primal_objective, run_solver
from .qps_io import read_qps_file, to_standard_form
from .schemas import BENCH_KEYS, Algorithm, BenchRow, RunSummary, SigmaPolicy, SolveStatus, SolverConfig

logger = logging.getLogger(__name__)

QPS_SUFFIXES = ('.qps', '.sif', '.mps')
RATE_COLUMNS = ('k', 'seminorm_res', 'kkt_res', 'abs_gap', 'rel_gap')
DESK_PROBLEMS = ('HS118', 'QRECIPE', 'QSCORPIO', 'GOULDQP3', 'QSCAGR25')

# name: (m, n, iterations for a, b2, b15, b30, b45)
REFERENCE_RESULTS = {
    'AUG2D': (9604, 19404, 50, 150, 100, 50, 50),
    'AUG2DC': (10000, 20200, 50, 150, 100, 50, 50),
    'AUG3DQP': (972, 3133, 150, 350, 100, 100, 100),
    'CONT-101': (9801, 9900, 1850, 1400, 1400, 1350, 1750),
    'CONT-201': (39601, 39800, 1800, 1600, 1500, 1500, 1650),
    'CONT-300': (89401, 89700, 3250, 1450, 1450, 2050, 2500),
    'GOULDQP3': (349, 699, 150, 300, 150, 150, 150),
    'HS118': (29, 44, 10000, 300, 200, 250, 250),
    'KSIP': (1000, 1020, 600, 650, 550, 550, 650),
    'QRECIPE': (59, 116, 1100, 1050, 350, 350, 350),
    'QSCAGR25': (274, 473, 10000, 3800, 4400, 6350, 3700),
    'QSCORPIO': (161, 226, 1300, 350, 250, 250, 250),
    'QSCRS8': (192, 945, 9850, 5850, 7150, 8650, 10000),
    'QSCSD1': (77, 760, 1050, 500, 250, 300, 300),
    'QSCSD8': (397, 2750, 2650, 750, 900, 900, 950),
    'QSCTAP2': (977, 2303, 10000, 450, 600, 1650, 2500),
    'QSCTAP3': (1274, 3041, 4200, 450, 500, 700, 1000),
    'QSHIP04L': (288, 1901, 650, 350, 300, 300, 300),
    'QSHIP04S': (188, 1253, 7350, 300, 250, 300, 300),
    'QSHIP08L': (478, 3137, 950, 300, 250, 250, 250),
    'QSHIP08S': (256, 1578, 1300, 300, 200, 250, 250),
    'QSHIP12L': (637, 4226, 2150, 450, 300, 350, 350),
    'QSHIP12S': (322, 1953, 1750, 550, 400, 400, 400),
    'QSIERRA': (915, 2347, 1300, 700, 550, 550, 600),
    'QSTANDAT': (192, 500, 3650, 850, 600, 600, 600),
}

BENCH_CONFIGURATIONS = {
    'a': {'algorithm': Algorithm.PADMM, 'alpha': 2.0},
    'b2': {'algorithm': Algorithm.ACC_PADMM, 'alpha': 2.0},
    'b15': {'algorithm': Algorithm.ACC_PADMM, 'alpha': 15.0},
    'b30': {'algorithm': Algorithm.ACC_PADMM, 'alpha': 30.0},
    'b45': {'algorithm': Algorithm.ACC_PADMM, 'alpha': 45.0},
}


def _default(value, name):
    return getattr(settings, name) if value is None else value


def build_config(
    algorithm: Optional[str] = None,
    sigma: Optional[float] = None,
    rho: Optional[float] = None,
    alpha: Optional[float] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    check_every: Optional[int] = None,
    restart_every: Optional[int] = None,
    ordering: Optional[str] = None,
    seed: Optional[int] = None,
    fixed_sigma: bool = False,
    no_restart: bool = False,
    restart_anchor: str = 'w_bar',
) -> SolverConfig:
    """SolverConfig with unspecified fields taken from settings."""
    algorithm = Algorithm(algorithm or Algorithm.ACC_PADMM)
    rho_setting = 'QP_SOLVER_RHO_PADMM' if algorithm is Algorithm.PADMM else 'QP_SOLVER_RHO_ACC'
    return SolverConfig.build(
        algorithm=algorithm,
        sigma=_default(sigma, 'QP_SOLVER_SIGMA'),
        rho=_default(rho, rho_setting),
        alpha=_default(alpha, 'QP_SOLVER_ALPHA'),
        tol=_default(tol, 'QP_SOLVER_TOL'),
        max_iter=_default(max_iter, 'QP_SOLVER_MAX_ITER'),
        check_every=_default(check_every, 'QP_SOLVER_CHECK_EVERY'),
        restart_every=0 if no_restart else _default(restart_every, 'QP_SOLVER_RESTART_EVERY'),
        ordering=_default(ordering, 'QP_SOLVER_ORDERING'),
        seed=_default(seed, 'QP_SOLVER_SEED'),
        sigma_policy=SigmaPolicy(enabled=not fixed_sigma),
        restart_anchor=restart_anchor,
    )


def load_problem(path, split_ranges: bool = False, strict_quadobj: bool = False):
    """Parse and convert one QPS file; returns (QpProblem, ConversionReport)."""
    qps = read_qps_file(path, strict_quadobj=strict_quadobj)
    if not qps.name:
        qps.name = Path(path).stem.upper()
    problem, report = to_standard_form(qps, split_ranges=split_ranges)
    logger.info(f"Loaded {report.name}: m={report.m}, n={report.n} ({report.slacks} slacks)")
    return problem, report


def solve_problem_file(
    path,
    config: SolverConfig,
    log_path=None,
    split_ranges: bool = False,
    strict_quadobj: bool = False,
):
    """Load and solve one file; returns (SolveResult, QpProblem, ConversionReport)."""
    problem, report = load_problem(path, split_ranges=split_ranges, strict_quadobj=strict_quadobj)
    if log_path is None:
        return run_solver(problem, config), problem, report
    with IterationLogWriter(log_path) as log:
        result = run_solver(problem, config, log=log)
    return result, problem, report


def corpus_files(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.is_file() and p.suffix.lower() in QPS_SUFFIXES)


def find_corpus_file(directory, name: str) -> Optional[Path]:
    """File in ``directory`` whose upper-cased stem is ``name``."""
    for path in corpus_files(directory):
        if path.stem.upper() == name:
            return path
    return None


def _summary(result: SolveResult) -> RunSummary:
    return RunSummary(
        status=result.status,
        iterations=result.iterations,
        time_s=result.time_s,
        kkt_res=result.kkt_res,
        message=result.message,
    )


def _error_summary(message: str) -> RunSummary:
    return RunSummary(status=SolveStatus.ERROR, iterations=0, time_s=0.0, kkt_res=float('nan'), message=message)


def bench_problem(task) -> BenchRow:
    """Run the five benchmark configurations on one file (process-pool entry point)."""
    path, base, rho_padmm, rho_acc, split_ranges = task
    name = Path(path).stem.upper()
    try:
        problem, report = load_problem(path, split_ranges=split_ranges)
    except (SolverError, OSError) as exc:
        logger.error(f"Could not load {path}: {exc}", exc_info=True)
        return BenchRow(
            problem=name, m=0, n=0, check_every=base.check_every, max_iter=base.max_iter,
            runs={key: _error_summary(str(exc)) for key in BENCH_KEYS},
        )
    runs = {}
    for key, overrides in BENCH_CONFIGURATIONS.items():
        rho = rho_padmm if overrides['algorithm'] is Algorithm.PADMM else rho_acc
        config = SolverConfig.build(**{**base.model_dump(), **overrides, 'rho': rho})
        runs[key] = _summary(run_solver(problem, config))
    return BenchRow(
        problem=report.name or name, m=report.m, n=report.n,
        check_every=base.check_every, max_iter=base.max_iter, runs=runs,
    )


def summary_rows(rows: list[BenchRow]) -> list[list[str]]:
    """mean/median/min/max/stderr of iterations, time and KKT_res per configuration."""
    statistics_rows = []
    reducers = {
        'mean': statistics.fmean,
        'median': statistics.median,
        'min': min,
        'max': max,
        'stderr': lambda v: statistics.stdev(v) / np.sqrt(len(v)) if len(v) > 1 else 0.0,
    }
    for label, reduce in reducers.items():
        line = [label, '', '']
        for key in BENCH_KEYS:
            runs = [row.runs[key] for row in rows if key in row.runs and row.runs[key].status is not SolveStatus.ERROR]
            if not runs:
                line += ['', '', '', '']
                continue
            line += [
                f'{reduce([r.iterations for r in runs]):.1f}',
                f'{reduce([r.time_s for r in runs]):.3f}',
                f'{reduce([r.kkt_res for r in runs]):.3e}',
                '',
            ]
        statistics_rows.append(line)
    return statistics_rows


def mean_iteration_reduction(rows: list[BenchRow], key: str = 'b15', baseline: str = 'a') -> Optional[float]:
    """Average of 1 - iter(key)/iter(baseline) over problems where both configurations solved."""
    ratios = []
    for row in rows:
        ours, base = row.runs.get(key), row.runs.get(baseline)
        if ours and base and ours.status is SolveStatus.SOLVED and base.status is SolveStatus.SOLVED:
            ratios.append(1.0 - ours.iterations / base.iterations)
    return statistics.fmean(ratios) if ratios else None


def run_benchmark(
    directory,
    base: SolverConfig,
    out,
    workers: Optional[int] = None,
    split_ranges: bool = False,
    rho_padmm: Optional[float] = None,
    rho_acc: Optional[float] = None,
) -> list[BenchRow]:
    """Benchmark every QPS file in ``directory`` and write the table to ``out``."""
    workers = _default(workers, 'QP_BENCH_WORKERS')
    files = corpus_files(directory)
    tasks = [
        (str(path), base, _default(rho_padmm, 'QP_SOLVER_RHO_PADMM'), _default(rho_acc, 'QP_SOLVER_RHO_ACC'), split_ranges)
        for path in files
    ]
    logger.info(f"Benchmarking {len(tasks)} problems from {directory} with {workers} worker(s)")

    if workers > 1 and len(tasks) > 1:
        with Pool(processes=workers) as pool:
            rows = list(pool.imap(bench_problem, tasks))
    else:
        rows = [bench_problem(task) for task in tasks]

    with open(out, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(BenchRow.csv_header())
        for row in rows:
            writer.writerow(row.csv_row())
        if rows:
            writer.writerows(summary_rows(rows))

    reduction = mean_iteration_reduction(rows)
    if reduction is not None:
        logger.info(f"acc-pADMM (alpha=15) needs {100.0 * reduction:.1f}% fewer iterations than pADMM on average")
    return rows


@dataclass
class RateResult:
    records: list
    reference_objective: float
    slope: Optional[float]


def decay_slope(records, attr: str = 'seminorm_res') -> Optional[float]:
    """Least-squares slope of log(attr) against log(k) over the last decade of k."""
    if not records:
        return None
    last = records[-1].k
    points = [(r.k, getattr(r, attr)) for r in records if r.k >= last / 10.0 and getattr(r, attr) > 0.0]
    if len(points) < 2:
        return None
    ks, values = np.log([p[0] for p in points]), np.log([p[1] for p in points])
    return float(np.polyfit(ks, values, 1)[0])


def reference_objective_for(problem, base: SolverConfig) -> float:
    """Optimal value from a tight acc-pADMM solve with adaptive sigma."""
    config = SolverConfig.build(**{
        **base.model_dump(),
        'algorithm': Algorithm.ACC_PADMM, 'rho': 2.0, 'alpha': 2.0,
        'tol': min(base.tol, 1e-9), 'max_iter': max(base.max_iter, 50000),
        'sigma_policy': SigmaPolicy(), 'restart_every': 200,
    })
    result = run_solver(problem, config)
    if result.status is not SolveStatus.SOLVED:
        logger.warning(
            f"Reference solve of {problem.name} ended with {result.status.value} "
            f"(kkt_res={result.kkt_res:.3e}); using its objective anyway"
        )
    return primal_objective(problem, result.iterate.x)


def run_rate_experiment(
    path,
    alpha: float,
    out,
    sigma: float = 1.0,
    max_iter: Optional[int] = None,
    reference_objective: Optional[float] = None,
    split_ranges: bool = False,
    warm_start: Optional[DualIterate] = None,
) -> RateResult:
    """Fixed sigma, no restart, every iteration logged as (k, seminorm_res, kkt_res, |h|, relative |h|)."""
    problem, _ = load_problem(path, split_ranges=split_ranges)
    config = build_config(
        algorithm=Algorithm.ACC_PADMM.value, sigma=sigma, rho=2.0, alpha=alpha, tol=0.0,
        max_iter=max_iter, fixed_sigma=True, no_restart=True,
    )
    if reference_objective is None:
        reference_objective = reference_objective_for(problem, config)
    with IterationLogWriter(out, columns=RATE_COLUMNS) as log:
        result = run_solver(
            problem, config, warm_start=warm_start, log=log, reference_objective=reference_objective,
            check_each_iteration=True,
        )
    slope = decay_slope(result.history)
    if slope is not None:
        logger.info(f"{problem.name}: alpha={alpha} seminorm residual slope over the last decade {slope:.3f}")
    return RateResult(records=result.history, reference_objective=reference_objective, slope=slope)
