"""Solve one QPS file with pADMM or acc-pADMM."""

import logging

from django.core.management.base import BaseCommand, CommandError

from qpsolver.exceptions import ConfigError, DimensionMismatch, InfeasibleBounds, ParseError
from qpsolver.qp_dual import LOG_COLUMNS, dual_objective, primal_objective
from qpsolver.schemas import SolveStatus
from qpsolver.services import build_config, solve_problem_file

logger = logging.getLogger(__name__)

ALGORITHMS = {'padmm': 'padmm', 'acc': 'acc_padmm'}


def add_solver_arguments(parser):
    """Flags shared by solve and bench."""
    parser.add_argument('--sigma', type=float, help='Initial penalty parameter')
    parser.add_argument('--rho', type=float, help='Relaxation factor of acc-pADMM, or of pADMM for solve --algo padmm')
    parser.add_argument('--fixed-sigma', action='store_true', help='Disable sigma adaptation')
    parser.add_argument('--no-restart', action='store_true', help='Disable restarts of acc-pADMM')
    parser.add_argument('--tol', type=float, help='Stop when KKT_res <= tol (default 1e-5)')
    parser.add_argument('--max-iter', type=int, help='Iteration limit (default 10000)')
    parser.add_argument('--check-every', type=int, help='KKT_res check period (default 50)')
    parser.add_argument('--restart-every', type=int, help='Restart period of acc-pADMM (default 200)')
    parser.add_argument('--seed', type=int, help='Seed for diagnostic power iterations')
    parser.add_argument('--split-ranges', action='store_true', help='Convert ranged rows into two inequality rows')


class Command(BaseCommand):
    help = (
        'Solve a QPS file. Prints status, iterations, KKT_res and objective. '
        f'--log writes one CSV row per KKT check with columns: {", ".join(LOG_COLUMNS)}. '
        'Exit codes: 0 Solved, 1 MaxIter, 2 input error, 3 numerical error.'
    )

    def add_arguments(self, parser):
        parser.add_argument('path', help='QPS file')
        parser.add_argument('--algo', choices=sorted(ALGORITHMS), default='acc')
        parser.add_argument('--alpha', type=float, help='Acceleration parameter, >= 2 (default 2)')
        parser.add_argument('--log', help='CSV file receiving the iteration records')
        parser.add_argument('--strict-quadobj', action='store_true', help='Reject QUADOBJ entries above the diagonal')
        add_solver_arguments(parser)

    def handle(self, *args, **options):
        try:
            config = build_config(
                algorithm=ALGORITHMS[options['algo']],
                sigma=options['sigma'],
                rho=options['rho'],
                alpha=options['alpha'],
                tol=options['tol'],
                max_iter=options['max_iter'],
                check_every=options['check_every'],
                restart_every=options['restart_every'],
                seed=options['seed'],
                fixed_sigma=options['fixed_sigma'],
                no_restart=options['no_restart'],
            )
            result, problem, report = solve_problem_file(
                options['path'],
                config,
                log_path=options['log'],
                split_ranges=options['split_ranges'],
                strict_quadobj=options['strict_quadobj'],
            )
        except (ParseError, InfeasibleBounds, DimensionMismatch, ConfigError, OSError) as exc:
            raise CommandError(str(exc), returncode=2)

        self.stdout.write(f"problem: {report.name} (m={report.m}, n={report.n})")
        self.stdout.write(f"status: {result.status.value}")
        self.stdout.write(f"iterations: {result.iterations}")
        self.stdout.write(f"kkt_res: {result.kkt_res:.3e}")
        self.stdout.write(f"objective: {primal_objective(problem, result.iterate.x):.10e}")
        self.stdout.write(f"dual_objective: {dual_objective(problem, result.iterate):.10e}")
        self.stdout.write(f"duality_gap: {result.duality_gap:.3e}")
        self.stdout.write(f"time_s: {result.time_s:.3f}")

        if result.status is SolveStatus.ERROR:
            raise CommandError(result.message, returncode=3)
        if result.status is SolveStatus.MAX_ITER:
            raise CommandError(f"Reached max_iter={config.max_iter} without KKT_res <= {config.tol}", returncode=1)
