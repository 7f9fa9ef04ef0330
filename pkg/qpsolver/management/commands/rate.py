"""Fixed-sigma, no-restart run logging every iteration for rate analysis."""

from django.core.management.base import BaseCommand, CommandError

from qpsolver.exceptions import ConfigError, DimensionMismatch, InfeasibleBounds, ParseError
from qpsolver.services import RATE_COLUMNS, run_rate_experiment


class Command(BaseCommand):
    help = (
        'Run acc-pADMM with fixed sigma and no restart, logging every iteration. '
        f'CSV columns: {", ".join(RATE_COLUMNS)}. abs_gap is |h| against the reference objective, '
        'rel_gap is |h| / (1 + |reference objective|).'
    )

    def add_arguments(self, parser):
        parser.add_argument('path', help='QPS file')
        parser.add_argument('--alpha', type=float, default=2.0)
        parser.add_argument('--sigma', type=float, default=1.0)
        parser.add_argument('--max-iter', type=int, help='Iteration limit (default 10000)')
        parser.add_argument('--out', default='rate.csv', help='Output CSV (default rate.csv)')
        parser.add_argument(
            '--reference-objective', type=float,
            help='Optimal objective value; computed by a tight solve when omitted',
        )
        parser.add_argument('--split-ranges', action='store_true')

    def handle(self, *args, **options):
        try:
            result = run_rate_experiment(
                options['path'],
                alpha=options['alpha'],
                out=options['out'],
                sigma=options['sigma'],
                max_iter=options['max_iter'],
                reference_objective=options['reference_objective'],
                split_ranges=options['split_ranges'],
            )
        except (ParseError, InfeasibleBounds, DimensionMismatch, ConfigError, OSError) as exc:
            raise CommandError(str(exc), returncode=2)

        self.stdout.write(f"iterations: {len(result.records)}")
        self.stdout.write(f"reference_objective: {result.reference_objective:.10e}")
        if result.slope is not None:
            self.stdout.write(f"slope (last decade, log residual vs log k): {result.slope:.3f}")
        self.stdout.write(f"Wrote {options['out']}")
