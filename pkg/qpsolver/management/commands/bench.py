"""Run the five benchmark configurations over a directory of QPS files."""

from django.core.management.base import BaseCommand, CommandError

from qpsolver.exceptions import ConfigError
from qpsolver.management.commands.solve import add_solver_arguments
from qpsolver.schemas import BENCH_KEYS, BenchRow
from qpsolver.services import build_config, run_benchmark


class Command(BaseCommand):
    help = (
        'Benchmark pADMM (a) and acc-pADMM with alpha 2, 15, 30, 45 (b2..b45) on every QPS file in a '
        f'directory. CSV columns: {", ".join(BenchRow.csv_header())}; '
        'followed by mean, median, min, max and stderr rows.'
    )

    def add_arguments(self, parser):
        parser.add_argument('directory', help='Directory of QPS files')
        parser.add_argument('--out', default='bench.csv', help='Output CSV (default bench.csv)')
        parser.add_argument('--workers', type=int, help='Worker processes (default QP_BENCH_WORKERS)')
        add_solver_arguments(parser)

    def handle(self, *args, **options):
        try:
            base = build_config(
                sigma=options['sigma'],
                tol=options['tol'],
                max_iter=options['max_iter'],
                check_every=options['check_every'],
                restart_every=options['restart_every'],
                seed=options['seed'],
                fixed_sigma=options['fixed_sigma'],
                no_restart=options['no_restart'],
            )
            rows = run_benchmark(
                options['directory'],
                base,
                options['out'],
                workers=options['workers'],
                split_ranges=options['split_ranges'],
                rho_acc=options['rho'],
            )
        except (ConfigError, OSError) as exc:
            raise CommandError(str(exc), returncode=2)

        for row in rows:
            counts = ' '.join(f"{key}={row.runs[key].iterations}/{row.runs[key].status.value}" for key in BENCH_KEYS)
            self.stdout.write(f"{row.problem} (m={row.m}, n={row.n}): {counts}")
        self.stdout.write(f"Wrote {len(rows)} rows to {options['out']}")
