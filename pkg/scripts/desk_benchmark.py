#!/usr/bin/env python
"""Desk-scale benchmark and rate check against the Maros-Meszaros corpus."""

import os
import sys
import django

# Set up Django environment
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
django.setup()

import tempfile
from django.conf import settings
from qpsolver.qp_dual import primal_objective, run_solver
from qpsolver.schemas import SolveStatus
from qpsolver.services import (
    BENCH_CONFIGURATIONS,
    DESK_PROBLEMS,
    REFERENCE_RESULTS,
    build_config,
    find_corpus_file,
    load_problem,
    run_rate_experiment,
)


def desk_sweep():
    """Run the five configurations on the desk subset and compare with the reference counts."""
    keys = list(BENCH_CONFIGURATIONS)
    print(f"{'problem':<10} {'m':>6} {'n':>6}  " + '  '.join(f'{key:>12}' for key in keys))
    print('-' * 80)

    failures = []
    for name in DESK_PROBLEMS:
        path = find_corpus_file(settings.QPS_CORPUS_DIR, name)
        if path is None:
            print(f"{name:<10} missing from {settings.QPS_CORPUS_DIR}")
            continue

        problem, report = load_problem(path)
        cells = []
        for key, overrides in BENCH_CONFIGURATIONS.items():
            config = build_config(algorithm=overrides['algorithm'].value, alpha=overrides['alpha'])
            result = run_solver(problem, config)
            cells.append(f"{result.iterations:>6}/{result.status.value[:3]}")
            if key == 'b2' and result.status is not SolveStatus.SOLVED:
                failures.append(name)
            if key == 'b2':
                objective = primal_objective(problem, result.iterate.x)

        reference = REFERENCE_RESULTS[name]
        print(f"{name:<10} {report.m:>6} {report.n:>6}  " + '  '.join(f'{cell:>12}' for cell in cells))
        print(f"{'':<10} reference m={reference[0]} n={reference[1]} counts={reference[2:]} objective={objective:.8e}")

    return failures


def rate_check():
    """Halpern slope on QSCAGR25 with fixed sigma and no restart."""
    path = find_corpus_file(settings.QPS_CORPUS_DIR, 'QSCAGR25')
    if path is None:
        print("QSCAGR25 missing, skipping rate check")
        return True

    with tempfile.TemporaryDirectory() as tmp:
        for alpha in (2.0, 30.0):
            result = run_rate_experiment(path, alpha=alpha, out=os.path.join(tmp, f'rate_{alpha:g}.csv'), max_iter=5000)
            print(f"alpha={alpha:g}: {len(result.records)} iterations, slope {result.slope}")
            if alpha == 2.0 and (result.slope is None or result.slope > -0.8):
                return False
    return True


if __name__ == '__main__':
    print("=" * 80)
    print("DESK BENCHMARK")
    print("=" * 80)
    print()

    if not settings.QPS_CORPUS_DIR:
        print("✗ Set QPS_CORPUS_DIR to a directory of QPS files")
        sys.exit(2)

    try:
        failures = desk_sweep()
        print()
        slope_ok = rate_check()

        if not failures and slope_ok:
            print("✓ Desk benchmark passed!")
        else:
            print(f"✗ Unsolved with acc-pADMM: {failures}; rate slope ok: {slope_ok}")
            sys.exit(1)

    except Exception as e:
        print(f"✗ Benchmark failed with error: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)
