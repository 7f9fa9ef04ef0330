"""Tests for the QP dual substeps, residuals, sigma adaptation and the solve loop."""

import csv
import itertools
import os
import tempfile
from unittest import mock

import numpy as np
import scipy.sparse as sp
from django.test import SimpleTestCase

from qpsolver import qp_dual
from qpsolver.exceptions import DimensionMismatch, InfeasibleBounds
from qpsolver.linalg import factorize_spd, project_box
from qpsolver.padmm import PadmmIterate, kkt_residual, padmm_iterate
from qpsolver.qp_dual import (
    LOG_COLUMNS,
    DualIterate,
    IterationLogWriter,
    QpDualProblem,
    QpDualWorkspace,
    QpProblem,
    adapt_sigma,
    dual_objective,
    duality_gap,
    primal_objective,
    relative_kkt,
    run_solver,
    sgs_z_update,
    solve_y,
    solve_z1,
    solve_z2,
)
from qpsolver.schemas import Algorithm, IterationRecord, SigmaPolicy, SolveStatus, SolverConfig
from qpsolver.splitting import dppm_step

INF = np.inf


def make_problem(Q, A, b, c, lower, upper, name=''):
    return QpProblem(
        Q=sp.csc_matrix(np.atleast_2d(np.asarray(Q, dtype=float))),
        A=sp.csc_matrix(np.asarray(A, dtype=float).reshape(len(np.atleast_1d(b)), -1)),
        b=b,
        c=c,
        lower=lower,
        upper=upper,
        name=name,
    )


def tiny_problem():
    """min 1/2 (x1^2 + x2^2)  s.t.  x1 + x2 = 1, free bounds."""
    return make_problem(np.eye(2), [[1.0, 1.0]], [1.0], [0.0, 0.0], [-INF, -INF], [INF, INF], 'TINY')


def random_qp(rng, n, m, box=True):
    G = rng.standard_normal((n, max(1, n // 2)))
    A = rng.standard_normal((m, n))
    if box:
        lower = rng.standard_normal(n) - 1.0
        upper = lower + rng.random(n) * 2.0 + 0.5
        lower[rng.random(n) < 0.2] = -INF
        upper[rng.random(n) < 0.2] = INF
    else:
        lower = upper = rng.standard_normal(n)
    return QpProblem(
        Q=sp.csc_matrix(G @ G.T),
        A=sp.csc_matrix(A),
        b=rng.standard_normal(m),
        c=rng.standard_normal(n),
        lower=lower,
        upper=upper,
    )


def feasible_qp(rng, n, m, unbounded_column=None):
    """Strictly convex QP on [-1, 1]^n with an interior feasible point."""
    G = rng.standard_normal((n, n))
    A = rng.standard_normal((m, n))
    upper = np.ones(n)
    if unbounded_column is not None:
        upper[unbounded_column] = INF
    return QpProblem(
        Q=sp.csc_matrix(G @ G.T + 0.1 * np.eye(n)),
        A=sp.csc_matrix(A),
        b=A @ rng.uniform(-0.5, 0.5, n),
        c=rng.standard_normal(n) * 2,
        lower=-np.ones(n),
        upper=upper,
    )


def random_state(rng, problem, scale=1.0):
    n, m = problem.n, problem.m
    return DualIterate.from_parts(
        problem,
        rng.standard_normal(n) * scale,
        rng.standard_normal(n) * scale,
        rng.standard_normal(m) * scale,
        rng.standard_normal(n) * scale,
    )


def record(r_p, r_d, sigma, k=50):
    return IterationRecord(
        k=k, kkt_res=max(r_p, r_d), r_p=r_p, r_d=r_d, r_qxy=0.0, r_comp=0.0,
        sigma=sigma, obj=0.0, seminorm_res=0.0, time_s=0.0,
    )


def active_set_optimum(problem):
    """Brute-force optimum of a small strictly convex QP over all 3^n bound patterns."""
    Q, A = problem.Q.toarray(), problem.A.toarray()
    n, m = problem.n, problem.m
    best_x, best_obj = None, INF
    for pattern in itertools.product((0, 1, 2), repeat=n):
        x = np.zeros(n)
        fixed = [j for j in range(n) if pattern[j] != 2]
        free = [j for j in range(n) if pattern[j] == 2]
        feasible = True
        for j in fixed:
            x[j] = problem.lower[j] if pattern[j] == 0 else problem.upper[j]
            if not np.isfinite(x[j]):
                feasible = False
        if not feasible:
            continue
        if free:
            K = np.block([[Q[np.ix_(free, free)], A[:, free].T], [A[:, free], np.zeros((m, m))]])
            rhs = np.concatenate([
                -problem.c[free] - Q[np.ix_(free, fixed)] @ x[fixed],
                problem.b - A[:, fixed] @ x[fixed],
            ])
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            if np.linalg.norm(K @ sol - rhs) > 1e-9 * (1 + np.linalg.norm(rhs)):
                continue
            x[free] = sol[:len(free)]
        if np.linalg.norm(A @ x - problem.b) > 1e-9 * (1 + np.linalg.norm(problem.b)):
            continue
        if np.any(x < problem.lower - 1e-9) or np.any(x > problem.upper + 1e-9):
            continue
        obj = primal_objective(problem, x)
        if obj < best_obj:
            best_x, best_obj = x, obj
    return best_x, best_obj


class QpProblemTest(SimpleTestCase):
    """Standard-form data validation."""

    def test_q_is_symmetrized(self):
        """Q is replaced by (Q + Q')/2."""
        problem = make_problem([[1.0, 2.0], [0.0, 1.0]], [[1.0, 1.0]], [1.0], [0.0, 0.0], [0, 0], [1, 1])
        np.testing.assert_array_equal(problem.Q.toarray(), [[1.0, 1.0], [1.0, 1.0]])
        self.assertEqual((problem.m, problem.n), (1, 2))

    def test_shape_errors(self):
        """Mismatched operands raise DimensionMismatch."""
        with self.assertRaises(DimensionMismatch):
            QpProblem(Q=sp.csc_matrix((2, 3)), A=sp.csc_matrix((1, 3)), b=[0.0], c=np.zeros(3),
                      lower=np.zeros(3), upper=np.ones(3))
        with self.assertRaises(DimensionMismatch):
            QpProblem(Q=sp.identity(2), A=sp.csc_matrix((1, 3)), b=[0.0], c=np.zeros(2),
                      lower=np.zeros(2), upper=np.ones(2))
        with self.assertRaises(DimensionMismatch):
            QpProblem(Q=sp.identity(2), A=sp.csc_matrix((1, 2)), b=[0.0, 1.0], c=np.zeros(2),
                      lower=np.zeros(2), upper=np.ones(2))

    def test_infeasible_bounds(self):
        """lower > upper names the column."""
        with self.assertRaises(InfeasibleBounds) as ctx:
            make_problem(np.eye(2), [[1.0, 1.0]], [1.0], [0.0, 0.0], [0.0, 2.0], [1.0, 1.0])
        self.assertEqual(ctx.exception.index, 1)


class SubstepTest(SimpleTestCase):
    """Closed-form z2, z1 and y updates."""

    def test_z2_scalar(self):
        """A=[2], b=3, sigma=2, z1=1, c=1/2, x=1 gives z2=-1/8."""
        problem = make_problem([[0.0]], [[2.0]], [3.0], [0.5], [-INF], [INF])
        state = DualIterate.from_parts(problem, [0.0], [1.0], [0.0], [1.0])
        factor = factorize_spd(problem.A @ problem.A.T)
        np.testing.assert_allclose(solve_z2(problem, state, factor, 2.0), [-0.125], rtol=1e-15)

    def test_z2_zero_with_identity(self):
        """A=I, b=0 and a zero iterate give z2=0."""
        problem = make_problem(np.eye(3), np.eye(3), np.zeros(3), np.zeros(3), -np.ones(3), np.ones(3))
        factor = factorize_spd(problem.A @ problem.A.T)
        np.testing.assert_array_equal(solve_z2(problem, DualIterate.zeros(3, 3), factor, 1.0), np.zeros(3))

    def test_z2_is_stationary(self):
        """The z2 gradient of the augmented Lagrangian vanishes."""
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            problem = random_qp(rng, n, int(rng.integers(1, n + 1)))
            state = random_state(rng, problem)
            sigma = float(rng.uniform(0.1, 10.0))
            z2 = solve_z2(problem, state, factorize_spd(problem.A @ problem.A.T), sigma)
            residual = -problem.b + sigma * (problem.A @ (-state.qy + state.z1 + problem.A.T @ z2 - problem.c + state.x / sigma))
            self.assertLess(np.linalg.norm(residual), 1e-9 * (1 + np.linalg.norm(problem.b) + sigma * np.abs(z2).max()))

    def test_z1_scalar(self):
        """C=[0,1], sigma=1, r=2 gives z1=-1."""
        problem = QpProblem(Q=sp.csc_matrix((1, 1)), A=sp.csc_matrix((0, 1)), b=np.zeros(0), c=[0.0],
                            lower=[0.0], upper=[1.0])
        state = DualIterate.from_parts(problem, [0.0], [0.0], np.zeros(0), [2.0])
        np.testing.assert_allclose(solve_z1(problem, state, 1.0), [-1.0], atol=1e-15)

    def test_z1_beats_grid(self):
        """delta_C^*(-z1) + sigma/2 (z1 + r)^2 is minimal at the closed form on a 1-D grid."""
        problem = QpProblem(Q=sp.csc_matrix((1, 1)), A=sp.csc_matrix((0, 1)), b=np.zeros(0), c=[0.0],
                            lower=[-0.5], upper=[2.0])
        sigma = 1.7
        for r in (-3.0, -0.2, 0.0, 0.7, 4.0):
            state = DualIterate.from_parts(problem, [0.0], [0.0], np.zeros(0), [sigma * r])
            z1 = float(solve_z1(problem, state, sigma)[0])

            def value(t):
                support = max(-t * -0.5, -t * 2.0)
                return support + 0.5 * sigma * (t + r) ** 2

            grid = np.linspace(-10.0, 10.0, 20001)
            self.assertLessEqual(value(z1), min(value(t) for t in grid) + 1e-12)

    def test_z1_subgradient_inequality(self):
        """g = sigma (z1 + r) satisfies g = Pi_C(g - z1)."""
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(1, 10))
            problem = random_qp(rng, n, 1)
            state = random_state(rng, problem, scale=3.0)
            sigma = float(rng.uniform(0.1, 5.0))
            z1 = solve_z1(problem, state, sigma)
            r = -state.qy + problem.A.T @ state.z2 - problem.c + state.x / sigma
            g = sigma * (z1 + r)
            np.testing.assert_allclose(g, project_box(g - z1, problem.lower, problem.upper), atol=1e-9 * (1 + np.abs(g).max()))

    def test_y_surrogate(self):
        """Q=diag(2,0), z1=(3,3) gives w=(1,3), Qw=(2,0)."""
        problem = QpProblem(Q=sp.diags([2.0, 0.0]), A=sp.csc_matrix((0, 2)), b=np.zeros(0), c=np.zeros(2),
                            lower=np.full(2, -INF), upper=np.full(2, INF))
        factor = factorize_spd(sp.identity(2) + problem.Q)
        w, qy = solve_y(problem, np.array([3.0, 3.0]), np.zeros(0), np.zeros(2), factor, 1.0)
        np.testing.assert_allclose(w, [1.0, 3.0], rtol=1e-15)
        np.testing.assert_allclose(qy, [2.0, 0.0], rtol=1e-15)
        self.assertAlmostEqual(float(w @ qy), 2.0, places=15)

    def test_y_is_stationary(self):
        """(I + sigma Q) w equals the right-hand side."""
        rng = np.random.default_rng(2)
        problem = random_qp(rng, 6, 3)
        state = random_state(rng, problem)
        sigma = 0.8
        factor = factorize_spd(sp.identity(6) + sigma * problem.Q)
        w, qy = solve_y(problem, state.z1, state.z2, state.x, factor, sigma)
        rhs = sigma * (state.z1 + problem.A.T @ state.z2 - problem.c) + state.x
        np.testing.assert_allclose(w + sigma * qy, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


class SgsTest(SimpleTestCase):
    """The three-sweep z-update is a proximal joint minimization."""

    def sgs_matrix(self, problem, sigma):
        A = problem.A.toarray()
        return sigma * A.T @ np.linalg.solve(A @ A.T, A)

    def test_matches_joint_solve_for_fixed_variables(self):
        """With l = u the joint z-problem is linear and solved densely."""
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(1, 13))
            m = int(rng.integers(1, min(6, n) + 1))
            problem = random_qp(rng, n, m, box=False)
            state = random_state(rng, problem)
            sigma = float(rng.uniform(0.2, 5.0))
            A = problem.A.toarray()
            S = self.sgs_matrix(problem, sigma)
            d = -state.qy - problem.c + state.x / sigma
            H = sigma * np.block([[np.eye(n), A.T], [A, A @ A.T]])
            H[:n, :n] += S
            rhs = np.concatenate([problem.lower, problem.b]) - sigma * np.concatenate([d, A @ d])
            rhs[:n] += S @ state.z1
            expected = np.linalg.solve(H, rhs)
            z1, z2 = sgs_z_update(problem, state, factorize_spd(A @ A.T), sigma)
            error = np.linalg.norm(np.concatenate([z1, z2]) - expected)
            self.assertLessEqual(error, 1e-9 * np.linalg.norm(expected))

    def test_optimality_for_general_boxes(self):
        """Joint optimality conditions hold with the sGS proximal term."""
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(1, 13))
            m = int(rng.integers(1, min(6, n) + 1))
            problem = random_qp(rng, n, m)
            state = random_state(rng, problem)
            sigma = float(rng.uniform(0.2, 5.0))
            A = problem.A.toarray()
            z1, z2 = sgs_z_update(problem, state, factorize_spd(A @ A.T), sigma)
            d = -state.qy - problem.c + state.x / sigma
            coupling = z1 + A.T @ z2 + d
            g = sigma * coupling + self.sgs_matrix(problem, sigma) @ (z1 - state.z1)
            scale = 1e-7 * (1 + np.abs(g).max() + np.abs(z1).max())
            np.testing.assert_allclose(g, project_box(g - z1, problem.lower, problem.upper), atol=scale)
            np.testing.assert_allclose(A @ coupling, problem.b / sigma, atol=scale)

    def test_aat_factored_once(self):
        """Sweeps reuse the AA' factor; I + sigma Q is refactored only when sigma changes."""
        rng = np.random.default_rng(5)
        problem = random_qp(rng, 5, 2)
        with mock.patch.object(qp_dual, 'factorize_spd', wraps=factorize_spd) as spy:
            workspace = QpDualWorkspace(problem, 1.0)
            state = random_state(rng, problem)
            for _ in range(5):
                state = workspace.resolve(state)
            self.assertEqual(spy.call_count, 2)
            workspace.set_sigma(1.0)
            self.assertEqual(spy.call_count, 2)
            workspace.set_sigma(3.0)
            self.assertEqual(spy.call_count, 3)
        self.assertEqual(workspace.sigma, 3.0)


class RelativeKktTest(SimpleTestCase):
    """Relative residuals."""

    def test_hand_computed_residuals(self):
        """r_p=1/2, r_d=2, r_qxy=0, r_comp=1/(3+sqrt 2)."""
        problem = make_problem(np.diag([1.0, 0.0]), [[1.0, 1.0]], [1.0], [1.0, 0.0], [0.0, 0.0], [INF, INF])
        state = DualIterate.from_parts(problem, [1.0, 0.0], [0.0, 2.0], [2.0], [1.0, 1.0])
        kkt = relative_kkt(problem, state)
        self.assertAlmostEqual(kkt.r_p, 0.5, places=15)
        self.assertAlmostEqual(kkt.r_d, 2.0, places=15)
        self.assertEqual(kkt.r_qxy, 0.0)
        self.assertAlmostEqual(kkt.r_comp, 1.0 / (3.0 + np.sqrt(2.0)), places=15)
        self.assertEqual(kkt.kkt_res, kkt.r_d)

    def test_composite_blocks_match_numerators(self):
        """The two-block composite residual carries the same quantities as the relative residuals."""
        rng = np.random.default_rng(6)
        problem = random_qp(rng, 6, 3)
        state = random_state(rng, problem)
        dual = QpDualProblem(problem, 1.0)
        w = PadmmIterate(y=state.w, z=np.concatenate([state.z1, state.z2]), x=state.x)
        residual = kkt_residual(w, dual)
        qx = problem.Q @ state.x
        comp = state.x - project_box(state.x - state.z1, problem.lower, problem.upper)
        self.assertAlmostEqual(residual.primal_y, np.linalg.norm(state.qy - qx), places=10)
        self.assertAlmostEqual(residual.primal_z, np.hypot(np.linalg.norm(comp), np.linalg.norm(problem.A @ state.x - problem.b)), places=10)
        self.assertAlmostEqual(residual.feasibility, np.linalg.norm(qp_dual.dual_feasibility(problem, state)), places=10)


class ObjectiveTest(SimpleTestCase):
    """Primal and dual objective values."""

    def test_equal_at_the_optimum(self):
        """The n=2 equality example has primal and dual value 1/4 at its KKT point."""
        problem = tiny_problem()
        state = DualIterate.from_parts(problem, [0.5, 0.5], [0.0, 0.0], [0.5], [0.5, 0.5])
        self.assertEqual(primal_objective(problem, state.x), 0.25)
        self.assertEqual(dual_objective(problem, state), 0.25)
        self.assertEqual(duality_gap(problem, state), 0.0)

    def test_weak_duality(self):
        """A dual-feasible point never beats a primal-feasible one."""
        problem = make_problem(np.eye(2), [[1.0, 1.0]], [1.0], [0.0, 0.0], [0.0, 0.0], [INF, INF])
        state = DualIterate.from_parts(problem, [0.2, 0.1], [0.1, 0.0], [0.1], [0.5, 0.5])
        np.testing.assert_allclose(qp_dual.dual_feasibility(problem, state), 0.0, atol=1e-15)
        self.assertAlmostEqual(dual_objective(problem, state), 0.075, places=15)
        self.assertLessEqual(dual_objective(problem, state), primal_objective(problem, state.x))
        self.assertGreater(duality_gap(problem, state), 0.0)

    def test_unbounded_support_gives_infinite_gap(self):
        """z1 pushing against an infinite bound makes the dual value -inf."""
        problem = make_problem(np.eye(2), [[1.0, 1.0]], [1.0], [0.0, 0.0], [0.0, 0.0], [INF, INF])
        state = DualIterate.from_parts(problem, [0.0, 0.0], [-1.0, 0.0], [0.0], [0.5, 0.5])
        self.assertEqual(dual_objective(problem, state), -INF)
        self.assertEqual(duality_gap(problem, state), INF)


class AdaptSigmaTest(SimpleTestCase):
    """Residual balancing."""

    def test_balanced_keeps_sigma(self):
        """Comparable residuals leave sigma alone."""
        self.assertEqual(adapt_sigma([record(1.0, 1.0, 1.0)] * 2, 1.0), (1.0, False))

    def test_primal_dominant_increases(self):
        """r_p / r_d = 100 with factor 2 doubles sigma."""
        policy = SigmaPolicy(factor=2.0)
        self.assertEqual(adapt_sigma([record(1.0, 0.01, 1.0)] * 2, 1.0, policy), (2.0, True))

    def test_default_factor(self):
        """r_p / r_d = 6 multiplies sigma by 1.5; 4 is inside the band."""
        self.assertEqual(adapt_sigma([record(0.6, 0.1, 2.0)] * 2, 2.0), (3.0, True))
        self.assertEqual(adapt_sigma([record(0.4, 0.1, 2.0)] * 2, 2.0), (2.0, False))

    def test_dual_dominant_decreases(self):
        """r_p / r_d = 1/100 divides sigma by the factor."""
        sigma, changed = adapt_sigma([record(0.01, 1.0, 3.0)] * 2, 3.0)
        self.assertTrue(changed)
        self.assertAlmostEqual(sigma, 2.0, places=15)

    def test_clamped(self):
        """sigma never leaves [sigma_min, sigma_max]."""
        self.assertEqual(adapt_sigma([record(1.0, 0.01, 1e8)] * 2, 1e8), (1e8, False))
        policy = SigmaPolicy(sigma_min=0.5)
        self.assertEqual(adapt_sigma([record(0.01, 1.0, 0.6)] * 2, 0.6, policy), (0.5, True))

    def test_cooldown(self):
        """A recent change blocks another one."""
        history = [record(1.0, 0.01, 0.5), record(1.0, 0.01, 1.0)]
        self.assertEqual(adapt_sigma(history, 1.0), (1.0, False))

    def test_disabled_and_empty(self):
        """Disabled policy or no history leaves sigma unchanged."""
        self.assertEqual(adapt_sigma([record(1.0, 0.01, 1.0)] * 2, 1.0, SigmaPolicy(enabled=False)), (1.0, False))
        self.assertEqual(adapt_sigma([], 1.0), (1.0, False))


class RunSolverTest(SimpleTestCase):
    """The solve loop."""

    def test_tiny_problem(self):
        """x = (1/2, 1/2), objective 1/4, found at the first check."""
        for algorithm, rho in ((Algorithm.ACC_PADMM, 2.0), (Algorithm.PADMM, 1.9)):
            config = SolverConfig(algorithm=algorithm, rho=rho, tol=1e-10, check_every=10)
            result = run_solver(tiny_problem(), config)
            self.assertIs(result.status, SolveStatus.SOLVED)
            self.assertEqual(result.iterations, 10)
            np.testing.assert_allclose(result.iterate.x, [0.5, 0.5], atol=1e-12)
            self.assertAlmostEqual(primal_objective(tiny_problem(), result.iterate.x), 0.25, places=12)
            self.assertLess(result.duality_gap, 1e-12)

    def test_seed_drives_norm_estimate(self):
        """config.seed seeds the power iteration behind the ||A|| diagnostic."""
        config = SolverConfig(tol=1e-10, check_every=10, seed=7)
        with mock.patch.object(qp_dual, 'estimate_operator_norm', wraps=qp_dual.estimate_operator_norm) as spy:
            result = run_solver(tiny_problem(), config)
        spy.assert_called_once()
        self.assertEqual(spy.call_args.kwargs['seed'], 7)
        self.assertAlmostEqual(result.norm_a, np.sqrt(2.0), places=10)

    def test_matches_active_set_optimum(self):
        """The n=2 equality example and nine box QPs up to n=6 agree with brute-force enumeration."""
        rng = np.random.default_rng(7)
        shapes = ((3, 1), (3, 2), (4, 1), (4, 2), (5, 1), (5, 2), (6, 1), (6, 2), (6, 2))
        problems = [tiny_problem()] + [
            feasible_qp(rng, n, m, unbounded_column=case % 3 if case % 2 else None)
            for case, (n, m) in enumerate(shapes)
        ]
        config = SolverConfig(tol=1e-9, check_every=10, max_iter=50000)
        sigma_moved = False
        for case, problem in enumerate(problems):
            with self.subTest(case=case, n=problem.n, m=problem.m):
                x_star, obj_star = active_set_optimum(problem)
                result = run_solver(problem, config)
                self.assertIs(result.status, SolveStatus.SOLVED)
                np.testing.assert_allclose(result.iterate.x, x_star, atol=1e-5)
                self.assertAlmostEqual(
                    primal_objective(problem, result.iterate.x), obj_star, delta=1e-6 * (1 + abs(obj_star)),
                )
                sigma_moved |= any(r.sigma != config.sigma for r in result.history)
        self.assertTrue(sigma_moved)

    def test_redundant_rows(self):
        """Duplicated equality rows are handled by the regularized AA' factor."""
        problem = make_problem(np.eye(2), [[1.0, 1.0], [1.0, 1.0]], [1.0, 1.0], [0.0, 0.0], [-INF, -INF], [INF, INF])
        result = run_solver(problem, SolverConfig(tol=1e-8, check_every=10))
        self.assertIs(result.status, SolveStatus.SOLVED)
        np.testing.assert_allclose(result.iterate.x, [0.5, 0.5], atol=1e-6)

    def test_indefinite_q_reports_error(self):
        """A non-PSD Q ends with status Error and no exception."""
        problem = make_problem(np.diag([-3.0, 1.0]), [[1.0, 1.0]], [1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0])
        result = run_solver(problem, SolverConfig())
        self.assertIs(result.status, SolveStatus.ERROR)
        self.assertIn('pivot', result.message)
        self.assertEqual(result.iterations, 0)
        self.assertTrue(np.isnan(result.kkt_res))

    def test_max_iter(self):
        """tol=0 runs to max_iter and checks at the last iteration."""
        problem = random_qp(np.random.default_rng(8), 4, 2)
        result = run_solver(problem, SolverConfig(tol=0.0, max_iter=25, check_every=10))
        self.assertIs(result.status, SolveStatus.MAX_ITER)
        self.assertEqual(result.iterations, 25)
        self.assertEqual([r.k for r in result.history], [10, 20, 25])

    def test_warm_start(self):
        """Restarting from a solution stops no later than the cold run."""
        rng = np.random.default_rng(9)
        problem = feasible_qp(rng, 5, 2)
        config = SolverConfig(tol=1e-6, check_every=10, max_iter=50000)
        cold = run_solver(problem, config)
        self.assertIs(cold.status, SolveStatus.SOLVED)
        warm = run_solver(problem, config, warm_start=cold.iterate)
        self.assertIs(warm.status, SolveStatus.SOLVED)
        self.assertLessEqual(warm.iterations, cold.iterations)

    def test_log_writer(self):
        """One CSV row per check, header first; abs_gap is filled with a reference."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'log.csv')
            problem = feasible_qp(np.random.default_rng(14), 4, 2)
            with IterationLogWriter(path) as log:
                result = run_solver(problem, SolverConfig(tol=0.0, max_iter=30, check_every=10), log=log)
            with open(path, newline='') as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], list(LOG_COLUMNS))
            self.assertEqual(len(rows) - 1, len(result.history))
            self.assertEqual([int(r[0]) for r in rows[1:]], [10, 20, 30])

            gap_path = os.path.join(tmp, 'gap.csv')
            with IterationLogWriter(gap_path, columns=('k', 'abs_gap')) as log:
                run_solver(tiny_problem(), SolverConfig(tol=0.0, max_iter=10, check_every=10), log=log,
                           reference_objective=0.25)
            with open(gap_path, newline='') as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], ['k', 'abs_gap'])
            self.assertLess(float(rows[1][1]), 1e-12)


class QpDualProblemTest(SimpleTestCase):
    """The QP dual through the generic two-block interface."""

    def test_generic_iteration_matches_workspace(self):
        """padmm_iterate on QpDualProblem follows the packed workspace oracle for 200 steps."""
        rng = np.random.default_rng(10)
        for case in range(10):
            n = int(rng.integers(2, 9))
            problem = random_qp(rng, n, int(rng.integers(1, n + 1)))
            sigma = float(rng.uniform(0.5, 2.0))
            dual = QpDualProblem(problem, sigma)
            oracle = QpDualWorkspace(problem, sigma).oracle()
            state = random_state(rng, problem)
            w = PadmmIterate(y=state.w, z=np.concatenate([state.z1, state.z2]), x=state.x)
            v = state.pack()
            for _ in range(200):
                w, _ = padmm_iterate(w, dual, sigma, 1.9)
                v = dppm_step(v, 1.9, oracle)
            packed = DualIterate.unpack(v, problem.n, problem.m)
            scale = 1e-10 * (1 + np.abs(v).max())
            with self.subTest(case=case):
                np.testing.assert_allclose(w.y, packed.w, atol=scale)
                np.testing.assert_allclose(w.z, np.concatenate([packed.z1, packed.z2]), atol=scale)
                np.testing.assert_allclose(w.x, packed.x, atol=scale)

    def test_run_solver_padmm_matches_plain_loop(self):
        """Fixed sigma and tol=0: the solve loop reports the same w_bar as a hand-written pADMM loop."""
        rng = np.random.default_rng(15)
        for _ in range(3):
            problem = feasible_qp(rng, 5, 2)
            config = SolverConfig(
                algorithm=Algorithm.PADMM, rho=1.9, sigma=1.3, tol=0.0, max_iter=200, check_every=200,
                sigma_policy=SigmaPolicy(enabled=False),
            )
            result = run_solver(problem, config)
            oracle = QpDualWorkspace(problem, 1.3).oracle()
            v = DualIterate.zeros(problem.n, problem.m).pack()
            for _ in range(200):
                w_bar = oracle(v)
                v = (1.0 - 1.9) * v + 1.9 * w_bar
            self.assertIs(result.status, SolveStatus.MAX_ITER)
            self.assertEqual(result.iterations, 200)
            np.testing.assert_allclose(result.iterate.pack(), w_bar, atol=1e-12 * (1 + np.abs(w_bar).max()))

    def test_seminorms_agree(self):
        """The generic M-seminorm equals the workspace formula."""
        rng = np.random.default_rng(11)
        problem = random_qp(rng, 5, 2)
        dual = QpDualProblem(problem, 0.7)
        state = random_state(rng, problem)
        w = PadmmIterate(y=state.w, z=np.concatenate([state.z1, state.z2]), x=state.x)
        self.assertAlmostEqual(dual.seminorm(w, 0.7), dual.workspace.seminorm(state), places=10)

    def test_structural_assumptions(self):
        """T2 is PSD, I + sigma Q factors without shifts and B2 is injective."""
        rng = np.random.default_rng(12)
        problem = random_qp(rng, 6, 3)
        dual = QpDualProblem(problem, 2.0)
        self.assertEqual(dual.workspace.factor_iq.regularized, ())
        for _ in range(20):
            z = rng.standard_normal(problem.n + problem.m)
            self.assertGreaterEqual(z @ dual.apply_t2(z, 2.0), -1e-12)
            self.assertGreater(np.linalg.norm(dual.apply_b2(z)), 0.0)

    def test_sgs_proximal_sum_is_positive_definite(self):
        """sigma B2'B2 + T2 equals (D + U) D^{-1} (D + U)' and has positive quadratic forms."""
        rng = np.random.default_rng(16)
        sigma = 2.0
        problem = random_qp(rng, 6, 3)
        dual = QpDualProblem(problem, sigma)
        n, m = problem.n, problem.m
        A = problem.A.toarray()
        B2 = np.hstack([np.eye(n), A.T])
        T2 = np.column_stack([dual.apply_t2(e, sigma) for e in np.eye(n + m)])
        total = sigma * B2.T @ B2 + T2
        D = np.block([[sigma * np.eye(n), np.zeros((n, m))], [np.zeros((m, n)), sigma * A @ A.T]])
        U = np.zeros((n + m, n + m))
        U[:n, n:] = sigma * A.T
        factored = (D + U) @ np.linalg.solve(D, (D + U).T)
        np.testing.assert_allclose(total, factored, atol=1e-9 * (1 + np.abs(factored).max()))
        for _ in range(50):
            z = rng.standard_normal(n + m)
            self.assertGreater(z @ total @ z, 0.0)

    def test_y_block_is_positive_definite_on_range(self):
        """sigma Q^2 + Q has positive quadratic forms on Range(Q)."""
        rng = np.random.default_rng(17)
        for sigma in (0.1, 1.0, 10.0):
            problem = random_qp(rng, 6, 2)
            Q = problem.Q.toarray()
            H = sigma * Q @ Q + Q
            for _ in range(20):
                y = Q @ rng.standard_normal(problem.n)
                self.assertGreater(y @ H @ y, 0.0)

    def test_firm_nonexpansiveness(self):
        """The QP resolvent is firmly nonexpansive in its seminorm."""
        rng = np.random.default_rng(13)
        for _ in range(30):
            problem = random_qp(rng, int(rng.integers(2, 8)), 2)
            oracle = QpDualWorkspace(problem, float(rng.uniform(0.2, 3.0))).oracle()
            u = random_state(rng, problem, 2.0).pack()
            v = random_state(rng, problem, 2.0).pack()
            tu, tv = oracle(u), oracle(v)
            lhs = oracle.seminorm(tu - tv) ** 2 + oracle.seminorm((u - tu) - (v - tv)) ** 2
            rhs = oracle.seminorm(u - v) ** 2
            self.assertLessEqual(lhs, rhs + 1e-9 * (1 + rhs))
