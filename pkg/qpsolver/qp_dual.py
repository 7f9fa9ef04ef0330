"""Accelerated pADMM on the restricted-Wolfe dual of a convex QP.

Primal:  min 1/2 x'Qx + c'x  s.t.  Ax = b,  l <= x <= u.
Dual:    min 1/2 y'Qy + delta_C^*(-z1) - b'z2  s.t.  -Qy + z1 + A'z2 = c,  y in Range(Q).

The multiplier of the dual constraint is the primal x. One sweep updates
(z2', z1, z2) by symmetric Gauss-Seidel, then x, then y. Range(Q) is never
formed: the y-update returns a surrogate w with Qw equal to Q times the true
minimizer, and only Qy and <y, Qy> are ever needed.

Iterates are packed as flat vectors [w, z1, z2, x, qy] so that the generic
engine in ``splitting`` can relax and extrapolate them; qy is linear in w so
the packed Qy stays consistent under those affine combinations.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatch, InfeasibleBounds, NumericalError, SolverError
from .linalg import as_csc, estimate_operator_norm, factorize_spd, project_box, spmv, spmv_transpose, support_box
from .padmm import CompositeSplit, TwoBlockProblem
from .schemas import IterationRecord, SigmaPolicy, SolveStatus, SolverConfig
from .splitting import AccelState, ResolventOracle, accel_step, dppm_relax, restart

logger = logging.getLogger(__name__)

LOG_COLUMNS = ('k', 'kkt_res', 'r_p', 'r_d', 'r_qxy', 'r_comp', 'sigma', 'obj', 'seminorm_res', 'time_s')


@dataclass(frozen=True, eq=False)
class QpProblem:
    """Standard-form QP data; Q is symmetrized on construction."""

    Q: sp.csc_matrix
    A: sp.csc_matrix
    b: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    objective_constant: float = 0.0
    name: str = ''

    def __post_init__(self):
        Q = as_csc(self.Q)
        A = as_csc(self.A)
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q must be square, got {Q.shape}")
        if A.shape[1] != n:
            raise DimensionMismatch(f"A has {A.shape[1]} columns but Q has order {n}")
        Q = as_csc((Q + Q.T) * 0.5)
        object.__setattr__(self, 'Q', Q)
        object.__setattr__(self, 'A', A)
        for attr, size in (('b', A.shape[0]), ('c', n), ('lower', n), ('upper', n)):
            value = np.array(getattr(self, attr), dtype=np.float64).reshape(-1)
            if value.shape != (size,):
                raise DimensionMismatch(f"{attr} has shape {value.shape}, expected ({size},)")
            object.__setattr__(self, attr, value)
        bad = np.flatnonzero(self.lower > self.upper)
        if bad.size:
            i = int(bad[0])
            raise InfeasibleBounds(i, float(self.lower[i]), float(self.upper[i]))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True, eq=False)
class DualIterate:
    """(y-surrogate, z1, z2, x) with the cached product qy = Q w."""

    w: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    x: np.ndarray
    qy: np.ndarray

    @classmethod
    def zeros(cls, n: int, m: int) -> 'DualIterate':
        return cls(w=np.zeros(n), z1=np.zeros(n), z2=np.zeros(m), x=np.zeros(n), qy=np.zeros(n))

    @classmethod
    def from_parts(cls, problem: QpProblem, w, z1, z2, x) -> 'DualIterate':
        """Build an iterate and refresh qy from w."""
        w = np.asarray(w, dtype=np.float64)
        return cls(
            w=w,
            z1=np.asarray(z1, dtype=np.float64),
            z2=np.asarray(z2, dtype=np.float64),
            x=np.asarray(x, dtype=np.float64),
            qy=problem.Q @ w,
        )

    def pack(self) -> np.ndarray:
        return np.concatenate([self.w, self.z1, self.z2, self.x, self.qy])

    @classmethod
    def unpack(cls, vec: np.ndarray, n: int, m: int) -> 'DualIterate':
        if vec.shape != (4 * n + m,):
            raise DimensionMismatch(f"Packed iterate of shape {vec.shape} does not match n={n}, m={m}")
        return cls(
            w=vec[:n],
            z1=vec[n:2 * n],
            z2=vec[2 * n:2 * n + m],
            x=vec[2 * n + m:3 * n + m],
            qy=vec[3 * n + m:],
        )


def solve_z2(problem: QpProblem, state: DualIterate, factor_aat, sigma: float) -> np.ndarray:
    """Minimize L_sigma over z2: sigma AA' z2 = b - sigma A(-Qy + z1 - c + x/sigma)."""
    r = -state.qy + state.z1 - problem.c + state.x / sigma
    return factor_aat.solve(problem.b / sigma - problem.A @ r)


def solve_z1(problem: QpProblem, state: DualIterate, sigma: float) -> np.ndarray:
    """Minimize delta_C^*(-z1) + sigma/2 ||z1 + r||^2 by the Moreau decomposition."""
    r = -state.qy + problem.A.T @ state.z2 - problem.c + state.x / sigma
    shifted = sigma * r
    return (project_box(shifted, problem.lower, problem.upper) - shifted) / sigma


def solve_y(problem: QpProblem, z1: np.ndarray, z2: np.ndarray, x: np.ndarray, factor_iq, sigma: float):
    """(I + sigma Q) w = sigma (z1 + A'z2 - c + x/sigma); returns (w, Qw)."""
    rhs = sigma * (z1 + problem.A.T @ z2 - problem.c + x / sigma)
    w = factor_iq.solve(rhs)
    return w, problem.Q @ w


def sgs_z_update(problem: QpProblem, state: DualIterate, factor_aat, sigma: float):
    """Backward z2 sweep, z1 sweep, forward z2 sweep; one AA' factor serves both z2 solves."""
    z2_half = solve_z2(problem, state, factor_aat, sigma)
    z1 = solve_z1(problem, _with(state, z2=z2_half), sigma)
    z2 = solve_z2(problem, _with(state, z1=z1), factor_aat, sigma)
    return z1, z2


def _with(state: DualIterate, **parts) -> DualIterate:
    values = {'w': state.w, 'z1': state.z1, 'z2': state.z2, 'x': state.x, 'qy': state.qy}
    values.update(parts)
    return DualIterate(**values)


def dual_feasibility(problem: QpProblem, state: DualIterate) -> np.ndarray:
    """-Qy + z1 + A'z2 - c."""
    return -state.qy + state.z1 + problem.A.T @ state.z2 - problem.c


def primal_objective(problem: QpProblem, x: np.ndarray) -> float:
    return float(0.5 * x @ (problem.Q @ x) + problem.c @ x + problem.objective_constant)


def dual_objective(problem: QpProblem, state: DualIterate) -> float:
    """-1/2 <y, Qy> - delta_C^*(-z1) + <b, z2>, plus the objective constant."""
    return float(
        -0.5 * state.w @ state.qy
        - support_box(-state.z1, problem.lower, problem.upper)
        + problem.b @ state.z2
        + problem.objective_constant
    )


def duality_gap(problem: QpProblem, state: DualIterate) -> float:
    """|primal - dual| / (1 + |primal| + |dual|); inf while the dual value is -inf."""
    primal = primal_objective(problem, state.x)
    dual = dual_objective(problem, state)
    if not np.isfinite(dual):
        return float('inf')
    return float(abs(primal - dual) / (1.0 + abs(primal) + abs(dual)))


@dataclass(frozen=True)
class RelativeKkt:
    r_p: float
    r_d: float
    r_qxy: float
    r_comp: float

    @property
    def kkt_res(self) -> float:
        return max(self.r_p, self.r_d, self.r_qxy, self.r_comp)


def relative_kkt(problem: QpProblem, state: DualIterate) -> RelativeKkt:
    norm = np.linalg.norm
    qx = problem.Q @ state.x
    projected = project_box(state.x - state.z1, problem.lower, problem.upper)
    return RelativeKkt(
        r_p=float(norm(problem.A @ state.x - problem.b) / (1.0 + norm(problem.b))),
        r_d=float(norm(dual_feasibility(problem, state)) / (1.0 + norm(problem.c))),
        r_qxy=float(norm(qx - state.qy) / (1.0 + norm(qx) + norm(state.qy))),
        r_comp=float(norm(state.x - projected) / (1.0 + norm(state.x) + norm(state.z1))),
    )


def adapt_sigma(history: Sequence[IterationRecord], sigma: float, policy: SigmaPolicy = SigmaPolicy()):
    """Residual balancing on theta = r_p / r_d.

    theta above ``upper_ratio`` multiplies sigma by ``factor``, theta below
    ``lower_ratio`` divides it. Returns (sigma_new, changed).
    """
    if not policy.enabled or not history:
        return sigma, False
    recent = history[-policy.cooldown:] if policy.cooldown else []
    if any(record.sigma != sigma for record in recent):
        return sigma, False
    latest = history[-1]
    if latest.r_p > policy.upper_ratio * latest.r_d:
        candidate = sigma * policy.factor
    elif latest.r_p < policy.lower_ratio * latest.r_d:
        candidate = sigma / policy.factor
    else:
        return sigma, False
    sigma_new = min(max(candidate, policy.sigma_min), policy.sigma_max)
    return sigma_new, sigma_new != sigma


class QpDualWorkspace:
    """sigma, the AA' and I + sigma Q factors, and the closed-form sweep."""

    def __init__(self, problem: QpProblem, sigma: float, ordering: str = 'amd'):
        self.problem = problem
        self.ordering = ordering
        self.factor_aat = factorize_spd(problem.A @ problem.A.T, ordering)
        self.sigma = None
        self.factor_iq = None
        self._oracle = None
        self.set_sigma(sigma)

    def set_sigma(self, sigma: float):
        if sigma == self.sigma:
            return
        n = self.problem.n
        self.factor_iq = factorize_spd(sp.identity(n, format='csc') + sigma * self.problem.Q, self.ordering)
        self.sigma = float(sigma)
        self._oracle = None
        logger.debug(f"Factorized I + sigma*Q for sigma={sigma:.3e}")

    @property
    def dim(self) -> int:
        return 4 * self.problem.n + self.problem.m

    def resolve(self, state: DualIterate) -> DualIterate:
        """One sweep: (z1, z2) by sGS, then x, then y."""
        problem, sigma = self.problem, self.sigma
        z1, z2 = sgs_z_update(problem, state, self.factor_aat, sigma)
        x = state.x + sigma * (-state.qy + z1 + problem.A.T @ z2 - problem.c)
        w, qy = solve_y(problem, z1, z2, x, self.factor_iq, sigma)
        return DualIterate(w=w, z1=z1, z2=z2, x=x, qy=qy)

    def sgs_term(self, z1: np.ndarray) -> np.ndarray:
        """sigma A'(AA')^{-1} A z1, the z1 block of the sGS proximal operator."""
        return self.sigma * (self.problem.A.T @ self.factor_aat.solve(self.problem.A @ z1))

    def seminorm(self, state: DualIterate) -> float:
        shifted = state.x - self.sigma * state.qy
        az1 = self.problem.A @ state.z1
        value = shifted @ shifted / self.sigma + self.sigma * (az1 @ self.factor_aat.solve(az1))
        return float(np.sqrt(max(value, 0.0)))

    def oracle(self) -> ResolventOracle:
        if self._oracle is None:
            n, m = self.problem.n, self.problem.m

            def resolvent(vec):
                return self.resolve(DualIterate.unpack(vec, n, m)).pack()

            def seminorm(vec):
                return self.seminorm(DualIterate.unpack(vec, n, m))

            self._oracle = ResolventOracle(resolvent=resolvent, seminorm=seminorm, dim=self.dim)
        return self._oracle


class QpDualProblem(TwoBlockProblem):
    """The QP dual seen as a generic two-block problem.

    y in R^n (surrogate), z = (z1, z2) in R^{n+m}, B1 = -Q, B2 = [I, A'],
    T1 = 0 and T2 = sGS, which makes ``solve_z`` the three-sweep update.
    """

    def __init__(self, problem: QpProblem, sigma: float, ordering: str = 'amd'):
        self.qp = problem
        self.workspace = QpDualWorkspace(problem, sigma, ordering)

    def _check_sigma(self, sigma):
        if sigma != self.workspace.sigma:
            self.workspace.set_sigma(sigma)

    def split_z(self, z):
        n = self.qp.n
        return z[:n], z[n:]

    @property
    def dims(self) -> tuple:
        return self.qp.n, self.qp.n + self.qp.m, self.qp.n

    @property
    def c(self) -> np.ndarray:
        return self.qp.c

    def apply_b1(self, y):
        return -(self.qp.Q @ y)

    def apply_b1_adjoint(self, x):
        return -(self.qp.Q @ x)

    def apply_b2(self, z):
        z1, z2 = self.split_z(z)
        return z1 + self.qp.A.T @ z2

    def apply_b2_adjoint(self, x):
        return np.concatenate([x, self.qp.A @ x])

    def apply_t1(self, y, sigma):
        return np.zeros_like(y)

    def apply_t2(self, z, sigma):
        self._check_sigma(sigma)
        z1, _ = self.split_z(z)
        return np.concatenate([self.workspace.sgs_term(z1), np.zeros(self.qp.m)])

    def solve_z(self, y, z, x, sigma):
        self._check_sigma(sigma)
        z1, z2 = self.split_z(z)
        state = DualIterate(w=y, z1=z1, z2=z2, x=x, qy=self.qp.Q @ y)
        z1_new, z2_new = sgs_z_update(self.qp, state, self.workspace.factor_aat, sigma)
        return np.concatenate([z1_new, z2_new])

    def solve_y(self, y, z_bar, x_bar, sigma):
        self._check_sigma(sigma)
        z1, z2 = self.split_z(z_bar)
        w, _ = solve_y(self.qp, z1, z2, x_bar, self.workspace.factor_iq, sigma)
        return w

    def f1(self, y):
        return float(0.5 * y @ (self.qp.Q @ y))

    def f2(self, z):
        z1, z2 = self.split_z(z)
        return support_box(-z1, self.qp.lower, self.qp.upper) - float(self.qp.b @ z2)

    def composite_split(self) -> CompositeSplit:
        n, qp = self.qp.n, self.qp

        def grad_g2(z):
            return np.concatenate([np.zeros(n), -qp.b])

        def prox_p2(v):
            v1, v2 = v[:n], v[n:]
            return np.concatenate([v1 + project_box(-v1, qp.lower, qp.upper), v2])

        return CompositeSplit(
            grad_g1=lambda y: qp.Q @ y,
            prox_p1=lambda v: v,
            grad_g2=grad_g2,
            prox_p2=prox_p2,
        )


class IterationLogWriter:
    """CSV sink for IterationRecord streams."""

    def __init__(self, path, columns: Sequence[str] = LOG_COLUMNS):
        self.path = path
        self.columns = tuple(columns)
        self._handle = None
        self._writer = None

    def __enter__(self):
        self._handle = open(self.path, 'w', newline='')
        self._writer = csv.writer(self._handle)
        self._writer.writerow(self.columns)
        return self

    def __exit__(self, *exc_info):
        self._handle.close()
        self._handle = None

    def write(self, record: IterationRecord):
        values = record.model_dump()
        values['abs_gap'] = None if record.gap is None else abs(record.gap)
        self._writer.writerow(['' if values.get(col) is None else values[col] for col in self.columns])


@dataclass
class SolveResult:
    iterate: DualIterate
    status: SolveStatus
    iterations: int
    sigma: float
    time_s: float
    history: list = field(default_factory=list)
    message: str = ''
    duality_gap: float = float('nan')
    norm_a: float = float('nan')

    @property
    def final(self) -> Optional[IterationRecord]:
        return self.history[-1] if self.history else None

    @property
    def kkt_res(self) -> float:
        return self.final.kkt_res if self.final else float('nan')


def two_block_gap(problem: QpProblem, state: DualIterate, reference_objective: float) -> float:
    """f1(y) + f2(z) minus its optimal value, with the optimum taken from the primal objective."""
    value = 0.5 * state.w @ state.qy + support_box(-state.z1, problem.lower, problem.upper) - problem.b @ state.z2
    optimum = -(reference_objective - problem.objective_constant)
    return float(value - optimum)


def relative_gap(gap: float, problem: QpProblem, reference_objective: float) -> float:
    """|h| / (1 + |f1* + f2*|)."""
    return float(abs(gap) / (1.0 + abs(reference_objective - problem.objective_constant)))


def run_solver(
    problem: QpProblem,
    config: SolverConfig,
    warm_start: Optional[DualIterate] = None,
    log: Optional[IterationLogWriter] = None,
    reference_objective: Optional[float] = None,
    check_each_iteration: bool = False,
) -> SolveResult:
    """Run pADMM or acc-pADMM until KKT_res <= tol or max_iter.

    KKT_res is measured at w_bar every ``check_every`` iterations (every
    iteration when ``check_each_iteration``). Failures inside the loop become
    status Error rather than exceptions.
    """
    n, m = problem.n, problem.m
    logger.info(
        f"Solving {problem.name or 'QP'} (m={m}, n={n}) with {config.algorithm.value}, "
        f"sigma={config.sigma}, rho={config.rho}, alpha={config.alpha}"
    )
    norm_a = estimate_operator_norm(
        lambda v: spmv(problem.A, v), lambda u: spmv_transpose(problem.A, u), n, seed=config.seed,
    )
    logger.debug(f"||A|| ~ {norm_a:.3e} (power iteration, seed={config.seed})")
    start = time.perf_counter()
    history: list[IterationRecord] = []
    w0 = DualIterate.zeros(n, m) if warm_start is None else warm_start
    last_good = w0
    status, message, iteration = SolveStatus.MAX_ITER, '', 0

    try:
        workspace = QpDualWorkspace(problem, config.sigma, config.ordering)
        w = w0.pack()
        state = AccelState.start(w, config.alpha, config.rho) if config.accelerated else None

        for k in range(config.max_iter):
            oracle = workspace.oracle()
            if state is not None:
                w_prev = state.w
                state = accel_step(state, oracle)
                w_bar = state.w_bar
            else:
                w_prev = w
                w_bar = oracle(w)
                w = dppm_relax(w, w_bar, config.rho)
            iteration = k + 1

            scheduled = iteration % config.check_every == 0
            if not (scheduled or check_each_iteration or iteration == config.max_iter):
                continue
            if not np.all(np.isfinite(w_bar)):
                raise NumericalError(f"Non-finite iterate at iteration {iteration}")

            current = DualIterate.unpack(w_bar, n, m)
            last_good = current
            kkt = relative_kkt(problem, current)
            gap = None if reference_objective is None else two_block_gap(problem, current, reference_objective)
            record = IterationRecord(
                k=iteration,
                kkt_res=kkt.kkt_res,
                r_p=kkt.r_p,
                r_d=kkt.r_d,
                r_qxy=kkt.r_qxy,
                r_comp=kkt.r_comp,
                sigma=workspace.sigma,
                obj=primal_objective(problem, current.x),
                seminorm_res=config.rho * oracle.seminorm(w_prev - w_bar),
                time_s=time.perf_counter() - start,
                gap=gap,
                rel_gap=None if gap is None else relative_gap(gap, problem, reference_objective),
            )
            history.append(record)
            if log is not None:
                log.write(record)
            logger.debug(f"k={iteration} kkt_res={record.kkt_res:.3e} sigma={record.sigma:.3e}")

            if record.kkt_res <= config.tol:
                status = SolveStatus.SOLVED
                break
            if not scheduled:
                continue

            sigma_new, changed = adapt_sigma(history, workspace.sigma, config.sigma_policy)
            if changed:
                logger.info(f"k={iteration}: sigma {workspace.sigma:.3e} -> {sigma_new:.3e}")
                workspace.set_sigma(sigma_new)
            if state is not None and (changed or (config.restart_every and state.k >= config.restart_every)):
                anchor = w_bar if config.restart_anchor == 'w_bar' else state.w
                state = restart(state, anchor)
                logger.debug(f"Restarted acceleration at k={iteration}")
        sigma = workspace.sigma
    except (SolverError, FloatingPointError) as exc:
        logger.error(f"Solve of {problem.name or 'QP'} failed at iteration {iteration}: {exc}", exc_info=True)
        status, message = SolveStatus.ERROR, str(exc)
        sigma = config.sigma if not history else history[-1].sigma

    elapsed = time.perf_counter() - start
    result = SolveResult(
        iterate=last_good,
        status=status,
        iterations=iteration,
        sigma=sigma,
        time_s=elapsed,
        history=history,
        message=message,
        duality_gap=duality_gap(problem, last_good) if history else float('nan'),
        norm_a=norm_a,
    )
    logger.info(
        f"{problem.name or 'QP'}: {status.value} after {iteration} iterations, "
        f"kkt_res={result.kkt_res:.3e}, duality_gap={result.duality_gap:.3e}, {elapsed:.2f}s"
    )
    return result
