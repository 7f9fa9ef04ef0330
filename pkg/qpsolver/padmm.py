"""Two-block preconditioned ADMM and its accelerated variant.

The problem is  min f1(y) + f2(z)  s.t.  B1 y + B2 z = c  with proximal terms
T1, T2. One pADMM sweep (z-update, multiplier update, y-update) is the
resolvent of the KKT operator in the metric

    ||w||_M^2 = ||y||_T1^2 + (1/sigma) ||sigma B1 y + x||^2 + ||z||_T2^2,

so the accelerated method is just ``splitting.accel_step`` driven by that
resolvent.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigError, SubproblemError, SolverError
from .linalg import estimate_operator_norm
from .splitting import AccelState, ResolventOracle, accel_step, dppm_relax

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PadmmIterate:
    """w = (y, z, x)."""

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([self.y, self.z, self.x])

    @classmethod
    def unpack(cls, vec: np.ndarray, dims: tuple) -> 'PadmmIterate':
        ny, nz, nx = dims
        if vec.shape != (ny + nz + nx,):
            raise ConfigError(f"Packed iterate of shape {vec.shape} does not match dims {dims}")
        return cls(y=vec[:ny], z=vec[ny:ny + nz], x=vec[ny + nz:])

    @classmethod
    def zeros(cls, dims: tuple) -> 'PadmmIterate':
        ny, nz, nx = dims
        return cls(y=np.zeros(ny), z=np.zeros(nz), x=np.zeros(nx))

    def relax(self, w_bar: 'PadmmIterate', rho: float) -> 'PadmmIterate':
        return PadmmIterate(
            y=dppm_relax(self.y, w_bar.y, rho),
            z=dppm_relax(self.z, w_bar.z, rho),
            x=dppm_relax(self.x, w_bar.x, rho),
        )


@dataclass(frozen=True)
class CompositeSplit:
    """f1 = g1 + p1 and f2 = g2 + p2 with g smooth; used by the composite residual."""

    grad_g1: Callable[[np.ndarray], np.ndarray]
    prox_p1: Callable[[np.ndarray], np.ndarray]
    grad_g2: Callable[[np.ndarray], np.ndarray]
    prox_p2: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class KktResidual:
    """Norms of the three residual blocks and their aggregate."""

    primal_y: float
    primal_z: float
    feasibility: float
    aggregate: float
    objective_gap: Optional[float] = None


class TwoBlockProblem(ABC):
    """Data and closed-form subproblem oracles of a two-block problem."""

    @property
    @abstractmethod
    def dims(self) -> tuple:
        """(dim Y, dim Z, dim X)."""

    @property
    @abstractmethod
    def c(self) -> np.ndarray:
        """Right-hand side of the coupling constraint."""

    @abstractmethod
    def apply_b1(self, y: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def apply_b1_adjoint(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def apply_b2(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def apply_b2_adjoint(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def apply_t1(self, y: np.ndarray, sigma: float) -> np.ndarray: ...

    @abstractmethod
    def apply_t2(self, z: np.ndarray, sigma: float) -> np.ndarray: ...

    @abstractmethod
    def solve_z(self, y: np.ndarray, z: np.ndarray, x: np.ndarray, sigma: float) -> np.ndarray:
        """argmin_z L_sigma(y, z; x) + 1/2 ||z - z^k||_T2^2."""

    @abstractmethod
    def solve_y(self, y: np.ndarray, z_bar: np.ndarray, x_bar: np.ndarray, sigma: float) -> np.ndarray:
        """argmin_y L_sigma(y, z_bar; x_bar) + 1/2 ||y - y^k||_T1^2."""

    @abstractmethod
    def f1(self, y: np.ndarray) -> float: ...

    @abstractmethod
    def f2(self, z: np.ndarray) -> float: ...

    def prox_f1(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} does not provide Prox_f1")

    def prox_f2(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} does not provide Prox_f2")

    def composite_split(self) -> Optional[CompositeSplit]:
        return None

    def seminorm(self, w: PadmmIterate, sigma: float) -> float:
        shifted = sigma * self.apply_b1(w.y) + w.x
        value = w.y @ self.apply_t1(w.y, sigma) + (shifted @ shifted) / sigma + w.z @ self.apply_t2(w.z, sigma)
        return float(np.sqrt(max(value, 0.0)))


def _check_parameters(sigma: float, rho: float):
    if not sigma > 0.0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if not 0.0 < rho <= 2.0:
        raise ConfigError(f"rho must lie in (0, 2], got {rho}")


def padmm_resolvent(w: PadmmIterate, problem: TwoBlockProblem, sigma: float) -> PadmmIterate:
    """Steps 1-3 of one pADMM sweep: the point w_bar."""
    try:
        z_bar = problem.solve_z(w.y, w.z, w.x, sigma)
    except (SolverError, np.linalg.LinAlgError) as exc:
        logger.warning(f"z-update failed at sigma={sigma:.3e}: {exc}")
        raise SubproblemError('step 1 (z-update)', exc) from exc
    x_bar = w.x + sigma * (problem.apply_b1(w.y) + problem.apply_b2(z_bar) - problem.c)
    try:
        y_bar = problem.solve_y(w.y, z_bar, x_bar, sigma)
    except (SolverError, np.linalg.LinAlgError) as exc:
        logger.warning(f"y-update failed at sigma={sigma:.3e}: {exc}")
        raise SubproblemError('step 3 (y-update)', exc) from exc
    return PadmmIterate(y=y_bar, z=z_bar, x=x_bar)


def padmm_iterate(w: PadmmIterate, problem: TwoBlockProblem, sigma: float, rho_k: float):
    """One pADMM iteration; returns (w^{k+1}, w_bar^k)."""
    _check_parameters(sigma, rho_k)
    w_bar = padmm_resolvent(w, problem, sigma)
    return w.relax(w_bar, rho_k), w_bar


def padmm_oracle(problem: TwoBlockProblem, sigma: float) -> ResolventOracle:
    """The resolvent induced by pADMM, acting on packed (y, z, x) vectors."""
    dims = problem.dims

    def resolvent(vec):
        return padmm_resolvent(PadmmIterate.unpack(vec, dims), problem, sigma).pack()

    def seminorm(vec):
        return problem.seminorm(PadmmIterate.unpack(vec, dims), sigma)

    return ResolventOracle(resolvent=resolvent, seminorm=seminorm, dim=sum(dims))


def acc_padmm_iterate(state: AccelState, problem: TwoBlockProblem, sigma: float, rho: float, alpha: float) -> AccelState:
    """One accelerated pADMM iteration on a packed state."""
    _check_parameters(sigma, rho)
    return accel_step(replace(state, rho=rho, alpha=alpha), padmm_oracle(problem, sigma))


def kkt_residual(w: PadmmIterate, problem: TwoBlockProblem, reference: Optional[float] = None) -> KktResidual:
    """Natural-map KKT residual; the composite form is used when the problem declares a split."""
    b1x = problem.apply_b1_adjoint(w.x)
    b2x = problem.apply_b2_adjoint(w.x)
    split = problem.composite_split()
    if split is not None:
        ry = w.y - split.prox_p1(w.y - split.grad_g1(w.y) - b1x)
        rz = w.z - split.prox_p2(w.z - split.grad_g2(w.z) - b2x)
    else:
        ry = w.y - problem.prox_f1(w.y - b1x)
        rz = w.z - problem.prox_f2(w.z - b2x)
    rx = problem.c - problem.apply_b1(w.y) - problem.apply_b2(w.z)
    norms = [float(np.linalg.norm(r)) for r in (ry, rz, rx)]
    return KktResidual(
        primal_y=norms[0],
        primal_z=norms[1],
        feasibility=norms[2],
        aggregate=float(np.sqrt(sum(v * v for v in norms))),
        objective_gap=None if reference is None else objective_gap(w, problem, reference),
    )


def objective_gap(w_bar: PadmmIterate, problem: TwoBlockProblem, reference: float) -> float:
    """h = f1(y_bar) + f2(z_bar) - reference (signed)."""
    return problem.f1(w_bar.y) + problem.f2(w_bar.z) - reference


def feasibility_identity(w: PadmmIterate, w_bar: PadmmIterate, problem: TwoBlockProblem, sigma: float) -> tuple:
    """Both sides of ||sigma B1 (y_bar - y) + (x_bar - x)|| = sigma ||B1 y_bar + B2 z_bar - c||."""
    lhs = np.linalg.norm(sigma * problem.apply_b1(w_bar.y - w.y) + (w_bar.x - w.x))
    rhs = sigma * np.linalg.norm(problem.apply_b1(w_bar.y) + problem.apply_b2(w_bar.z) - problem.c)
    return float(lhs), float(rhs)


def residual_bound_constant(problem: TwoBlockProblem, sigma: float, seed: int = 0) -> float:
    """(sigma ||B1^*|| + 1)/sqrt(sigma) + ||sqrt(T2)|| + ||sqrt(T1)||, norms by power method."""
    ny, nz, _ = problem.dims
    norm_b1 = estimate_operator_norm(problem.apply_b1, problem.apply_b1_adjoint, ny, seed=seed)
    sqrt_t1 = estimate_operator_norm(lambda y: problem.apply_t1(y, sigma), lambda v: v, ny, seed=seed)
    sqrt_t2 = estimate_operator_norm(lambda z: problem.apply_t2(z, sigma), lambda v: v, nz, seed=seed)
    return (sigma * norm_b1 + 1.0) / np.sqrt(sigma) + sqrt_t2 + sqrt_t1


def residual_bound(constant: float, r0: float, rho: float, k: int) -> float:
    """Upper bound on ||R(w_bar^k)|| for alpha = 2, fixed sigma, no restart."""
    return constant * 2.0 * r0 / (rho * (k + 1))


class QuadraticTwoBlockProblem(TwoBlockProblem):
    """Dense problem with f1 = 1/2 y'Py + q'y and f2 = 1/2 z'Rz + s'z."""

    def __init__(self, P, q, R, s, B1, B2, c, T1=None, T2=None):
        self.P = np.atleast_2d(np.asarray(P, dtype=np.float64))
        self.q = np.atleast_1d(np.asarray(q, dtype=np.float64))
        self.R = np.atleast_2d(np.asarray(R, dtype=np.float64))
        self.s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        self.B1 = np.atleast_2d(np.asarray(B1, dtype=np.float64))
        self.B2 = np.atleast_2d(np.asarray(B2, dtype=np.float64))
        self._c = np.atleast_1d(np.asarray(c, dtype=np.float64))
        ny, nz = self.P.shape[0], self.R.shape[0]
        self.T1 = np.zeros((ny, ny)) if T1 is None else np.atleast_2d(np.asarray(T1, dtype=np.float64))
        self.T2 = np.zeros((nz, nz)) if T2 is None else np.atleast_2d(np.asarray(T2, dtype=np.float64))
        if self.B1.shape != (self._c.shape[0], ny) or self.B2.shape != (self._c.shape[0], nz):
            raise ConfigError(f"Coupling operators {self.B1.shape}, {self.B2.shape} do not match dims")

    @property
    def dims(self) -> tuple:
        return self.P.shape[0], self.R.shape[0], self._c.shape[0]

    @property
    def c(self) -> np.ndarray:
        return self._c

    def apply_b1(self, y):
        return self.B1 @ y

    def apply_b1_adjoint(self, x):
        return self.B1.T @ x

    def apply_b2(self, z):
        return self.B2 @ z

    def apply_b2_adjoint(self, x):
        return self.B2.T @ x

    def apply_t1(self, y, sigma):
        return self.T1 @ y

    def apply_t2(self, z, sigma):
        return self.T2 @ z

    def solve_z(self, y, z, x, sigma):
        lhs = self.R + sigma * self.B2.T @ self.B2 + self.T2
        rhs = -self.s - self.B2.T @ x - sigma * self.B2.T @ (self.B1 @ y - self._c) + self.T2 @ z
        return np.linalg.solve(lhs, rhs)

    def solve_y(self, y, z_bar, x_bar, sigma):
        lhs = self.P + sigma * self.B1.T @ self.B1 + self.T1
        rhs = -self.q - self.B1.T @ x_bar - sigma * self.B1.T @ (self.B2 @ z_bar - self._c) + self.T1 @ y
        return np.linalg.solve(lhs, rhs)

    def f1(self, y):
        return float(0.5 * y @ (self.P @ y) + self.q @ y)

    def f2(self, z):
        return float(0.5 * z @ (self.R @ z) + self.s @ z)

    def prox_f1(self, v):
        return np.linalg.solve(np.eye(self.P.shape[0]) + self.P, v - self.q)

    def prox_f2(self, v):
        return np.linalg.solve(np.eye(self.R.shape[0]) + self.R, v - self.s)

    def solve_kkt(self) -> PadmmIterate:
        """KKT point from the dense saddle-point system."""
        ny, nz, nx = self.dims
        K = np.block([
            [self.P, np.zeros((ny, nz)), self.B1.T],
            [np.zeros((nz, ny)), self.R, self.B2.T],
            [self.B1, self.B2, np.zeros((nx, nx))],
        ])
        rhs = np.concatenate([-self.q, -self.s, self._c])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        return PadmmIterate.unpack(sol, self.dims)
