"""Degenerate proximal point engine with Halpern / fast Krasnosel'skii-Mann acceleration.

The engine never sees the preconditioner M itself. A problem hands it a
``ResolventOracle``: a map w -> (M + T)^{-1} M w together with the
M-seminorm. Points are flat float64 vectors.

With alpha = 2 the accelerated step is the Halpern iteration anchored at the
starting point; with alpha > 2 it is the fast KM iteration with vanishing
damping. ``w_bar`` of the latest step is the sequence that converges in
both regimes, so it is what callers should report.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional

import numpy as np

from .exceptions import ConfigError, DimensionMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResolventOracle:
    """Resolvent evaluator w -> (M+T)^{-1} M w and the M-seminorm on a space of ``dim`` reals."""

    resolvent: Callable[[np.ndarray], np.ndarray]
    seminorm: Callable[[np.ndarray], float]
    dim: int

    def __call__(self, w: np.ndarray) -> np.ndarray:
        if w.shape != (self.dim,):
            raise DimensionMismatch(f"Point of shape {w.shape} does not match oracle dimension {self.dim}")
        return self.resolvent(w)


@dataclass(frozen=True, eq=False)
class AccelState:
    """State of the accelerated iteration after ``k`` steps since the last (re)start.

    ``w_bar`` is the resolvent output of the latest step (None at k = 0).
    """

    k: int
    w: np.ndarray
    w_hat: np.ndarray
    alpha: float = 2.0
    rho: float = 2.0
    w_bar: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"Iteration counter must be nonnegative, got {self.k}")
        if not self.alpha >= 2.0:
            raise ConfigError(f"alpha must be >= 2, got {self.alpha}")
        if not 0.0 < self.rho <= 2.0:
            raise ConfigError(f"rho must lie in (0, 2], got {self.rho}")
        if self.w.shape != self.w_hat.shape:
            raise DimensionMismatch(f"w {self.w.shape} and w_hat {self.w_hat.shape} differ in shape")

    @classmethod
    def start(cls, w0: np.ndarray, alpha: float = 2.0, rho: float = 2.0) -> 'AccelState':
        w0 = np.array(w0, dtype=np.float64)
        return cls(k=0, w=w0, w_hat=w0.copy(), alpha=alpha, rho=rho)


def dppm_relax(w: np.ndarray, w_bar: np.ndarray, rho_k: float) -> np.ndarray:
    """(1 - rho_k) w + rho_k w_bar."""
    return (1.0 - rho_k) * w + rho_k * w_bar


def dppm_step(w: np.ndarray, rho_k: float, oracle: ResolventOracle) -> np.ndarray:
    """One relaxed degenerate proximal point step."""
    if not 0.0 < rho_k < 2.0:
        raise ConfigError(f"Relaxation factor must lie in (0, 2), got {rho_k}")
    return dppm_relax(w, oracle(w), rho_k)


def accel_step(state: AccelState, oracle: ResolventOracle) -> AccelState:
    """Resolvent, relaxation, then the anchored momentum combination."""
    k, alpha, rho = state.k, state.alpha, state.rho
    w_bar = oracle(state.w)
    w_hat_next = dppm_relax(state.w, w_bar, rho)
    w_next = (
        state.w
        + (alpha / (2.0 * (k + alpha))) * (w_hat_next - state.w)
        + (k / (k + alpha)) * (w_hat_next - state.w_hat)
    )
    return replace(
        state,
        k=k + 1,
        w=w_next,
        w_hat=w_hat_next,
        w_bar=w_bar,
    )


def seminorm_residual(state: AccelState, oracle: ResolventOracle) -> float:
    """||w^k - w_hat^{k+1}||_M evaluated afresh at the current point."""
    w_hat_next = dppm_relax(state.w, oracle(state.w), state.rho)
    return oracle.seminorm(state.w - w_hat_next)


def restart(state: AccelState, anchor: np.ndarray) -> AccelState:
    """Reset the counter and re-anchor the iteration at ``anchor``."""
    if anchor.shape != state.w.shape:
        raise DimensionMismatch(f"Anchor of shape {anchor.shape} does not match state {state.w.shape}")
    anchor = np.array(anchor, dtype=np.float64)
    logger.debug(f"Restarting after {state.k} accelerated steps")
    return replace(state, k=0, w=anchor, w_hat=anchor.copy())


def iterate_accelerated(state: AccelState, oracle: ResolventOracle, max_iter: int) -> Iterator[AccelState]:
    """Yield the states after each of ``max_iter`` accelerated steps."""
    for _ in range(max_iter):
        state = accel_step(state, oracle)
        yield state


def linear_inclusion_oracle(M: np.ndarray, S: np.ndarray, t: np.ndarray) -> ResolventOracle:
    """Oracle for 0 in S w + t with preconditioner M (dense, PSD).

    The resolvent solves M w = (M + S) w_bar + t, which is single valued when
    M + S is nonsingular (for instance M PSD and S + S^T positive definite).
    """
    M = np.asarray(M, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    system = M + S

    def resolvent(w):
        return np.linalg.solve(system, M @ w - t)

    def seminorm(w):
        return float(np.sqrt(max(w @ (M @ w), 0.0)))

    return ResolventOracle(resolvent=resolvent, seminorm=seminorm, dim=M.shape[0])
