"""Sparse matrix primitives and a permuted LDL^T factorization.

Matrices are carried as ``scipy.sparse.csc_matrix`` in canonical form (sorted
row indices, duplicates summed). The factorization follows the classic
up-looking LDL^T scheme: an elimination tree is computed from the upper
triangle of the permuted matrix, then each row of L is produced by a sparse
triangular solve along the tree. Pivots that fall below a small static floor
are shifted so that the positive semidefinite systems met by the QP dual
(I + sigma*Q and A*A^T with redundant rows) factor without error.
"""

import hashlib
import heapq
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import spsolve_triangular

from .exceptions import DimensionMismatch, IndefiniteMatrix, InfeasibleBounds

logger = logging.getLogger(__name__)

ORDERINGS = ('amd', 'rcm', 'natural')

# Pivots below REGULARIZATION * (1 + max|diag|) get shifted by that amount.
REGULARIZATION = 1e-12


def as_csc(M) -> sp.csc_matrix:
    """Return a canonical float64 CSC copy of M."""
    C = sp.csc_matrix(M, dtype=np.float64, copy=True)
    C.sum_duplicates()
    C.sort_indices()
    return C


def spmv(M, v: np.ndarray) -> np.ndarray:
    """Compute M @ v."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != M.shape[1]:
        raise DimensionMismatch(
            f"Cannot multiply a {M.shape[0]}x{M.shape[1]} matrix by a vector of shape {v.shape}"
        )
    return M @ v


def spmv_transpose(M, v: np.ndarray) -> np.ndarray:
    """Compute M^T @ v without forming the transpose."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != M.shape[0]:
        raise DimensionMismatch(
            f"Cannot multiply the transpose of a {M.shape[0]}x{M.shape[1]} matrix by a vector of shape {v.shape}"
        )
    return M.T @ v


def project_box(v: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Componentwise median(lower, v, upper); infinite bounds are honored."""
    v = np.asarray(v, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if not (v.shape == lower.shape == upper.shape):
        raise DimensionMismatch(f"Box shapes {lower.shape}/{upper.shape} do not match vector {v.shape}")
    bad = np.flatnonzero(lower > upper)
    if bad.size:
        i = int(bad[0])
        raise InfeasibleBounds(i, float(lower[i]), float(upper[i]))
    return np.minimum(np.maximum(v, lower), upper)


def support_box(v: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    """Support function of the box [lower, upper]: sup over x in the box of <v, x>."""
    pos = v > 0
    neg = v < 0
    if np.any(np.isinf(upper[pos])) or np.any(np.isinf(lower[neg])):
        return float('inf')
    return float(v[pos] @ upper[pos] + v[neg] @ lower[neg])


def estimate_operator_norm(forward, adjoint, dim: int, iterations: int = 50, seed: int = 0) -> float:
    """Power-method estimate of sqrt(lambda_max(adjoint o forward)).

    With ``adjoint`` the transpose of ``forward`` this is the spectral norm of
    ``forward``; with ``adjoint`` the identity and ``forward`` a PSD operator T
    it is the norm of sqrt(T).
    """
    if dim == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        u = adjoint(forward(v))
        lam = float(np.linalg.norm(u))
        if lam == 0.0:
            return 0.0
        v = u / lam
    return float(np.sqrt(lam))


def minimum_degree_ordering(C: sp.spmatrix) -> np.ndarray:
    """Greedy minimum-degree elimination order on the symmetric pattern of C.

    Degrees are exact (no supervariables or element absorption); ties are
    broken by the lower index so the order is deterministic.
    """
    n = C.shape[0]
    pattern = sp.csr_matrix(C, copy=True)
    pattern.data = np.ones_like(pattern.data)
    pattern = (pattern + pattern.T).tocsr()
    indptr, indices = pattern.indptr, pattern.indices
    adjacency = [set(indices[indptr[i]:indptr[i + 1]].tolist()) - {i} for i in range(n)]

    heap = [(len(nbrs), i) for i, nbrs in enumerate(adjacency)]
    heapq.heapify(heap)
    eliminated = [False] * n
    order = []
    while heap:
        degree, i = heapq.heappop(heap)
        if eliminated[i] or degree != len(adjacency[i]):
            continue
        eliminated[i] = True
        order.append(i)
        nbrs = adjacency[i]
        for j in nbrs:
            adj = adjacency[j]
            adj.discard(i)
            adj |= nbrs
            adj.discard(j)
            heapq.heappush(heap, (len(adj), j))
        adjacency[i] = set()
    return np.asarray(order, dtype=np.int64)


def fill_reducing_ordering(C: sp.spmatrix, ordering: str = 'amd') -> np.ndarray:
    """Symmetric permutation used before factorization."""
    n = C.shape[0]
    if ordering == 'amd':
        return minimum_degree_ordering(C)
    if ordering == 'rcm':
        return np.asarray(reverse_cuthill_mckee(sp.csr_matrix(C), symmetric_mode=True), dtype=np.int64)
    if ordering == 'natural':
        return np.arange(n, dtype=np.int64)
    raise ValueError(f"Unknown ordering '{ordering}', expected one of {ORDERINGS}")


def matrix_fingerprint(C: sp.csc_matrix) -> str:
    """Digest of the canonical CSC arrays."""
    digest = hashlib.sha1()
    digest.update(np.asarray(C.shape, dtype=np.int64).tobytes())
    digest.update(np.ascontiguousarray(C.indptr, dtype=np.int64).tobytes())
    digest.update(np.ascontiguousarray(C.indices, dtype=np.int64).tobytes())
    digest.update(np.ascontiguousarray(C.data, dtype=np.float64).tobytes())
    return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class SymmetricFactorization:
    """P M P^T = L D L^T with unit lower triangular L (stored in the permuted ordering)."""

    perm: np.ndarray
    lower: sp.csr_matrix
    diagonal: np.ndarray
    fingerprint: str
    regularized: tuple = ()
    upper: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'upper', self.lower.T.tocsr())

    @property
    def dim(self) -> int:
        return int(self.diagonal.shape[0])

    def solve(self, r: np.ndarray) -> np.ndarray:
        return solve_factored(self, r)


def _elimination_tree(n: int, Ap: list, Ai: list) -> tuple[list, list]:
    """Parent pointers and column counts of L from the upper triangle (CSC)."""
    parent = [-1] * n
    flag = [-1] * n
    counts = [0] * n
    for k in range(n):
        flag[k] = k
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i < k:
                while flag[i] != k:
                    if parent[i] == -1:
                        parent[i] = k
                    counts[i] += 1
                    flag[i] = k
                    i = parent[i]
    return parent, counts


def factorize_spd(M, ordering: str = 'amd') -> SymmetricFactorization:
    """Factor a symmetric positive (semi)definite matrix.

    Raises IndefiniteMatrix naming the (original) index of the first pivot
    that remains non-positive after the static shift.
    """
    C = as_csc(M)
    n, ncols = C.shape
    if n != ncols:
        raise DimensionMismatch(f"Cannot factorize a non-square {n}x{ncols} matrix")
    fingerprint = matrix_fingerprint(C)
    if n == 0:
        return SymmetricFactorization(
            perm=np.zeros(0, dtype=np.int64),
            lower=sp.csr_matrix((0, 0)),
            diagonal=np.zeros(0),
            fingerprint=fingerprint,
        )

    perm = fill_reducing_ordering(C, ordering)
    upper_part = sp.triu(C[perm][:, perm], format='csc')
    upper_part.sort_indices()
    Ap = upper_part.indptr.tolist()
    Ai = upper_part.indices.tolist()
    Ax = upper_part.data.tolist()

    parent, counts = _elimination_tree(n, Ap, Ai)
    Lp = [0] * (n + 1)
    for k in range(n):
        Lp[k + 1] = Lp[k] + counts[k]
    Li = [0] * Lp[n]
    Lx = [0.0] * Lp[n]

    delta = REGULARIZATION * (1.0 + float(np.max(np.abs(C.diagonal()))))
    D = [0.0] * n
    Y = [0.0] * n
    flag = [-1] * n
    pattern = [0] * n
    filled = [0] * n
    regularized = []

    for k in range(n):
        Y[k] = 0.0
        top = n
        flag[k] = k
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            Y[i] += Ax[p]
            length = 0
            while flag[i] != k:
                pattern[length] = i
                length += 1
                flag[i] = k
                i = parent[i]
            while length > 0:
                top -= 1
                length -= 1
                pattern[top] = pattern[length]
        d = Y[k]
        Y[k] = 0.0
        for t in range(top, n):
            i = pattern[t]
            yi = Y[i]
            Y[i] = 0.0
            p2 = Lp[i] + filled[i]
            for p in range(Lp[i], p2):
                Y[Li[p]] -= Lx[p] * yi
            lki = yi / D[i]
            d -= lki * yi
            Li[p2] = k
            Lx[p2] = lki
            filled[i] += 1
        if d < delta:
            shifted = d + delta
            if shifted <= 0.0:
                raise IndefiniteMatrix(int(perm[k]), d)
            d = shifted
            regularized.append(int(perm[k]))
        D[k] = d

    if regularized:
        logger.debug(f"Shifted {len(regularized)} pivots by {delta:.2e} while factorizing a {n}x{n} matrix")

    strict_lower = sp.csc_matrix((np.asarray(Lx), np.asarray(Li), np.asarray(Lp)), shape=(n, n))
    lower = (strict_lower + sp.identity(n, format='csc')).tocsr()
    lower.sort_indices()
    return SymmetricFactorization(
        perm=perm,
        lower=lower,
        diagonal=np.asarray(D),
        fingerprint=fingerprint,
        regularized=tuple(regularized),
    )


def solve_factored(F: SymmetricFactorization, r: np.ndarray) -> np.ndarray:
    """Permuted forward/diagonal/backward substitution."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (F.dim,):
        raise DimensionMismatch(f"Right-hand side of shape {r.shape} does not match factor of order {F.dim}")
    if F.dim == 0:
        return r.copy()
    y = spsolve_triangular(F.lower, r[F.perm], lower=True, unit_diagonal=True)
    y = y / F.diagonal
    x = spsolve_triangular(F.upper, y, lower=False, unit_diagonal=True)
    s = np.empty_like(x)
    s[F.perm] = x
    return s
