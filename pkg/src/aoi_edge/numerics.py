"""
Dense linear-algebra kernels shared by the traffic and AoI modules.

Matrices are plain ``numpy.ndarray`` objects; :func:`as_dense` performs the
validation the rest of the package relies on (2-D, finite, float64).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack


@dataclass(frozen=True)
class Tolerances:
    stationary_residual: float = 1e-10
    uniformization_tail: float = 1e-12
    invariant_check: float = 1e-9
    row_sum: float = 1e-12
    nonzero: float = 1e-14
    solve_residual: float = 1e-9


TOL = Tolerances()

# upper bound on u*dt for one uniformization step; keeps exp(-u*dt) far from underflow
_MAX_UX_STEP = 50.0
# switch the P^k v recursion to CSR when the matrix is at least this sparse
_SPARSE_DENSITY = 0.25


class NumericalError(ArithmeticError):
    """Raised when a linear system is singular or a solve misses its residual bound."""


def as_dense(matrix, square: bool = True) -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("empty matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _lu_factor(a):
    # exact zero pivots are reported by the callers with their own diagnostic
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return sla.lu_factor(a, check_finite=False)


def ctmc_stationary(generator) -> np.ndarray:
    """
    Stationary probability vector of an irreducible CTMC generator.

    One balance equation of ``pi Q = 0`` is replaced by ``pi e = 1`` and the
    resulting system is solved with a dense LU factorization.

    Parameters
    ----------
    generator : array_like
        Square generator matrix (row sums zero, non-negative off-diagonals).

    Returns
    -------
    numpy.ndarray
        Probability vector ``pi``.

    Raises
    ------
    NumericalError
        If the substituted system is singular or the balance residual exceeds
        ``TOL.stationary_residual``.
    """
    q = as_dense(generator)
    n = q.shape[0]
    if n == 1:
        return np.ones(1)
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        lu, piv = _lu_factor(a)
    except (ValueError, sla.LinAlgError) as exc:  # pragma: no cover - lapack rarely raises here
        raise NumericalError("reducible or ill-conditioned generator") from exc
    if np.any(np.abs(np.diag(lu)) <= np.finfo(float).tiny):
        raise NumericalError("reducible or ill-conditioned generator")
    pi = sla.lu_solve((lu, piv), b, check_finite=False)
    pi = np.where(np.abs(pi) < TOL.nonzero, 0.0, pi)
    if np.any(pi < -TOL.stationary_residual):
        raise NumericalError("reducible or ill-conditioned generator (negative stationary mass)")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    scale = max(1.0, float(np.abs(q).max()))
    resid = float(np.abs(pi @ q).max())
    if resid > TOL.stationary_residual * scale:
        raise NumericalError(f"reducible or ill-conditioned generator (residual {resid:.3e})")
    return pi


class LinearSolver:
    """LU factorization of a square matrix, reusable for ``A x = b`` and ``x A = b``."""

    def __init__(self, matrix):
        self.matrix = as_dense(matrix)
        self._lu = _lu_factor(self.matrix)
        self._check_pivots()

    def _rcond(self) -> float:
        lu = self._lu[0]
        anorm = float(np.abs(self.matrix).sum(axis=0).max())
        rcond, _ = lapack.dgecon(lu, anorm, norm="1")
        return float(rcond)

    def _check_pivots(self):
        if np.any(np.diag(self._lu[0]) == 0.0):
            raise NumericalError(f"singular matrix (rcond estimate {self._rcond():.3e})")

    def solve(self, rhs, transpose: bool = False) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        x = sla.lu_solve(self._lu, b, trans=1 if transpose else 0, check_finite=False)
        a = self.matrix.T if transpose else self.matrix
        bnorm = float(np.abs(b).max()) if b.size else 0.0
        resid = float(np.abs(a @ x - b).max()) if b.size else 0.0
        if not np.all(np.isfinite(x)) or resid > TOL.solve_residual * max(bnorm, np.finfo(float).tiny):
            raise NumericalError(
                f"solve residual {resid:.3e} exceeds bound (rcond estimate {self._rcond():.3e})"
            )
        return x


def solve_against(matrix, rhs) -> np.ndarray:
    """Solve ``matrix @ x = rhs`` without forming an inverse."""
    return LinearSolver(matrix).solve(rhs)


def _uniformization_operator(s: np.ndarray):
    u = float(np.max(-np.diag(s)))
    if u <= 0.0:
        return 0.0, None
    density = np.count_nonzero(s) / s.size
    op = sp.csr_matrix(s) if density < _SPARSE_DENSITY and s.shape[0] > 64 else s
    return u, op


def _uniformized_step(op, u: float, dt: float, v: np.ndarray) -> np.ndarray:
    # sum_k Pois(k; u dt) P^k v with P = I + S/u
    ux = u * dt
    weight = math.exp(-ux)
    term = v.copy()
    acc = weight * term
    mass = weight
    k = 0
    kmax = int(ux + 12.0 * math.sqrt(ux) + 40)
    while 1.0 - mass > TOL.uniformization_tail and k < kmax:
        k += 1
        term = term + (op @ term) / u
        weight *= ux / k
        acc += weight * term
        mass += weight
    return acc


def _propagate(op, u: float, x: float, v: np.ndarray) -> np.ndarray:
    if x == 0.0 or op is None:
        return v.copy()
    nsteps = max(1, math.ceil(u * x / _MAX_UX_STEP))
    dt = x / nsteps
    out = v
    for _ in range(nsteps):
        out = _uniformized_step(op, u, dt, out)
    return out


def expm_action(sub_generator, x: float, v) -> np.ndarray:
    """
    ``exp(S x) v`` for a sub-generator ``S`` by uniformization.

    Long horizons are split into steps with ``u * dt <= 50`` so the Poisson
    weights never underflow; each step truncates once the remaining Poisson
    mass drops below ``TOL.uniformization_tail``.
    """
    if x < 0:
        raise ValueError(f"time argument must be non-negative, got {x}")
    s = as_dense(sub_generator)
    vec = np.asarray(v, dtype=float)
    u, op = _uniformization_operator(s)
    return _propagate(op, u, float(x), vec)


def iter_expm_action(sub_generator, grid, v):
    """
    Yield ``exp(S x_k) v`` for every point of an ascending grid.

    Each point is reached by propagating from the previous one, so the cost is
    governed by the largest abscissa rather than the number of points.
    """
    xs = np.asarray(grid, dtype=float)
    if xs.ndim != 1 or xs.size == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    if xs[0] < 0 or np.any(np.diff(xs) < 0):
        raise ValueError("grid must be non-negative and ascending")
    s = as_dense(sub_generator)
    cur = np.asarray(v, dtype=float).copy()
    u, op = _uniformization_operator(s)
    prev = 0.0
    for x in xs:
        cur = _propagate(op, u, float(x - prev), cur)
        prev = x
        yield cur


def expm_action_grid(sub_generator, grid, v) -> np.ndarray:
    """Stacked :func:`iter_expm_action` output, shape ``(len(grid), len(v))``."""
    return np.array(list(iter_expm_action(sub_generator, grid, v)))


def is_irreducible(generator, tol: float = TOL.nonzero) -> bool:
    """Strong connectivity of the off-diagonal sparsity pattern (two DFS passes from state 0)."""
    q = np.asarray(generator, dtype=float)
    n = q.shape[0]
    if n == 1:
        return True
    adj = np.abs(q) > tol
    np.fill_diagonal(adj, False)

    def reaches_all(a: np.ndarray) -> bool:
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            node = stack.pop()
            nxt = np.flatnonzero(a[node] & ~seen)
            seen[nxt] = True
            stack.extend(nxt.tolist())
        return bool(seen.all())

    return reaches_all(adj) and reaches_all(adj.T)


def kron_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker sum ``A (+) B = A x I + I x B``; ``a`` is the slow-varying factor."""
    return np.kron(a, np.eye(b.shape[0])) + np.kron(np.eye(a.shape[0]), b)
