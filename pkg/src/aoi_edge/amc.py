"""
Absorbing-chain AoI analysis for a tagged source.

The absorbing chain starts when a tagged packet ``P*`` is generated and ends
in ``a`` at the first delivery of a tagged packet after ``P*`` was delivered,
or in ``b`` if ``P*`` is lost to preemption.  With ``S`` the sub-generator on
the transient states, ``alpha`` the initial law and ``h`` the indicator of
the post-delivery states, the AoI density is

    f(x) = -alpha exp(S x) h / (alpha S^-1 h)

and its mean ``-alpha S^-2 h / (alpha S^-1 h)``.

State layout (``m`` is the 0-based interference state, ``M`` its order)::

    transmitter-holding  (m, j)_T    2m + j
    edge-holding         (m, i)_E    2M + 2m + i
    post-delivery        (m, i, j)   4M + 4m + 2i + j

``i`` is 1 when the tagged transmitter holds a packet, ``j`` is 1 when the
edge server holds a tagged packet.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .interference import build_interference
from .mmpp import DEFAULT_STATE_CAP, MarkovArrivalModel
from .numerics import TOL, LinearSolver, NumericalError, ctmc_stationary, iter_expm_action
from .scenario import Scenario

TRANSMITTER, EDGE, POST = "TransmitterHolding", "EdgeHolding", "PostDelivery"

PDF_GRID_POINTS = 400
PDF_RESIDUAL_TARGET = 1e-6


@dataclass(frozen=True)
class StateIndex:
    order: int

    @property
    def size(self) -> int:
        return 8 * self.order

    def transmitter(self, m: int, j: int) -> int:
        return 2 * m + j

    def edge(self, m: int, i: int) -> int:
        return 2 * self.order + 2 * m + i

    def post(self, m: int, i: int, j: int) -> int:
        return 4 * self.order + 4 * m + 2 * i + j

    def label(self, k: int) -> tuple:
        """``(class, m, i, j)`` with ``None`` for bits the class does not carry."""
        M = self.order
        if not 0 <= k < 8 * M:
            raise IndexError(k)
        if k < 2 * M:
            return (TRANSMITTER, k // 2, None, k % 2)
        if k < 4 * M:
            k -= 2 * M
            return (EDGE, k // 2, k % 2, None)
        k -= 4 * M
        return (POST, k // 4, (k // 2) % 2, k % 2)


@dataclass(frozen=True, eq=False)
class AmcModel:
    S: np.ndarray
    s: np.ndarray
    u: np.ndarray
    h: np.ndarray
    index: StateIndex
    interference: MarkovArrivalModel
    alpha: np.ndarray | None = None

    @cached_property
    def solver(self) -> LinearSolver:
        return LinearSolver(self.S)

    def to_json(self) -> str:
        """Debug dump: dimensions, state labels and non-zero triplets."""

        def triplets(mat):
            r, c = np.nonzero(mat)
            return [[int(a), int(b), float(mat[a, b])] for a, b in zip(r, c)]

        def nonzero(vec):
            return [[int(k), float(vec[k])] for k in np.flatnonzero(vec)]

        return json.dumps(
            {
                "order": self.index.order,
                "transient_states": self.index.size,
                "labels": [list(self.index.label(k)) for k in range(self.index.size)],
                "S": triplets(self.S),
                "s": nonzero(self.s),
                "u": nonzero(self.u),
                "h": nonzero(self.h),
                "alpha": None if self.alpha is None else nonzero(self.alpha),
            }
        )


@dataclass(frozen=True)
class RmcModel:
    generator: np.ndarray
    order: int

    def index(self, m: int, i: int, j: int) -> int:
        return 4 * m + 2 * i + j


@dataclass(frozen=True, eq=False)
class AoiResult:
    mean: float
    grid: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    normalization_residual: float
    quadrature_mean: float = math.nan
    interference_order: int = 0
    fallback: str | None = None


def _local(shape, entries) -> np.ndarray:
    out = np.zeros(shape)
    for (r, c) in entries:
        out[r, c] = 1.0
    return out


# (i, j) -> (i, 0): the edge occupant is replaced by an interference packet
_KILL_EDGE = _local((4, 4), [(2 * i + j, 2 * i) for i in (0, 1) for j in (0, 1)])
_EDGE_DONE = _local((4, 4), [(2 * i + 1, 2 * i) for i in (0, 1)])
_TAG_ARRIVAL = _local((4, 4), [(j, 2 + j) for j in (0, 1)])
_TAG_TRANSMIT = _local((4, 4), [(2 + j, 1) for j in (0, 1)])


def _check_rates(*rates):
    if not all(r > 0 for r in rates):
        raise ValueError("lambda1, mu1 and sigma must be positive")


def _modulation(model: MarkovArrivalModel) -> np.ndarray:
    d0 = np.array(model.d0)
    np.fill_diagonal(d0, 0.0)
    return d0


def _close_rows(S: np.ndarray, *absorb: np.ndarray):
    # self-loops are dropped; the diagonal balances the row against absorption
    np.fill_diagonal(S, 0.0)
    out = S.sum(axis=1)
    for vec in absorb:
        out = out + vec
    S[np.diag_indices_from(S)] = -out


def _add_kron(block: np.ndarray, left, right: np.ndarray, coeff: float = 1.0):
    """``block += coeff * kron(left, right)`` in place; ``left=None`` means the identity."""
    k, l = right.shape
    for a, b in zip(*np.nonzero(right)):
        w = coeff * right[a, b]
        if left is None:
            rows = np.arange(block.shape[0] // k)
            block[rows * k + a, rows * l + b] += w
        else:
            block[a::k, b::l] += w * left


def build_amc(lambda1: float, mu1: float, sigma: float, interference: MarkovArrivalModel) -> AmcModel:
    """Sub-generator and absorption vectors of the absorbing chain (``alpha`` unset)."""
    _check_rates(lambda1, mu1, sigma)
    M = interference.order
    idx = StateIndex(M)
    n = idx.size
    T, E, P = slice(0, 2 * M), slice(2 * M, 4 * M), slice(4 * M, 8 * M)
    d0 = _modulation(interference)
    d1 = interference.d1
    S = np.zeros((n, n))
    s = np.zeros(n)
    u = np.zeros(n)

    # P* on the tagged transmitter
    _add_kron(S[T, T], d0, np.eye(2))
    _add_kron(S[T, T], d1, np.array([[1.0, 0.0], [1.0, 0.0]]))
    _add_kron(S[T, T], None, np.array([[0.0, 0.0], [1.0, 0.0]]), sigma)
    _add_kron(S[T, E], None, np.array([[1.0, 0.0], [1.0, 0.0]]), mu1)
    u[T] += lambda1

    # P* on the edge server
    _add_kron(S[E, E], d0, np.eye(2))
    _add_kron(S[E, E], None, np.array([[0.0, 1.0], [0.0, 0.0]]), lambda1)
    _add_kron(S[E, P], None, np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]), sigma)
    u[E] += np.kron(d1.sum(axis=1), np.ones(2))
    u[E] += mu1 * np.kron(np.ones(M), np.array([0.0, 1.0]))

    # P* delivered, waiting for the next tagged delivery
    _add_kron(S[P, P], d0, np.eye(4))
    _add_kron(S[P, P], d1, _KILL_EDGE)
    _add_kron(S[P, P], None, _TAG_ARRIVAL, lambda1)
    _add_kron(S[P, P], None, _TAG_TRANSMIT, mu1)
    s[P] += sigma * np.kron(np.ones(M), np.array([0.0, 1.0, 0.0, 1.0]))

    _close_rows(S, s, u)
    h = np.zeros(n)
    h[P] = 1.0
    return AmcModel(S, s, u, h, idx, interference)


def build_rmc(lambda1: float, mu1: float, sigma: float, interference: MarkovArrivalModel) -> RmcModel:
    """Generator of the recurrent chain over ``(m, i, j)``."""
    _check_rates(lambda1, mu1, sigma)
    M = interference.order
    G = np.zeros((4 * M, 4 * M))
    _add_kron(G, _modulation(interference), np.eye(4))
    _add_kron(G, interference.d1, _KILL_EDGE)
    _add_kron(G, None, _EDGE_DONE, sigma)
    _add_kron(G, None, _TAG_ARRIVAL, lambda1)
    _add_kron(G, None, _TAG_TRANSMIT, mu1)
    _close_rows(G)
    return RmcModel(G, M)


def initial_vector(amc: AmcModel, rmc_pi) -> AmcModel:
    """PASTA: ``P*`` starts in ``(m, j)_T`` with probability ``pi(m,0,j) + pi(m,1,j)``."""
    M = amc.index.order
    pi = np.asarray(rmc_pi, dtype=float).reshape(M, 2, 2)
    alpha = np.zeros(amc.index.size)
    alpha[: 2 * M] = (pi[:, 0, :] + pi[:, 1, :]).ravel()
    return replace(amc, alpha=alpha)


def _require_alpha(amc: AmcModel) -> np.ndarray:
    if amc.alpha is None:
        raise ValueError("initial vector not set; call initial_vector first")
    return amc.alpha


def _success_weight(amc: AmcModel) -> tuple[np.ndarray, float]:
    w1 = amc.solver.solve(amc.h)
    c = float(_require_alpha(amc) @ w1)
    if not c < -TOL.nonzero:
        raise NumericalError("tagged source never succeeds")
    return w1, c


def aoi_mean(amc: AmcModel) -> float:
    """Mean AoI from two solves against ``S``."""
    w1, c = _success_weight(amc)
    w2 = amc.solver.solve(w1)
    mean = -float(amc.alpha @ w2) / c
    if not (math.isfinite(mean) and mean > 0):
        raise NumericalError(f"non-positive mean AoI {mean}")
    return mean


def default_grid(mean: float, points: int = PDF_GRID_POINTS) -> np.ndarray:
    return np.concatenate(([0.0], np.geomspace(mean / 100.0, 8.0 * mean, points - 1)))


def _refine(grid: np.ndarray, factor: int) -> np.ndarray:
    pieces = [np.linspace(a, b, factor, endpoint=False) for a, b in zip(grid[:-1], grid[1:])]
    return np.concatenate(pieces + [grid[-1:]])


def aoi_distribution(amc: AmcModel, grid=None, refine: bool = True) -> AoiResult:
    """
    AoI pdf and cdf on ``grid``.

    The cdf is ``1 - alpha S^-1 exp(S x) h / (alpha S^-1 h)``.  The
    normalization residual compares a trapezoid integral of the pdf over the
    grid, completed with the analytic head and tail masses, against one.  When
    no grid is given a default geometric grid is used and, if its residual
    exceeds 1e-6, refined once.
    """
    alpha = _require_alpha(amc)
    mean = aoi_mean(amc)
    w1, c = _success_weight(amc)
    beta = amc.solver.solve(alpha, transpose=True)
    gamma = amc.solver.solve(beta, transpose=True)

    def evaluate(xs):
        proj = np.array([[y @ alpha, y @ beta, y @ gamma] for y in iter_expm_action(amc.S, xs, amc.h)])
        ay, by, gy = proj.T
        pdf = -ay / c
        cdf = 1.0 - by / c
        head = cdf[0]
        tail = 1.0 - cdf[-1]
        residual = abs(head + np.trapezoid(pdf, xs) + tail - 1.0)

        def tail_mean(k):
            return (xs[k] * by[k] - gy[k]) / c

        qmean = (mean - tail_mean(0)) + np.trapezoid(xs * pdf, xs) + tail_mean(-1)
        return pdf, cdf, residual, qmean

    if grid is None:
        xs = default_grid(mean)
        pdf, cdf, residual, qmean = evaluate(xs)
        if refine and residual > PDF_RESIDUAL_TARGET:
            # trapezoid error is O(h^2); aim at a quarter of the target
            factor = min(64, max(2, math.ceil(math.sqrt(residual / (0.25 * PDF_RESIDUAL_TARGET)))))
            xs = _refine(xs, factor)
            pdf, cdf, residual, qmean = evaluate(xs)
    else:
        xs = np.asarray(grid, dtype=float)
        if xs.ndim != 1 or xs.size == 0:
            raise ValueError("empty grid")
        if not np.all(np.isfinite(xs)) or xs[0] < 0 or np.any(np.diff(xs) < 0):
            raise ValueError("grid must be finite, non-negative and ascending")
        pdf, cdf, residual, qmean = evaluate(xs)
    return AoiResult(
        mean=mean,
        grid=xs,
        pdf=pdf,
        cdf=cdf,
        normalization_residual=float(residual),
        quadrature_mean=float(qmean),
        interference_order=amc.index.order,
    )


def prepare_amc(scenario: Scenario, method: str, state_cap: int = DEFAULT_STATE_CAP):
    """Absorbing chain with ``alpha`` set for ``scenario.tagged``; returns ``(amc, interference)``."""
    k = scenario.tagged - 1
    lam, mu, sigma = scenario.lambdas[k], scenario.mus[k], scenario.sigma
    intf = build_interference(scenario, method, state_cap)
    rmc = build_rmc(lam, mu, sigma, intf.model)
    pi = ctmc_stationary(rmc.generator)
    amc = initial_vector(build_amc(lam, mu, sigma, intf.model), pi)
    return amc, intf


def solve_tagged_aoi(
    scenario: Scenario,
    method: str = "exact",
    grid=None,
    with_pdf: bool = True,
    state_cap: int = DEFAULT_STATE_CAP,
) -> AoiResult:
    """
    AoI of ``scenario.tagged`` with the interference built by ``method``.

    With ``with_pdf=False`` only the mean is computed and the grid arrays are
    empty.
    """
    amc, intf = prepare_amc(scenario, method, state_cap)
    if with_pdf:
        res = aoi_distribution(amc, grid)
    else:
        empty = np.empty(0)
        res = AoiResult(aoi_mean(amc), empty, empty, empty, math.nan)
    return replace(res, interference_order=intf.order, fallback=intf.fallback)
