"""
Markov-modulated arrival processes.

A process is stored as the pair ``(D0, D1)``: ``D0`` holds transitions without
an arrival, ``D1`` transitions accompanied by one.  When ``D1`` is diagonal the
process is an MMPP with modulating generator ``Q = D0 + D1`` and rate matrix
``R = D1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce as _fold

import numpy as np

from .numerics import TOL, as_dense, ctmc_stationary, is_irreducible, kron_sum

DEFAULT_STATE_CAP = 2**20


class ModelError(ValueError):
    """Invalid arrival-process parameters."""


class ReductionInfeasible(ValueError):
    """The two-state fit produced a negative rate; ``params`` holds the raw fit."""

    def __init__(self, message: str, params: "TwoStateReduction"):
        super().__init__(message)
        self.params = params


class DegenerateVariance(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MarkovArrivalModel:
    d0: np.ndarray
    d1: np.ndarray
    is_mmpp: bool = field(init=False)

    def __post_init__(self):
        d0 = as_dense(self.d0).copy()
        d1 = as_dense(self.d1).copy()
        if d0.shape != d1.shape:
            raise ModelError(f"D0 {d0.shape} and D1 {d1.shape} differ in shape")
        off = d0 - np.diag(np.diag(d0))
        if np.any(off < 0) or np.any(d1 < 0):
            raise ModelError("off-diagonal D0 entries and all D1 entries must be non-negative")
        gen = d0 + d1
        if np.any(np.abs(gen.sum(axis=1)) > TOL.row_sum * max(1.0, float(np.abs(gen).max()))):
            raise ModelError("rows of D0 + D1 must sum to zero")
        if not is_irreducible(gen):
            raise ModelError("D0 + D1 is not irreducible")
        d0.setflags(write=False)
        d1.setflags(write=False)
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "is_mmpp", bool(np.all(d1 == np.diag(np.diag(d1)))))

    @classmethod
    def from_mmpp(cls, q, rates) -> "MarkovArrivalModel":
        q = np.asarray(q, dtype=float)
        r = np.diag(np.asarray(rates, dtype=float))
        return cls(q - r, r)

    @classmethod
    def poisson(cls, rate: float) -> "MarkovArrivalModel":
        if rate < 0:
            raise ModelError("Poisson rate must be non-negative")
        return cls(np.array([[-rate]]), np.array([[rate]]))

    @property
    def order(self) -> int:
        return self.d0.shape[0]

    @property
    def generator(self) -> np.ndarray:
        return self.d0 + self.d1

    @property
    def rates(self) -> np.ndarray:
        """Instantaneous arrival rate per modulating state (row sums of D1)."""
        return self.d1.sum(axis=1)

    def to_json(self) -> str:
        return json.dumps({"order": self.order, "d0": self.d0.tolist(), "d1": self.d1.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "MarkovArrivalModel":
        obj = json.loads(text)
        model = cls(np.array(obj["d0"], dtype=float), np.array(obj["d1"], dtype=float))
        if model.order != obj["order"]:
            raise ModelError("order field disagrees with matrix size")
        return model

    def __repr__(self):
        kind = "MMPP" if self.is_mmpp else "MAP"
        return f"MarkovArrivalModel({kind}, order={self.order})"


@dataclass(frozen=True)
class RateStatistics:
    m1: float
    m2: float
    m3: float
    v: float
    tau_c: float | None
    mu3: float | None = None
    """Third central moment; derived from ``m1, m3, v`` when not given."""

    def __post_init__(self):
        if self.mu3 is None:
            object.__setattr__(self, "mu3", self.m3 - 3.0 * self.m1 * self.v - self.m1**3)

    @property
    def degenerate(self) -> bool:
        return self.tau_c is None


@dataclass(frozen=True)
class TwoStateReduction:
    sigma1: float
    sigma2: float
    theta1: float
    theta2: float
    delta_skew: float
    eta: float

    @property
    def feasible(self) -> bool:
        return self.theta2 >= 0.0


def stationary_vector(model: MarkovArrivalModel) -> np.ndarray:
    if not is_irreducible(model.generator):
        raise ModelError("not irreducible")
    return ctmc_stationary(model.generator)


def rate_statistics(model: MarkovArrivalModel) -> RateStatistics:
    """
    Non-central rate moments, variance and time constant of an arrival process.

    The time constant uses the closed form
    ``tau_c = (pi L (e pi - Q)^-1 L e - m1^2) / v`` with ``L = diag(rates)``;
    it is ``None`` when the rate variance is negligible (``v <= 1e-12 m1^2``).

    Notes
    -----
    Variance, third central moment and the ``tau_c`` numerator are evaluated
    on the centred rates ``L - m1``.  Since ``(e pi - Q)^-1 e = e`` and
    ``pi (e pi - Q)^-1 = pi`` this is the same closed form, but it avoids the
    cancellation against ``m1^2`` for rarely visited rate states.
    """
    pi = stationary_vector(model)
    lam = model.rates
    m1, m2, m3 = (float(pi @ lam**j) for j in (1, 2, 3))
    dev = lam - m1
    v = float(pi @ dev**2)
    if v <= 1e-12 * m1 * m1 or v <= 0.0:
        return RateStatistics(m1, m2, m3, max(v, 0.0), None, float(pi @ dev**3))
    n = model.order
    a = np.outer(np.ones(n), pi) - model.generator
    x = np.linalg.solve(a, dev)
    tau_c = float((pi * dev) @ x) / v
    return RateStatistics(m1, m2, m3, v, tau_c, float(pi @ dev**3))


def superpose(models, state_cap: int = DEFAULT_STATE_CAP) -> MarkovArrivalModel:
    """
    Superposition of independent arrival processes via Kronecker sums.

    The first model in the list is the slowest-varying factor of the product
    state index.
    """
    models = list(models)
    if not models:
        raise ModelError("superpose needs at least one model")
    order = math.prod(m.order for m in models)
    if order > state_cap:
        raise ModelError(f"state space too large ({order} > cap {state_cap})")
    d0 = _fold(kron_sum, [m.d0 for m in models])
    d1 = _fold(kron_sum, [m.d1 for m in models])
    return MarkovArrivalModel(d0, d1)


# rounding noise on theta2 below this (relative to m1) is treated as an exact zero
_THETA2_ROUNDING = 1e-12


def two_state_parameters(stats: RateStatistics) -> TwoStateReduction:
    if stats.degenerate:
        raise DegenerateVariance("rate variance zero; use Poisson model")
    m1, v, tau = stats.m1, stats.v, stats.tau_c
    delta = stats.mu3 / v**1.5
    # eta = 1 + (delta/2)(delta - sqrt(4 + delta^2)), rearranged so that
    # neither branch subtracts nearly equal numbers
    root = math.sqrt(4.0 + delta * delta)
    eta = 4.0 / (root + delta) ** 2 if delta >= 0 else (root - delta) ** 2 / 4.0
    sigma1 = 1.0 / (tau * (1.0 + eta))
    sigma2 = eta / (tau * (1.0 + eta))
    theta1 = m1 + math.sqrt(v / eta)
    theta2 = m1 - math.sqrt(v * eta)
    if -_THETA2_ROUNDING * max(m1, 1.0) <= theta2 < 0.0:
        theta2 = 0.0
    return TwoStateReduction(sigma1, sigma2, theta1, theta2, delta, eta)


def reduce_two_state(model: MarkovArrivalModel) -> tuple[MarkovArrivalModel, TwoStateReduction]:
    """
    Two-state MMPP matching ``m1, m2, m3`` and ``tau_c`` of ``model``.

    Raises
    ------
    DegenerateVariance
        For an effectively Poisson input.
    ReductionInfeasible
        If the fitted low-rate state would have a negative rate.
    """
    params = two_state_parameters(rate_statistics(model))
    if not params.feasible:
        raise ReductionInfeasible(
            f"reduction infeasible (negative rate theta2={params.theta2:.6g})", params
        )
    q = np.array([[-params.sigma1, params.sigma1], [params.sigma2, -params.sigma2]])
    return MarkovArrivalModel.from_mmpp(q, [params.theta1, params.theta2]), params


def _check_rates(lam: float, mu: float):
    if not (lam > 0 and mu > 0):
        raise ModelError(f"rates must be positive (lambda={lam}, mu={mu})")


def dedicated_server_model(lam: float, mu: float) -> MarkovArrivalModel:
    """Departures of a bufferless preemptive server as an MMPP: state 0 idle, state 1 busy."""
    _check_rates(lam, mu)
    return MarkovArrivalModel.from_mmpp([[-lam, lam], [mu, -mu]], [0.0, mu])


def dedicated_server_departure_map(lam: float, mu: float) -> MarkovArrivalModel:
    """Same server with each departure tied to the busy -> idle transition."""
    _check_rates(lam, mu)
    return MarkovArrivalModel(np.array([[-lam, lam], [0.0, -mu]]), np.array([[0.0, 0.0], [mu, 0.0]]))
