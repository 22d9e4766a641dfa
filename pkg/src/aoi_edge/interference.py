"""Models of the traffic the other sources present at the edge server."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

from .mmpp import (
    DEFAULT_STATE_CAP,
    DegenerateVariance,
    MarkovArrivalModel,
    ModelError,
    ReductionInfeasible,
    dedicated_server_departure_map,
    dedicated_server_model,
    reduce_two_state,
    superpose,
)
from .scenario import Scenario

logger = logging.getLogger(__name__)

METHODS = ("poisson", "mmpp2", "exact", "map-exact")


@dataclass(frozen=True)
class Interference:
    model: MarkovArrivalModel
    method: str
    fallback: str | None = None

    @property
    def order(self) -> int:
        return self.model.order


def poisson_rate(scenario: Scenario) -> float:
    # sum of per-transmitter departure rates lambda mu / (lambda + mu); O(N)
    return sum(
        scenario.lambdas[k] * scenario.mus[k] / (scenario.lambdas[k] + scenario.mus[k])
        for k in scenario.others
    )


def exact_order(scenario: Scenario) -> int:
    return 2 ** len(scenario.others)


def build_interference(scenario: Scenario, method: str, state_cap: int = DEFAULT_STATE_CAP) -> Interference:
    """
    Interference seen by the tagged source under one of the modelling methods.

    ``poisson`` matches the mean departure rate only, ``mmpp2`` is the
    two-state reduction of the exact superposition, ``exact`` is the full
    superposition of per-transmitter MMPPs and ``map-exact`` superposes the
    departure MAPs, whose events coincide with busy -> idle transitions.

    A failed two-state reduction falls back to ``poisson`` with a warning and
    the fallback recorded on the result.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    others = scenario.others
    if not others:
        return Interference(MarkovArrivalModel.poisson(0.0), method)
    if method == "poisson":
        return Interference(MarkovArrivalModel.poisson(poisson_rate(scenario)), method)
    if exact_order(scenario) > state_cap:
        raise ModelError(f"state space too large ({exact_order(scenario)} > cap {state_cap})")
    if method == "map-exact":
        parts = [dedicated_server_departure_map(scenario.lambdas[k], scenario.mus[k]) for k in others]
        return Interference(superpose(parts, state_cap), method)
    exact = superpose([dedicated_server_model(scenario.lambdas[k], scenario.mus[k]) for k in others], state_cap)
    if method == "exact":
        return Interference(exact, method)
    try:
        reduced, _ = reduce_two_state(exact)
    except (ReductionInfeasible, DegenerateVariance) as exc:
        msg = f"two-state reduction failed ({exc}); using Poisson interference"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        logger.warning(msg)
        return Interference(MarkovArrivalModel.poisson(poisson_rate(scenario)), method, "poisson-fallback")
    return Interference(reduced, method)
