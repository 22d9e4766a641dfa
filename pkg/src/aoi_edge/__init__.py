"""Age of information in a two-hop preemptive edge-computing system."""
from .amc import AoiResult, aoi_distribution, aoi_mean, build_amc, build_rmc, initial_vector, solve_tagged_aoi
from .des import SimEstimate, empirical_pdf, simulate
from .interference import METHODS, build_interference
from .mmpp import (
    MarkovArrivalModel,
    dedicated_server_departure_map,
    dedicated_server_model,
    rate_statistics,
    reduce_two_state,
    stationary_vector,
    superpose,
)
from .scenario import Scenario

__all__ = [
    "AoiResult", "MarkovArrivalModel", "METHODS", "Scenario", "SimEstimate",
    "aoi_distribution", "aoi_mean", "build_amc", "build_interference", "build_rmc",
    "dedicated_server_departure_map", "dedicated_server_model", "empirical_pdf",
    "initial_vector", "rate_statistics", "reduce_two_state", "simulate",
    "solve_tagged_aoi", "stationary_vector", "superpose",
]
