"""System parameters of the two-hop status-update system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    """
    ``N`` Poisson sources, each behind a dedicated bufferless preemptive
    transmitter, feeding one bufferless preemptive edge server.

    ``tagged`` is 1-based.
    """

    n_sources: int
    lambdas: tuple[float, ...]
    mus: tuple[float, ...]
    sigma: float
    tagged: int = 1

    def __post_init__(self):
        lambdas = _broadcast(self.lambdas, self.n_sources, "lambdas")
        mus = _broadcast(self.mus, self.n_sources, "mus")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "mus", mus)
        if self.n_sources < 1:
            raise ScenarioError("n_sources must be >= 1")
        if not all(x > 0 for x in lambdas + mus) or not self.sigma > 0:
            raise ScenarioError("all rates must be positive")
        if not 1 <= self.tagged <= self.n_sources:
            raise ScenarioError(f"tagged source {self.tagged} outside 1..{self.n_sources}")

    @classmethod
    def heterogeneous(
        cls, n: int, delta: float, lam: float = 1.0, sigma: float = 5.0, mu1: float = 1.0, tagged: int = 1
    ) -> "Scenario":
        """Common arrival rate, transmitter rates ``mu1, mu1 + delta, mu1 + 2 delta, ...``."""
        mus = tuple(mu1 + delta * k for k in range(n))
        return cls(n, (lam,) * n, mus, sigma, tagged)

    def with_tagged(self, tagged: int) -> "Scenario":
        return Scenario(self.n_sources, self.lambdas, self.mus, self.sigma, tagged)

    @property
    def others(self) -> list[int]:
        """0-based indices of the non-tagged sources, ascending."""
        return [k for k in range(self.n_sources) if k != self.tagged - 1]

    def to_dict(self) -> dict:
        return {
            "n_sources": self.n_sources,
            "lambdas": list(self.lambdas),
            "mus": list(self.mus),
            "sigma": self.sigma,
            "tagged": self.tagged,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Scenario":
        try:
            return cls(
                int(obj["n_sources"]),
                obj["lambdas"],
                obj["mus"],
                float(obj["sigma"]),
                int(obj.get("tagged", 1)),
            )
        except KeyError as exc:
            raise ScenarioError(f"scenario is missing field {exc}") from None


def _broadcast(values, n: int, name: str) -> tuple[float, ...]:
    if np.isscalar(values):
        return (float(values),) * n
    out = tuple(float(x) for x in values)
    if len(out) != n:
        raise ScenarioError(f"{name} has {len(out)} entries, expected {n}")
    return out
