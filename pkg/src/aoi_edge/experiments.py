"""
Run configurations, N-sweeps and analytic-vs-simulation comparisons.

All artifacts are CSV files whose first line is the schema tag
``# aoi-csv-v1`` followed by a column header.  Floats are written with
``repr`` so analytic results are byte-reproducible.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .amc import aoi_distribution, aoi_mean, prepare_amc
from .des import simulate
from .interference import METHODS, exact_order
from .mmpp import ModelError
from .scenario import Scenario, ScenarioError

logger = logging.getLogger(__name__)

SCHEMA_TAG = "aoi-csv-v1"
RUN_METHODS = METHODS + ("simulate",)
DEFAULT_STATE_CAP = 1024
DEFAULT_MIN_DELIVERED = 100_000
THREADS_ENV = "AOI_EDGE_THREADS"

RUN_COLUMNS = ("method", "n_sources", "tagged", "interference_order", "mean_aoi",
               "half_width_95", "delivered", "seed", "note")
SWEEP_COLUMNS = ("N", "method", "interference_order", "mean_aoi", "wall_time_ms", "status", "note")
COMPARE_COLUMNS = ("delta", "N", "method", "mean_aoi", "half_width_95", "rel_dev_vs_sim", "within_ci")
PDF_COLUMNS = ("x", "pdf", "cdf")


class ConfigError(ValueError):
    pass


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None


def _methods(value, allowed) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [m.strip() for m in value.split(",") if m.strip()]
    out = tuple(value)
    bad = [m for m in out if m not in allowed]
    if not out or bad:
        raise ConfigError(f"unknown method(s) {bad or out}; expected a subset of {allowed}")
    return out


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    method: tuple[str, ...] = ("exact",)
    pdf_grid: tuple[float, ...] | None = None
    output_path: str | None = None
    pdf_output_path: str | None = None
    seed: int = 0
    min_delivered: int = DEFAULT_MIN_DELIVERED
    state_cap: int = DEFAULT_STATE_CAP

    def __post_init__(self):
        object.__setattr__(self, "method", _methods(self.method, RUN_METHODS))
        if self.min_delivered < 1:
            raise ConfigError("min_delivered must be >= 1")
        if self.pdf_grid is not None:
            grid = tuple(float(x) for x in self.pdf_grid)
            if not grid or grid[0] < 0 or any(b < a for a, b in zip(grid, grid[1:])):
                raise ConfigError("pdf_grid must be non-empty, non-negative and ascending")
            object.__setattr__(self, "pdf_grid", grid)
        needs_exact = any(m in ("exact", "map-exact", "mmpp2") for m in self.method)
        if needs_exact and exact_order(self.scenario) > self.state_cap:
            raise ConfigError(
                f"exact interference has {exact_order(self.scenario)} states, above state cap {self.state_cap}"
            )

    @classmethod
    def from_dict(cls, obj: dict, **overrides) -> "RunConfig":
        obj = {**obj, **{k: v for k, v in overrides.items() if v is not None}}
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown RunConfig field(s): {sorted(extra)}")
        if "scenario" not in obj:
            raise ConfigError("RunConfig needs a scenario")
        scen = obj["scenario"]
        try:
            scenario = scen if isinstance(scen, Scenario) else Scenario.from_dict(scen)
        except (ScenarioError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(**{**obj, "scenario": scenario})


@dataclass(frozen=True)
class SweepSpec:
    n_range: tuple[int, int] = (3, 11)
    delta_het: float = 0.2
    lambda_common: float = 1.0
    sigma: float = 5.0
    mu1: float = 1.0
    methods: tuple[str, ...] = ("poisson", "mmpp2", "exact")
    tagged: int = 1
    state_cap: int = DEFAULT_STATE_CAP
    output_path: str | None = None

    def __post_init__(self):
        lo, hi = (int(x) for x in self.n_range)
        if not 2 <= lo <= hi <= 20:
            raise ConfigError(f"n_range {self.n_range} must lie within [2, 20]")
        if self.delta_het < 0:
            raise ConfigError("delta_het must be >= 0")
        object.__setattr__(self, "n_range", (lo, hi))
        object.__setattr__(self, "methods", _methods(self.methods, METHODS))

    @property
    def ns(self) -> range:
        return range(self.n_range[0], self.n_range[1] + 1)

    def scenario(self, n: int) -> Scenario:
        return Scenario.heterogeneous(n, self.delta_het, self.lambda_common, self.sigma, self.mu1, self.tagged)

    @classmethod
    def from_dict(cls, obj: dict, **overrides) -> "SweepSpec":
        obj = {**obj, **{k: v for k, v in overrides.items() if v is not None}}
        extra = set(obj) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown SweepSpec field(s): {sorted(extra)}")
        try:
            return cls(**obj)
        except (TypeError, ScenarioError) as exc:
            raise ConfigError(str(exc)) from None


def load_json(path) -> dict:
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a JSON object")
    return obj


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {SCHEMA_TAG}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {SCHEMA_TAG}":
        raise ConfigError("missing aoi-csv-v1 schema tag")
    return list(csv.DictReader(lines[1:]))


def read_csv(path) -> list[dict]:
    return parse_csv(Path(path).read_text())


def write_text(path, text: str):
    Path(path).write_text(text)


def _analytic_row(cfg: RunConfig, method: str):
    amc, intf = prepare_amc(cfg.scenario, method, cfg.state_cap)
    want_pdf = cfg.pdf_output_path is not None or cfg.pdf_grid is not None
    res = aoi_distribution(amc, cfg.pdf_grid) if want_pdf else None
    mean = res.mean if res is not None else aoi_mean(amc)
    row = {
        "method": method,
        "n_sources": cfg.scenario.n_sources,
        "tagged": cfg.scenario.tagged,
        "interference_order": intf.order,
        "mean_aoi": mean,
        "note": intf.fallback or "",
    }
    return row, res, amc


def _simulate_row(cfg: RunConfig, replication: int = 0):
    est = simulate(cfg.scenario, cfg.min_delivered, cfg.seed, replication)
    k = cfg.scenario.tagged - 1
    row = {
        "method": "simulate",
        "n_sources": cfg.scenario.n_sources,
        "tagged": cfg.scenario.tagged,
        "mean_aoi": float(est.per_source_mean_aoi[k]),
        "half_width_95": float(est.half_width_95[k]),
        "delivered": int(est.delivered_counts[k]),
        "seed": cfg.seed,
        "note": f"sim_time={est.sim_time!r}",
    }
    return row, est


def _pdf_path(cfg: RunConfig, method: str, analytic: list[str]) -> str | None:
    base = cfg.pdf_output_path
    if base is None and cfg.pdf_grid is not None and cfg.output_path is not None:
        base = str(Path(cfg.output_path).with_suffix("")) + ".pdf.csv"
    if base is None:
        return None
    if len(analytic) == 1:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}.{method}{p.suffix}"))


def run(cfg: RunConfig, verbose: bool = False) -> list[dict]:
    """
    Solve and/or simulate one configuration; writes the results CSV (and pdf
    CSVs) when paths are configured and returns the result rows.
    """
    rows = []
    analytic = [m for m in cfg.method if m != "simulate"]
    for method in cfg.method:
        if method == "simulate":
            row, _ = _simulate_row(cfg)
            rows.append(row)
            continue
        row, res, amc = _analytic_row(cfg, method)
        rows.append(row)
        path = _pdf_path(cfg, method, analytic)
        if res is not None and path is not None:
            write_text(path, to_csv(PDF_COLUMNS, [
                {"x": x, "pdf": p, "cdf": c} for x, p, c in zip(res.grid, res.pdf, res.cdf)
            ]))
        if verbose and cfg.output_path is not None:
            dump = str(Path(cfg.output_path).with_suffix("")) + f".{method}.amc.json"
            write_text(dump, amc.to_json())
    if cfg.output_path is not None:
        write_text(cfg.output_path, to_csv(RUN_COLUMNS, rows))
    return rows


def _sweep_point(spec: SweepSpec, n: int, method: str) -> dict:
    scenario = spec.scenario(n)
    row = {"N": n, "method": method}
    if method != "poisson" and exact_order(scenario) > spec.state_cap:
        row.update(status="skipped", note=f"order {exact_order(scenario)} > state cap {spec.state_cap}")
        return row
    t0 = time.perf_counter()
    try:
        amc, intf = prepare_amc(scenario, method, spec.state_cap)
        mean = aoi_mean(amc)
    except (ModelError, ArithmeticError, MemoryError) as exc:
        row.update(status="failed", note=str(exc))
        return row
    row.update(
        interference_order=intf.order,
        mean_aoi=mean,
        wall_time_ms=round(1000.0 * (time.perf_counter() - t0), 3),
        status="ok",
        note=intf.fallback or "",
    )
    return row


def sweep(spec: SweepSpec) -> list[dict]:
    """
    Mean AoI of the tagged source for every ``(N, method)``.

    Points run on ``AOI_EDGE_THREADS`` worker threads; rows come back in
    ``(N, method)`` order regardless of completion order.
    """
    tasks = [(n, m) for n in spec.ns for m in spec.methods]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        rows = list(pool.map(lambda nm: _sweep_point(spec, *nm), tasks))
    if spec.output_path is not None:
        write_text(spec.output_path, to_csv(SWEEP_COLUMNS, rows))
    return rows


def _compare_block(scenario: Scenario, methods, seed: int, min_delivered: int, replication: int,
                   state_cap: int, delta=None) -> list[dict]:
    est = simulate(scenario, min_delivered, seed, replication)
    k = scenario.tagged - 1
    sim_mean = float(est.per_source_mean_aoi[k])
    half = float(est.half_width_95[k])
    base = {"delta": delta, "N": scenario.n_sources}
    rows = []
    for method in methods:
        amc, _ = prepare_amc(scenario, method, state_cap)
        mean = aoi_mean(amc)
        rows.append({**base, "method": method, "mean_aoi": mean,
                     "rel_dev_vs_sim": (mean - sim_mean) / sim_mean,
                     "within_ci": abs(mean - sim_mean) <= half})
    rows.append({**base, "method": "simulate", "mean_aoi": sim_mean, "half_width_95": half})
    return rows


def compare(
    target: RunConfig | SweepSpec | list,
    methods=("exact", "map-exact"),
    seed: int = 0,
    min_delivered: int = DEFAULT_MIN_DELIVERED,
    output_path: str | None = None,
) -> list[dict]:
    """
    Analytic means against the simulator for one scenario or across sweeps.

    ``target`` is a :class:`RunConfig`, a :class:`SweepSpec` or a list of
    sweep specs.  Simulation replications are keyed by ``N`` within a sweep
    so every row is reproducible from ``(seed, N)``.
    """
    methods = _methods(methods, METHODS)
    if isinstance(target, RunConfig):
        jobs = [(target.scenario, 0, target.state_cap, None)]
    else:
        specs = target if isinstance(target, list) else [target]
        jobs = [(s.scenario(n), n, s.state_cap, s.delta_het) for s in specs for n in s.ns]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        blocks = list(pool.map(
            lambda job: _compare_block(job[0], methods, seed, min_delivered, job[1], job[2], job[3]), jobs
        ))
    rows = [r for block in blocks for r in block]
    if output_path is not None:
        write_text(output_path, to_csv(COMPARE_COLUMNS, rows))
    return rows


def format_table(columns, rows) -> str:
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return "" if math.isnan(v) else f"{v:.6g}"
        return _fmt(v)

    body = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
