"""
Command-line front end.

    aoi-edge solve    --config run.json [--method exact,mmpp2] [--out results.csv]
    aoi-edge simulate --config run.json [--seed 7] [--min-delivered 1000000]
    aoi-edge sweep    --config sweep.json | --delta 0.2 --n-min 3 --n-max 11
    aoi-edge compare  --config run-or-sweep.json [--seed 7]

Results go to CSV (schema ``aoi-csv-v1``); the tagged source's mean AoI is
printed to stdout.  Worker threads for sweeps and comparisons come from
``AOI_EDGE_THREADS``.

Trace CSV (``simulate --trace``): columns ``time, source, event_kind,
aoi_after`` with ``event_kind`` one of ``arrival`` (packet generated at its
transmitter), ``transmit`` (transmitter completion, packet moves to the edge
server) and ``deliver`` (edge completion); ``source`` is 1-based and
``aoi_after`` is that source's AoI right after the event.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings

from . import experiments as ex
from .des import capture_trace, write_trace_csv
from .mmpp import ModelError
from .numerics import NumericalError
from .scenario import ScenarioError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

logger = logging.getLogger("aoi_edge")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig or SweepSpec")
    common.add_argument("--out", help="results CSV path")
    common.add_argument("--seed", type=int, help="simulation seed")
    common.add_argument("--method", help="comma-separated methods")
    common.add_argument("--state-cap", type=int, help="largest exact interference order")
    common.add_argument("--tagged", type=int, help="tagged source (1-based)")
    common.add_argument("--min-delivered", type=int, help="tagged deliveries per simulation")
    common.add_argument("--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="aoi-edge", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", parents=[common], help="analytic AoI of the tagged source")
    solve.add_argument("--pdf-out", help="write the AoI pdf/cdf grid here")
    sim = sub.add_parser("simulate", parents=[common], help="discrete-event estimate")
    sim.add_argument("--trace", help="write an event trace CSV of a short run here")
    sim.add_argument("--trace-horizon", type=float, default=100.0)
    sw = sub.add_parser("sweep", parents=[common], help="mean AoI over a range of N")
    sw.add_argument("--delta", type=float, help="transmitter heterogeneity step")
    sw.add_argument("--n-min", type=int)
    sw.add_argument("--n-max", type=int)
    cmp_ = sub.add_parser("compare", parents=[common], help="analytic methods against the simulator")
    cmp_.add_argument("--delta", type=float, nargs="+", help="sweep deltas (sweep configs only)")
    return p


def _run_config(args, method_default=None) -> ex.RunConfig:
    if not args.config:
        raise ex.ConfigError("--config is required")
    obj = ex.load_json(args.config)
    scen = dict(obj.get("scenario", {}))
    if args.tagged is not None:
        scen["tagged"] = args.tagged
    return ex.RunConfig.from_dict(
        {**obj, "scenario": scen},
        method=args.method or method_default,
        output_path=args.out,
        pdf_output_path=getattr(args, "pdf_out", None),
        seed=args.seed,
        state_cap=args.state_cap,
        min_delivered=args.min_delivered,
    )


def _sweep_spec(args, obj=None) -> ex.SweepSpec:
    obj = dict(obj if obj is not None else (ex.load_json(args.config) if args.config else {}))
    if getattr(args, "n_min", None) is not None or getattr(args, "n_max", None) is not None:
        lo, hi = obj.get("n_range", (3, 11))
        obj["n_range"] = (args.n_min if args.n_min is not None else lo, args.n_max if args.n_max is not None else hi)
    delta = getattr(args, "delta", None)
    return ex.SweepSpec.from_dict(
        obj,
        delta_het=delta if not isinstance(delta, list) else None,
        methods=args.method,
        tagged=args.tagged,
        state_cap=args.state_cap,
        output_path=args.out,
    )


def _cmd_solve(args) -> int:
    cfg = _run_config(args)
    rows = ex.run(cfg, verbose=args.verbose)
    for row in rows:
        print(f"{row['method']}\t{row['mean_aoi']!r}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _run_config(args, method_default="simulate")
    if cfg.method != ("simulate",):
        raise ex.ConfigError("simulate runs method 'simulate' only")
    rows = ex.run(cfg)
    row = rows[0]
    print(f"simulate\t{row['mean_aoi']!r}\t+/- {row['half_width_95']!r}")
    if args.trace:
        write_trace_csv(capture_trace(cfg.scenario, args.trace_horizon, cfg.seed), args.trace)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = _sweep_spec(args)
    rows = ex.sweep(spec)
    print(ex.format_table(ex.SWEEP_COLUMNS, rows))
    return EXIT_OK


def _cmd_compare(args) -> int:
    obj = ex.load_json(args.config) if args.config else {}
    methods = args.method or "exact,map-exact"
    seed = args.seed if args.seed is not None else obj.pop("seed", 0)
    min_delivered = args.min_delivered or obj.pop("min_delivered", ex.DEFAULT_MIN_DELIVERED)
    if "scenario" in obj:
        target = _run_config(args)
        seed, min_delivered = target.seed, target.min_delivered
    else:
        deltas = args.delta or obj.pop("deltas", None) or [obj.get("delta_het", 0.2)]
        target = []
        for d in deltas:
            spec_args = argparse.Namespace(**{**vars(args), "out": None, "method": None, "delta": None})
            target.append(_sweep_spec(spec_args, {**obj, "delta_het": d}))
    rows = ex.compare(target, methods, seed, min_delivered, args.out)
    print(ex.format_table(ex.COMPARE_COLUMNS, rows))
    return EXIT_OK


COMMANDS = {"solve": _cmd_solve, "simulate": _cmd_simulate, "sweep": _cmd_sweep, "compare": _cmd_compare}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            return COMMANDS[args.command](args)
        except (ex.ConfigError, ScenarioError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except OSError as exc:
            print(f"I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
        except (ModelError, NumericalError, ArithmeticError) as exc:
            print(f"numerical error: {exc}", file=sys.stderr)
            return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
