"""
Mean AoI of source 1 against N for the two heterogeneity settings.

Writes ``sweep_delta<d>.csv`` per delta into the output directory and prints
the mean relative deviation of each approximation from the exact model.

    python3 scripts/run_sweeps.py --out results/
"""
import argparse
from pathlib import Path

import numpy as np

from aoi_edge import experiments as ex


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--out", default="results")
    p.add_argument("--deltas", type=float, nargs="+", default=[0.2, 1.0])
    p.add_argument("--n-max", type=int, default=11)
    p.add_argument("--methods", default="poisson,mmpp2,exact,map-exact")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for delta in args.deltas:
        spec = ex.SweepSpec(n_range=(3, args.n_max), delta_het=delta, methods=args.methods,
                            output_path=str(out / f"sweep_delta{delta:g}.csv"))
        rows = ex.sweep(spec)
        print(f"delta = {delta:g}")
        print(ex.format_table(ex.SWEEP_COLUMNS, rows))
        exact = {r["N"]: r["mean_aoi"] for r in rows if r["method"] == "exact" and r["status"] == "ok"}
        for m in spec.methods:
            if m == "exact":
                continue
            devs = [abs(r["mean_aoi"] - exact[r["N"]]) / exact[r["N"]]
                    for r in rows if r["method"] == m and r["status"] == "ok" and r["N"] in exact]
            if devs:
                print(f"  {m:>9s} vs exact: mean |rel dev| {np.mean(devs):.4f}")
        print()


if __name__ == "__main__":
    main()
