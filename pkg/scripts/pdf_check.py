"""
Analytic AoI pdf of source 1 next to a time-weighted simulation histogram.

    python3 scripts/pdf_check.py --n 3 --delta 0.2 --method map-exact
"""
import argparse

import numpy as np

from aoi_edge.amc import aoi_distribution, prepare_amc
from aoi_edge.des import empirical_pdf
from aoi_edge.scenario import Scenario


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--method", default="map-exact")
    p.add_argument("--bins", type=int, default=60)
    p.add_argument("--horizon", type=float, default=2e6)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()

    scen = Scenario.heterogeneous(args.n, args.delta)
    hist = empirical_pdf(scen, args.bins, args.horizon, args.seed)
    amc, _ = prepare_amc(scen, args.method)
    cdf = aoi_distribution(amc, hist.edges[:-1]).cdf
    analytic = np.append(np.diff(cdf), 1.0 - cdf[-1])
    print(f"{'bin':>16s}  {'simulated':>10s}  {'analytic':>10s}")
    for k in range(args.bins):
        lo, hi = hist.edges[k], hist.edges[k + 1]
        print(f"[{lo:6.2f}, {hi:6.2f})  {hist.masses[k]:10.5f}  {analytic[k]:10.5f}")
    print(f"L1 distance {np.abs(hist.masses - analytic).sum():.4f}")


if __name__ == "__main__":
    main()
