"""Mesh refinement at fixed box size: eigenvalue-growth and heat-trace slopes.

    python3 scripts/convergence_study.py --R 20 --n 401 801 1601 4001
"""

import argparse

import numpy as np

from fracheat import FracParams, GridSpec, PowerWeight, build_grid
from fracheat.operator import assemble_form
from fracheat.spectral import fit_eigen_growth, fit_trace_exponent, heat_trace, solve_spectrum


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--R", type=float, default=20.0)
    ap.add_argument("--n", type=int, nargs="+", default=[401, 801, 1601])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=1.5)
    args = ap.parse_args(argv)
    frac = FracParams(args.alpha, 1)
    ts = np.geomspace(0.05, 1.0, 20)
    print(f"{'n':>6} {'h':>8} {'growth slope':>13} {'max/min':>8} {'trace slope':>12}")
    for n in args.n:
        g = build_grid(GridSpec(1, args.R, n))
        spec = solve_spectrum(assemble_form(g, frac, PowerWeight(args.beta)))
        fit = fit_eigen_growth(spec, 10, 100)
        theta, _ = fit_trace_exponent(ts, heat_trace(spec, ts))
        print(f"{n:6d} {g.h:8.4f} {fit.slope:13.4f} {fit.ratio_spread:8.3f} {-theta:12.4f}")
    print(f"targets: growth {args.alpha:.3f}, trace {-1 / args.alpha:.3f}")


if __name__ == "__main__":
    main()
