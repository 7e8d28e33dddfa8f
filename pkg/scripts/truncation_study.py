"""Box-size growth at fixed spacing: ground-state decay and Riesz residual profile.

The decay fit uses a fixed annulus, so boxes must satisfy R >= 2 * r_hi.

    python3 scripts/truncation_study.py --h 0.1 --R 200 400 --window 25 100
"""

import argparse

import numpy as np

from fracheat import FracParams, GridSpec, PowerWeight, build_grid
from fracheat.operator import assemble_form
from fracheat.riesz import annulus_means, fit_decay, riesz_kernel, riesz_residual
from fracheat.spectral import solve_spectrum

FRACTIONS = np.array([0.0, 0.05, 0.125, 0.25, 0.5])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.1)
    ap.add_argument("--R", type=float, nargs="+", default=[200.0, 400.0])
    ap.add_argument("--window", type=float, nargs=2, default=[25.0, 100.0])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=1.5)
    args = ap.parse_args(argv)
    frac = FracParams(args.alpha, 1)
    cols = " ".join(f"{f'<{b:g}R':>8}" for b in FRACTIONS[1:])
    print(f"decay window [{args.window[0]:g}, {args.window[1]:g}]")
    print(f"{'R':>6} {'decay slope':>12}   residual by |x|/R: {cols}")
    for R in args.R:
        n = int(round(2 * R / args.h)) + 1
        g = build_grid(GridSpec(1, R, n))
        op = assemble_form(g, frac, PowerWeight(args.beta))
        spec = solve_spectrum(op, k=1, backend="arpack")
        phi = spec.phis[:, 0]
        fit = fit_decay(phi, g, tuple(args.window))
        res = riesz_residual(phi, spec.lambdas[0], riesz_kernel(op))
        means = annulus_means(res.profile, g.radii, FRACTIONS * R)
        prof = " ".join(f"{m:8.3f}" for m in means)
        print(f"{R:6g} {fit.slope:12.4f}   {' ' * 18} {prof}")
    print(f"decay target {args.alpha - 1:.3f}")


if __name__ == "__main__":
    main()
