"""Run the reference acceptance criteria and print one line per criterion.

    python3 scripts/run_reference.py --only 1 3 --paths 20000
"""

import argparse
import os

from fracheat.acceptance import ReferenceCache, run_all


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", type=int, nargs="*")
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args(argv)
    results = run_all(ReferenceCache(mc_paths=args.paths, workers=args.workers), only=args.only)
    for r in results:
        print(r.line(), flush=True)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
