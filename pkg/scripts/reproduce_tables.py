"""Mean and variance of the MLE over the p x alpha simulation grid.

Usage: python scripts/reproduce_tables.py [--reps 100] [--runs 50] [--seed 0] [--out results.tsv]
"""

import argparse
import sys

from resid.simulator import experiment_grid, get_graph

GRID = (0.3, 0.6, 0.9)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--graph", default="fig3-flowchart")
    parser.add_argument("--runs", type=int, default=50)
    parser.add_argument("--reps", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="optional TSV output")
    args = parser.parse_args(argv)

    cells = experiment_grid(get_graph(args.graph), GRID, GRID, args.runs, args.reps, args.seed)
    by_cell = {(c.p, c.alpha): c for c in cells}
    for title, attr in (("mean p_hat", "mean"), ("variance of p_hat", "variance")):
        print(f"{title} ({args.reps} sessions of {args.runs} runs, seed {args.seed})")
        print("p \\ alpha " + "".join(f"{a:>10}" for a in GRID))
        for p in GRID:
            print(f"{p:<10}" + "".join(f"{getattr(by_cell[p, a], attr):>10.4f}" for a in GRID))
        print()
    skipped = sum(c.skipped for c in cells)
    boundary = sum(c.boundary for c in cells)
    print(f"sessions skipped (no bug seen): {skipped}; boundary estimates: {boundary}")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("p\talpha\tmean\tvariance\testimates\tskipped\tboundary\n")
            for c in cells:
                fh.write(f"{c.p}\t{c.alpha}\t{c.mean!r}\t{c.variance!r}\t{c.estimates}\t{c.skipped}\t{c.boundary}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
