"""Pairwise comparison of the invariant metrics on the unit disk.

Prints the same table that ``invmetrics compare`` produces, as plain text.
"""

import argparse

from invmetrics import cli


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget", type=int, default=32)
    ap.add_argument("--metrics", default="poincare,bergman,kahler_einstein,kobayashi")
    args = ap.parse_args()
    cfg = cli.load_config(None, {"domain": "disk", "metrics": args.metrics, "seed": str(args.seed), "budget": str(args.budget)}, environ={})
    rep = cli.cmd_compare(cfg)
    print(f"{'a':>16} {'b':>16} {'ratio min':>11} {'ratio max':>11} {'eig min':>11} {'eig max':>11}")
    def fmt(v):
        return f"{v:11.6f}" if v is not None else f"{'-':>11}"

    for a, b, lo, hi, emin, emax, *_ in rep.rows:
        print(f"{a:>16} {b:>16} " + " ".join(fmt(v) for v in (lo, hi, emin, emax)))
    print("kobayashi columns are K^2/|xi|^2; on the disk 2 K^2 = |xi|_P^2")


if __name__ == "__main__":
    main()
