"""Bergman versus Kobayashi on the worm-type domain, approaching the boundary along z = (-delta, 0, 0).

Prints |xi|_B^2 / K^2 for a normal and a tangential direction.  The Bergman
kernel is a finite-degree truncation, so the normal ratio eventually decays
because the truncated metric stays bounded.
"""

import argparse
import time

import numpy as np

from invmetrics.bergman import bergman_metric_at, build_kernel
from invmetrics.domains import dfh_omega
from invmetrics.kobayashi import kr_upper


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--degree", type=int, default=6)
    ap.add_argument("--budget", type=int, default=100_000)
    ap.add_argument("--deltas", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05, 0.02])
    ap.add_argument("--restarts", type=int, default=2)
    args = ap.parse_args()
    d = dfh_omega()
    t = time.perf_counter()
    k = build_kernel(d, args.degree, quad_budget=args.budget, seed=0)
    print(f"kernel: degree {args.degree}, rank {k.rank}, {time.perf_counter() - t:.1f}s")
    dirs = {"normal": np.array([1, 0, 0], complex), "z2": np.array([0, 1, 0], complex), "z3": np.array([0, 0, 1], complex)}
    print(f"{'delta':>7} " + " ".join(f"{name:>10}" for name in dirs))
    for delta in args.deltas:
        z = np.array([-delta, 0, 0], complex)
        G = bergman_metric_at(k, z)
        row = []
        for xi in dirs.values():
            B = float(np.real(xi @ G @ xi.conj()))
            K = kr_upper(d, z, xi, restarts=args.restarts).value
            row.append(B / K**2)
        print(f"{delta:7.3f} " + " ".join(f"{r:10.4g}" for r in row))


if __name__ == "__main__":
    main()
