"""Regenerate the frozen reference fixtures under tests/fixtures/.

Each fixture comes from a run that is finer than the one the tests perform:
the pinching window from a 3x finer grid with a 10x smaller time step, and
the perturbed Kahler-Einstein constant from a 257-node grid.
"""

import json
from pathlib import Path

import numpy as np

from invmetrics import einstein_flow as ef

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

PINCH_EPS = -0.05
PINCH_T_MAX = 0.05
PINCH_CHECKPOINTS = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05]
INNER_S = np.linspace(0.0, 0.8, 81)


def pinching_reference() -> dict:
    g0 = ef.perturbed_poincare(PINCH_EPS, "1-s", ef.cheb_grid(97, 0.98))
    res = ef.ricci_flow_run(g0, PINCH_T_MAX, 1e-4)
    idx = [int(round(t / 1e-4)) for t in PINCH_CHECKPOINTS]
    return {
        "eps": PINCH_EPS,
        "shape": "1-s",
        "nodes": 97,
        "dt": 1e-4,
        "t": PINCH_CHECKPOINTS,
        "h_max": [float(res.h_max[i]) for i in idx],
        "h_min": [float(res.h_min[i]) for i in idx],
        "window": list(res.pinching_window),
    }


def ke_perturbation_constant() -> dict:
    grid = ef.cheb_grid(257, 0.98)
    path = ef.continuity_path(ef.perturbed_poincare(0.1, "1-s", grid))
    P = ef.poincare_profile(grid=grid)
    dev = np.abs(path.ke.log_g - P.log_g)
    inner = np.abs(grid.interpolant(path.ke.log_g - P.log_g)(INNER_S))
    return {
        "eps": 0.1,
        "nodes": 257,
        "C_full": float(dev.max() / 0.1),
        "C_inner": float(inner.max() / 0.1),
        "ke_defect": path.ke_defect,
    }


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, fn in (("pinching_reference", pinching_reference), ("ke_perturbation", ke_perturbation_constant)):
        data = fn()
        (OUT / f"{name}.json").write_text(json.dumps(data, indent=2) + "\n")
        print(name, json.dumps(data))


if __name__ == "__main__":
    main()
