#!/usr/bin/env python3
"""Calibrate per-k effect sizes for the power study so the best method's
power lands in [0.4, 0.8] at d=100, n=1000, maf=0.3, alpha=0.01 with
independent noise.  The chosen values are frozen into the acceptance tests.

Usage: python3 scripts/calibrate_beta.py [reps]
"""
import sys

from gbjtest import simlab

REPS = int(sys.argv[1]) if len(sys.argv) > 1 else 400
GRID = {
    1: (0.18, 0.20, 0.22, 0.24),
    5: (0.12, 0.13, 0.14, 0.15),
    6: (0.11, 0.12, 0.13, 0.14),
    7: (0.11, 0.12, 0.13),
    8: (0.10, 0.11, 0.12, 0.13),
    9: (0.10, 0.11, 0.12),
    10: (0.09, 0.10, 0.11, 0.12),
}


def main():
    chosen = {}
    for k, betas in GRID.items():
        for beta in betas:
            cfg = simlab.SimConfig(
                structure=simlab.BlockStructure(d=100, k=k),
                n=1000, maf=0.3, beta=beta, alpha=0.01, reps=REPS, seed=1234 + k,
            )
            res = simlab.run_study(cfg, simlab.POWER)
            best = max(r.rate for r in res.rows)
            marks = " ".join(f"{r.method}={r.rate:.2f}" for r in res.rows)
            print(f"k={k} beta={beta}: best={best:.3f}  {marks}", flush=True)
            if 0.45 <= best <= 0.75 and k not in chosen:
                chosen[k] = beta
    print("\nchosen:", chosen)


if __name__ == "__main__":
    main()
