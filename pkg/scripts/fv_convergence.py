"""Polyline approximations of a smooth driver converge to the reference solution.

    python3 scripts/fv_convergence.py --out out/fv
"""

import argparse

import numpy as np

from roughdrift.bounds_harness import fv_consistency, smooth_driver
from roughdrift.drift_decomposition import cubic_inward_drift
from roughdrift.rde_flow import trig_field


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reference-level", type=int, default=13)
    ap.add_argument("--out", default="out/fv")
    args = ap.parse_args()
    rep = fv_consistency(cubic_inward_drift(2), trig_field(2, 2), smooth_driver(args.reference_level, 2),
                         np.array([0.5, -0.3]), levels=range(4, 11))
    rep.write(args.out)
    for k, r in zip(rep.levels, rep.relative):
        print(f"2^{k:<2} points: relative sup distance {r:.3e}")
    print("PASS" if rep.passed else "FAIL")


if __name__ == "__main__":
    main()
