"""Log-log slopes of sup and p-variation norms of the drift flow against |xi| and N_1.

    python3 scripts/bound_shapes.py --out out/bounds
"""

import argparse

import numpy as np

from roughdrift.bounds_harness import BoundExperiment, verify_pvar_bound, verify_sup_bound
from roughdrift.drift_decomposition import drift_preset
from roughdrift.drivers import GaussianDriverSpec, fbm_path
from roughdrift.rde_flow import trig_field


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--drifts", nargs="+", default=["neg_identity", "bounded", "cubic_inward"])
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--H", type=float, default=0.5)
    ap.add_argument("--out", default="out/bounds")
    args = ap.parse_args()
    vf = trig_field(2, 2, amp=0.5)
    short = [fbm_path(GaussianDriverSpec(args.H, 2, 16, 1.0, s)) for s in range(args.replicates)]
    long = [fbm_path(GaussianDriverSpec(args.H, 2, 64, 1.0, s)) for s in range(args.replicates)]
    for name in args.drifts:
        b = drift_preset(name, 2)
        for var, grid, paths in (("xi_norm", [1, 3, 10, 30, 100], short), ("n1", [0.5, 1, 2, 4], long)):
            exp = BoundExperiment(name, var, grid, b, vf, paths, np.array([0.6, 0.8]))
            for fn in (verify_sup_bound, verify_pvar_bound):
                rep = fn(exp)
                rep.write(args.out)
                print(f"{name:>13} {rep.quantity:>4} vs {var:<7} slope {rep.slope:6.3f} "
                      f"CI [{rep.slope_ci[0]:.2f}, {rep.slope_ci[1]:.2f}] {'PASS' if rep.passed else 'FAIL'}")


if __name__ == "__main__":
    main()
