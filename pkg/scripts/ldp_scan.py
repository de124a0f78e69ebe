"""q(eps) = -eps^2 log P(sup|Y^eps - y^0| > r) against the Brownian reflection-principle value.

    python3 scripts/ldp_scan.py --replicates 10000 --out out/ldp
"""

import argparse

import numpy as np

from roughdrift.experiments import config_from_dict, reflection_tail, run_ldp


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicates", type=int, default=10000)
    ap.add_argument("--radius", type=float, default=1.0)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.6, 0.5, 0.45, 0.4, 0.35])
    ap.add_argument("--out", default="out/ldp")
    args = ap.parse_args()
    cfg = config_from_dict({
        "driver": {"kind": "fbm", "H": 0.5, "d": 1, "n": 128}, "sigma": {"name": "constant"},
        "drift": {"name": "zero"}, "xi": [[0.0]], "radius": args.radius,
    })
    rep = run_ldp(cfg, args.eps, args.radius, args.replicates, outdir=args.out)
    for e, P, q in zip(rep.eps, rep.probability, rep.q):
        exact = -e * e * np.log(reflection_tail(args.radius / e))
        print(f"eps={e:<5g} P={P:.5f} q={q:.4f} reflection={exact:.4f}")
    print(f"spread of last three q: {rep.spread:.3f} ({'stable' if rep.stable else 'unstable'}); "
          f"limit r^2/2 = {args.radius ** 2 / 2:g}")


if __name__ == "__main__":
    main()
