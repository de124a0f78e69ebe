"""``roughdrift`` command line.

Subcommands ``solve``, ``tails``, ``ldp``, ``bounds`` and ``lift``.  Exit
codes: 0 ok, 2 configuration error, 3 every run failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError
from .experiments import load_config, run_bounds, run_ldp, run_solve, run_tails
from .io import read_points_csv, write_rough_path_csv
from .drivers import lift_piecewise_linear

log = logging.getLogger("roughdrift")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3


def _config(args):
    cfg = load_config(args.config)
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigurationError("--seeds: must be positive")
        cfg.seeds = list(range(args.seeds))
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigurationError("--workers: must be positive")
        cfg.workers = args.workers
    return cfg


def _out(args, cfg=None):
    return Path(args.out or (cfg.out if cfg is not None else "out"))


def cmd_solve(args):
    cfg = _config(args)
    records = run_solve(cfg, _out(args, cfg))
    failed = [r for r in records if not r["ok"]]
    for r in failed:
        log.error("seed %s xi %s: %s", r["seed"], r["xi_index"], r["error"])
    print(f"solve: {len(records) - len(failed)}/{len(records)} runs ok")
    return EXIT_FAILED if records and len(failed) == len(records) else EXIT_OK


def cmd_tails(args):
    cfg = _config(args)
    rep = run_tails(cfg, args.replicates, outdir=_out(args, cfg))
    tag = "deterministic" if rep.deterministic else f"shape={rep.shape:.3f}"
    print(f"tails: H={rep.H} {tag} threshold={rep.threshold:.3f} {'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK


def cmd_ldp(args):
    cfg = _config(args)
    eps = [float(e) for e in args.eps.split(",")] if args.eps else None
    rep = run_ldp(cfg, eps, args.radius, args.replicates, outdir=_out(args, cfg))
    for e, P, q in zip(rep.eps, rep.probability, rep.q):
        print(f"ldp: eps={e:g} P={P:.6g} q={q:.6g}")
    print(f"ldp: spread={rep.spread:.3f} {'stable' if rep.stable else 'unstable'}")
    return EXIT_OK


def cmd_bounds(args):
    cfg = _config(args)
    reports = run_bounds(cfg, _out(args, cfg))
    for r in reports:
        print(f"bounds: {r.quantity} vs {r.variable}: slope={r.slope:.3f} {'PASS' if r.passed else 'FAIL'}")
    return EXIT_OK


def cmd_lift(args):
    if not args.input:
        raise ConfigurationError("--input: points CSV required")
    try:
        times, pts = read_points_csv(args.input)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"--input: {exc}") from exc
    path = lift_piecewise_linear(pts, times)
    out = Path(args.out or "lifted.csv")
    if out.suffix != ".csv":
        out = out / (Path(args.input).stem + "_lift.csv")
    write_rough_path_csv(out, path)
    print(f"lift: wrote {out} ({path.n_points} points, d={path.dim}, area range "
          f"{float(np.max(np.abs(path.area))):.3g})")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "tails": cmd_tails, "ldp": cmd_ldp, "bounds": cmd_bounds, "lift": cmd_lift}


def build_parser():
    parser = argparse.ArgumentParser(prog="roughdrift", description="Rough differential equations with unbounded drift.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--out", help="output directory (for lift: output CSV or directory)")
        if name == "lift":
            sp.add_argument("--input", help="points CSV with header t,x_1,...,x_d")
            continue
        sp.add_argument("--config", required=True, help="scenario JSON")
        sp.add_argument("--seeds", type=int, help="use seeds 0..N-1")
        sp.add_argument("--workers", type=int, help="worker processes for Monte-Carlo runs")
        if name in ("tails", "ldp"):
            sp.add_argument("--replicates", type=int)
        if name == "ldp":
            sp.add_argument("--eps", help="comma separated eps grid")
            sp.add_argument("--radius", type=float)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
