"""Scenario configs and the experiment drivers behind the command line.

A scenario is one JSON document::

    {
      "driver": {"kind": "fbm", "H": 0.4, "d": 2, "n": 128, "T": 1.0},
      "sigma": {"name": "sin-rotation", "params": {"amp": 1.0}},
      "drift": {"name": "cubic_inward"},
      "xi": [[1.0, 0.0]],
      "seeds": [0, 1, 2]
    }

``driver.kind`` is ``fbm`` (fields ``H, d, n, T, p``) or ``polyline``
(field ``file``: a points CSV ``t,x_1..x_d``).  Monte-Carlo runs are split
into fixed chunks of seeds, so results do not depend on the worker count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .drift_decomposition import DriftFlow, OneSidedGrowth, drift_preset, solve_direct_batch
from .drivers import GaussianDriverSpec, fbm_path, lift_piecewise_linear, sample_fbm_batch
from .errors import ConfigurationError, DomainError, ExplosionError, StiffnessError
from .io import read_points_csv, write_json, write_table_csv
from .rde_flow import sigma_preset

CHUNK = 500
TAIL_MIN_REPLICATES = 1000


# -- configuration ------------------------------------------------------------

@dataclass
class DriverConfig:
    kind: str = "fbm"
    H: float = 0.5
    d: int = 1
    n: int = 128
    T: float = 1.0
    p: float | None = None
    file: str | None = None

    def spec(self, seed) -> GaussianDriverSpec:
        return GaussianDriverSpec(self.H, self.d, self.n, self.T, int(seed), self.p)

    def path(self, seed=0):
        if self.kind == "fbm":
            return fbm_path(self.spec(seed))
        times, pts = read_points_csv(self.file)
        return lift_piecewise_linear(pts, times, self.p or 2.5)


@dataclass
class ScenarioConfig:
    driver: DriverConfig
    sigma: dict
    drift: dict
    xi: list
    T: float | None = None
    p: float | None = None
    mode: str | None = None
    seeds: list = field(default_factory=lambda: [0])
    out: str = "out"
    replicates: int = 10000
    eps_grid: list = field(default_factory=lambda: [0.5, 0.4, 0.35, 0.3])
    radius: float = 1.0
    workers: int = 1

    @property
    def m(self) -> int:
        return len(self.xi[0])

    def make_sigma(self):
        return sigma_preset(self.sigma["name"], m=self.m, d=self.driver.d, **self.sigma.get("params", {}))

    def make_drift(self):
        return drift_preset(self.drift["name"], m=self.m, **self.drift.get("params", {}))

    def to_dict(self):
        return asdict(self)


def _need(cond, fieldname, msg):
    if not cond:
        raise ConfigurationError(f"{fieldname}: {msg}")


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Validate a parsed JSON scenario; errors name the offending field."""
    _need(isinstance(raw, dict), "config", "must be a JSON object")
    known = set(ScenarioConfig.__dataclass_fields__)
    for key in raw:
        _need(key in known, key, "unknown field")
    for key in ("driver", "sigma", "drift", "xi"):
        _need(key in raw, key, "missing required field")
    drv = raw["driver"]
    _need(isinstance(drv, dict), "driver", "must be an object")
    for key in drv:
        _need(key in DriverConfig.__dataclass_fields__, f"driver.{key}", "unknown field")
    dc = DriverConfig(**drv)
    _need(dc.kind in ("fbm", "polyline"), "driver.kind", "must be 'fbm' or 'polyline'")
    if dc.kind == "fbm":
        _need(isinstance(dc.H, (int, float)) and 1 / 3 < dc.H <= 1, "driver.H", "Hurst parameter must lie in (1/3, 1]")
        _need(isinstance(dc.n, int) and 1 <= dc.n <= 4096, "driver.n", "grid size must be an integer in [1, 4096]")
        _need(isinstance(dc.T, (int, float)) and dc.T > 0, "driver.T", "must be positive")
    else:
        _need(dc.file is not None and Path(dc.file).exists(), "driver.file", "polyline file not found")
    _need(isinstance(dc.d, int) and dc.d >= 1, "driver.d", "must be a positive integer")
    for key in ("sigma", "drift"):
        _need(isinstance(raw[key], dict) and "name" in raw[key], f"{key}.name", "missing preset name")
        _need(isinstance(raw[key].get("params", {}), dict), f"{key}.params", "must be an object")
    xi = raw["xi"]
    _need(isinstance(xi, list) and len(xi) > 0, "xi", "must be a non-empty list of initial values")
    xi = [[float(v) for v in (x if isinstance(x, list) else [x])] for x in xi]
    _need(len({len(x) for x in xi}) == 1, "xi", "all initial values must have the same dimension")
    cfg = ScenarioConfig(driver=dc, sigma=raw["sigma"], drift=raw["drift"], xi=xi,
                         **{k: raw[k] for k in raw if k not in ("driver", "sigma", "drift", "xi")})
    _need(cfg.mode in (None, "linear", "one_sided"), "mode", "must be 'linear' or 'one_sided'")
    _need(isinstance(cfg.seeds, list) and all(isinstance(s, int) for s in cfg.seeds), "seeds", "must be a list of integers")
    _need(isinstance(cfg.workers, int) and cfg.workers >= 1, "workers", "must be a positive integer")
    try:
        sig = cfg.make_sigma()
    except (ConfigurationError, TypeError, DomainError) as exc:
        raise ConfigurationError(f"sigma: {exc}") from exc
    _need(sig.d == dc.d, "sigma", f"preset drives d={sig.d} but driver.d={dc.d}")
    _need(sig.m == cfg.m, "xi", f"initial values live in R^{cfg.m} but sigma acts on R^{sig.m}")
    try:
        b = cfg.make_drift()
    except (ConfigurationError, TypeError, DomainError) as exc:
        raise ConfigurationError(f"drift: {exc}") from exc
    if isinstance(b.growth, OneSidedGrowth):
        _need(cfg.mode in (None, "one_sided"), "mode", f"drift {b.name!r} needs mode 'one_sided'")
    return cfg


def load_config(path) -> ScenarioConfig:
    import json

    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config: file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config: invalid JSON ({exc})") from exc
    return config_from_dict(raw)


# -- solve --------------------------------------------------------------------

def _solve_one(cfg: ScenarioConfig, seed, idx, outdir):
    path = cfg.driver.path(seed)
    flow = DriftFlow(cfg.make_drift(), cfg.make_sigma(), path, mode=cfg.mode, p=cfg.p)
    T = path.T if cfg.T is None else float(cfg.T)
    res = flow.solve(path.start, T, np.asarray(cfg.xi[idx]))
    stem = f"seed{seed}_xi{idx}"
    res.write(outdir, stem)
    return {"seed": seed, "xi_index": idx, "ok": True, "endpoint": res.endpoint, "sup_norm": res.sup_norm,
            "delta": res.delta, "finite": bool(np.all(np.isfinite(res.values)))}


def run_solve(cfg: ScenarioConfig, outdir):
    outdir = Path(outdir)
    records = []
    for seed in cfg.seeds:
        for i in range(len(cfg.xi)):
            try:
                records.append(_solve_one(cfg, seed, i, outdir))
            except (ExplosionError, StiffnessError, ConfigurationError, ArithmeticError) as exc:
                records.append({"seed": seed, "xi_index": i, "ok": False, "error": f"{type(exc).__name__}: {exc}"})
    write_json(outdir / "summary.json", {"config": cfg.to_dict(), "runs": records})
    return records


# -- Monte Carlo ----------------------------------------------------------------

def _mc_chunk(args):
    cfg_dict, seeds, eps = args
    cfg = config_from_dict(cfg_dict)
    spec = cfg.driver.spec(0)
    W = sample_fbm_batch(spec, seeds)
    inc = eps * np.diff(W, axis=1)
    xi = np.asarray(cfg.xi[0])
    _, _, traj = solve_direct_batch(cfg.make_drift(), cfg.make_sigma(), spec.times, inc, xi, record=True)
    return traj


def _raw(cfg: ScenarioConfig) -> dict:
    d = cfg.to_dict()
    d["driver"] = {k: v for k, v in d["driver"].items() if v is not None}
    return {k: v for k, v in d.items() if v is not None}


def monte_carlo_trajectories(cfg: ScenarioConfig, replicates, eps=1.0, workers=1, base_seed=None):
    """Trajectories ``(R, n + 1, m)`` for seeds ``base_seed + 0 .. R - 1``; chunked and order-preserving."""
    if cfg.driver.kind != "fbm":
        raise ConfigurationError("driver.kind: Monte-Carlo experiments need a Gaussian driver")
    base = int(cfg.seeds[0] if base_seed is None else base_seed)
    seeds = np.arange(base, base + int(replicates))
    chunks = [(_raw(cfg), seeds[i:i + CHUNK].tolist(), float(eps)) for i in range(0, len(seeds), CHUNK)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_mc_chunk, chunks))
    else:
        parts = [_mc_chunk(c) for c in chunks]
    return np.concatenate(parts)


@dataclass
class TailReport:
    H: float
    rho: float
    replicates: int
    shape: float
    threshold: float
    deterministic: bool
    passed: bool
    quantiles: dict

    def to_dict(self):
        return asdict(self)


def weibull_shape(samples, top=0.1):
    """Slope of ``log(-log S(r))`` against ``log r`` over the top ``top`` fraction of samples."""
    s = np.sort(np.asarray(samples, dtype=float))
    R = len(s)
    S = 1.0 - np.arange(1, R + 1) / (R + 1.0)
    k = int(math.floor((1.0 - top) * R))
    x, y = np.log(s[k:]), np.log(-np.log(S[k:]))
    return float(np.polyfit(x, y, 1)[0]), s, S


def run_tails(cfg: ScenarioConfig, replicates=None, workers=None, outdir=None) -> TailReport:
    """Weibull tail fit of ``||Y||_inf`` over independent Gaussian drivers."""
    R = int(replicates or cfg.replicates)
    if R < TAIL_MIN_REPLICATES:
        raise ConfigurationError(f"replicates: need at least {TAIL_MIN_REPLICATES} for a tail fit, got {R}")
    traj = monte_carlo_trajectories(cfg, R, 1.0, workers or cfg.workers)
    sup = np.max(np.linalg.norm(traj, axis=2), axis=1)
    rho = 1.0 / (2.0 * cfg.driver.H)
    thr = 2.0 / rho - 0.4
    deterministic = bool(np.ptp(sup) <= 1e-12 * max(1.0, float(np.max(sup))))
    if deterministic:
        shape, s, S = float("inf"), np.sort(sup), 1.0 - np.arange(1, R + 1) / (R + 1.0)
    else:
        shape, s, S = weibull_shape(sup)
    q = {str(k): float(np.quantile(sup, k)) for k in (0.5, 0.9, 0.99, 0.999)}
    rep = TailReport(cfg.driver.H, rho, R, shape, thr, deterministic, bool(deterministic or shape >= thr), q)
    if outdir is not None:
        outdir = Path(outdir)
        write_table_csv(outdir / "survival.csv", {"r": s, "survival": S})
        write_json(outdir / "tails.json", rep.to_dict())
    return rep


def reflection_tail(a, T=1.0, terms=50):
    """``P(sup_{t <= T} |W_t| >= a)`` for standard Brownian motion (reflection-principle series)."""
    if a <= 0:
        return 1.0
    z = a / np.sqrt(T)
    k = np.arange(-terms, terms + 1)
    inside = np.sum((-1.0) ** k * (norm.cdf((2 * k + 1) * z) - norm.cdf((2 * k - 1) * z)))
    return float(min(1.0, max(0.0, 1.0 - inside)))


@dataclass
class LDPReport:
    eps: list
    probability: list
    q: list
    spread: float
    stable: bool
    warnings: list

    def to_dict(self):
        return asdict(self)


def run_ldp(cfg: ScenarioConfig, eps_grid=None, radius=None, replicates=None, workers=None, outdir=None,
            spread_tol=0.5) -> LDPReport:
    """``q(eps) = -eps^2 log P(sup_t |Y^eps_t - y^0_t| > r)`` over an eps grid.

    ``y^0`` is the drift-only solution.  Grid points without hits give
    ``q = inf`` and are left out of the spread check.
    """
    eps_grid = [float(e) for e in (eps_grid or cfg.eps_grid)]
    r = float(cfg.radius if radius is None else radius)
    R = int(replicates or cfg.replicates)
    spec = cfg.driver.spec(0)
    _, _, y0 = solve_direct_batch(cfg.make_drift(), cfg.make_sigma(), spec.times,
                                  np.zeros((1, spec.n, spec.d)), np.asarray(cfg.xi[0]), record=True)
    probs, qs, notes = [], [], []
    for e in eps_grid:
        traj = monte_carlo_trajectories(cfg, R, e, workers or cfg.workers)
        dev = np.max(np.linalg.norm(traj - y0, axis=2), axis=1)
        P = float(np.mean(dev > r)) if r > 0 else float(np.mean(dev >= 0))
        probs.append(P)
        if P == 0.0:
            qs.append(float("inf"))
            notes.append(f"no exceedances at eps={e}; q recorded as infinity")
        else:
            qs.append(float(-e * e * np.log(P)))
    finite = [q for q in qs if np.isfinite(q)]
    tail = finite[-3:]
    if len(tail) < 3:
        notes.append("fewer than three finite q values; spread check skipped")
        spread, stable = float("nan"), False
    else:
        mean = float(np.mean(tail))
        spread = float((max(tail) - min(tail)) / mean) if mean > 0 else 0.0
        stable = bool(spread <= spread_tol)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    rep = LDPReport(eps_grid, probs, qs, spread, stable, notes)
    if outdir is not None:
        outdir = Path(outdir)
        write_table_csv(outdir / "ldp.csv", {"eps": eps_grid, "probability": probs, "q": qs})
        write_json(outdir / "ldp.json", rep.to_dict())
    return rep


def run_bounds(cfg: ScenarioConfig, outdir, xi_norms=(1, 3, 10, 30, 100), dilations=(0.5, 1, 2, 4)):
    """Sup and p-variation shape checks over ``|xi|`` and driver dilation sweeps."""
    from .bounds_harness import BoundExperiment, verify_pvar_bound, verify_sup_bound

    outdir = Path(outdir)
    paths = [cfg.driver.path(s) for s in cfg.seeds]
    common = dict(drift=cfg.make_drift(), vf=cfg.make_sigma(), paths=paths, xi_direction=np.asarray(cfg.xi[0]),
                  mode=cfg.mode, p=cfg.p, stochastic=cfg.driver.kind == "fbm" and len(paths) >= 10)
    reports = []
    for var, grid in (("xi_norm", xi_norms), ("n1", dilations)):
        exp = BoundExperiment(scenario=cfg.drift["name"], sweep_variable=var, grid=np.asarray(grid, float),
                              xi_norm=float(np.linalg.norm(cfg.xi[0])) or 1.0, **common)
        for fn in (verify_sup_bound, verify_pvar_bound):
            rep = fn(exp)
            rep.write(outdir)
            reports.append(rep)
    return reports
