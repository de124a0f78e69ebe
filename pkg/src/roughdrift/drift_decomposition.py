"""Flows of ``dy = b(y) dt + sigma(y) dx`` by flow decomposition.

On a short interval ``[s, t]`` the solution is written as
``phi(s, t, xi) = psi(s, t, chi_s(t, xi))``, where ``psi`` is the driftless
RDE flow and ``chi`` solves the ordinary differential equation

    dz/du = J(s, u, z) b(psi(s, u, z)),   J = (D_xi psi)^{-1},   z_s = xi.

Over ``[0, T]`` the pieces are composed along a greedy partition of the
control ``omega(s, t) + |t - s|`` at a level ``delta`` small enough that
``psi`` stays close to the identity and ``J`` close to ``I``.  Drifts of linear
growth give a two-sided flow; drifts satisfying only a one-sided growth
condition give a forward semiflow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import qmc

from .controls import GreedyPartition, greedy_partition, pvar_norm, tilde_control
from .drivers import SampledRoughPath
from .errors import ConfigurationError, DomainError, ExplosionError, StiffnessError
from .io import write_json, write_trajectory_csv
from .rde_flow import RDEFlow, SolverOptions, VectorFields, get_flow

CHI_RTOL = 1e-8
CHI_ATOL = 1e-10


# -- drift fields ------------------------------------------------------------

@dataclass(frozen=True)
class LinearGrowth:
    """``|b(xi)| <= kappa1 + kappa2 |xi|``."""

    kappa1: float
    kappa2: float
    mode = "linear"


@dataclass(frozen=True)
class OneSidedGrowth:
    """``<b(xi), xi> <= c1 (1 + |xi|^2)``, tangential part ``<= c2 (1 + |xi|)``, ``c3 = sup_{|xi| <= 6} |b|``."""

    c1: float
    c2: float
    c3: float
    mode = "one_sided"


def _ball_points(m, radius, n, seed=7, inner=0.0):
    """Quasi-uniform points of the ball ``B(0, radius)`` (Sobol in the cube, rejection)."""
    sob = qmc.Sobol(m, scramble=True, seed=seed)
    out = []
    count = 0
    while count < n:
        pts = radius * (2.0 * sob.random(1024) - 1.0)
        r = np.linalg.norm(pts, axis=1)
        pts = pts[(r <= radius) & (r >= inner)]
        out.append(pts)
        count += len(pts)
    return np.concatenate(out)[:n]


@dataclass(eq=False)
class DriftField:
    """Drift ``b`` on R^m with declared growth constants.

    ``field`` and ``jac`` act on batches ``(k, m)``.  ``lipschitz(R)`` returns a
    Lipschitz constant on ``B(0, R)``; when absent it is estimated from ``jac``
    (or finite differences) on sample points.
    """

    m: int
    field: Callable
    growth: LinearGrowth | OneSidedGrowth
    jac: Callable | None = None
    lipschitz: Callable | None = None
    name: str = "custom"
    probe_radius: float = 10.0
    n_probes: int = 1000
    validate: bool = True
    is_zero: bool = False

    def __post_init__(self):
        if self.validate:
            est = estimate_growth_constants(self, self.probe_radius, self.n_probes)
            if est.violations:
                raise ConfigurationError(f"drift {self.name!r}: " + "; ".join(est.violations))

    @property
    def mode(self) -> str:
        return self.growth.mode

    def _eval(self, y):
        return np.asarray(self.field(y), dtype=float)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return self._eval(y[None])[0]
        return self._eval(y)

    def derivative(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.jac is not None:
            return np.asarray(self.jac(y), dtype=float)
        h = 1e-6
        out = np.empty(y.shape + (self.m,))
        for g in range(self.m):
            e = np.zeros(self.m)
            e[g] = h
            out[..., g] = (self._eval(y + e) - self._eval(y - e)) / (2 * h)
        return out

    def local_lipschitz(self, R) -> float:
        if self.lipschitz is not None:
            return float(self.lipschitz(R))
        pts = _ball_points(self.m, float(R), 512)
        return float(np.max(np.linalg.norm(self.derivative(pts), ord=2, axis=(1, 2))))

    def a_priori_constants(self) -> dict:
        """``C_hat = (c + 1) v 4c`` and ``C_4 = sup{|b| : |xi| <= (2c + 1) v 5c + 1}`` with ``c = 1``.

        ``c`` is the bound on ``|psi - id|`` guaranteed by the delta selection.
        """
        c = 1.0
        r4 = max(2 * c + 1, 5 * c) + 1
        pts = _ball_points(self.m, r4, 2048)
        return {"c_disp": c, "c_hat": max(c + 1, 4 * c), "c4": float(np.max(np.linalg.norm(self._eval(pts), axis=1)))}


def _zero_b(y):
    return np.zeros_like(y)


def zero_drift(m) -> DriftField:
    return DriftField(m, _zero_b, LinearGrowth(0.0, 0.0), jac=lambda y: np.zeros(y.shape + (y.shape[1],)),
                      lipschitz=lambda R: 0.0, name="zero", is_zero=True)


def linear_drift(A) -> DriftField:
    """``b(xi) = A xi``; ``kappa2 = ||A||_2``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    norm = float(np.linalg.norm(A, 2))
    return DriftField(A.shape[0], lambda y: y @ A.T, LinearGrowth(0.0, norm),
                      jac=lambda y: np.broadcast_to(A, (y.shape[0],) + A.shape).copy(),
                      lipschitz=lambda R: norm, name="linear")


def neg_identity_drift(m) -> DriftField:
    d = linear_drift(-np.eye(m))
    d.name = "neg_identity"
    return d


def rotation_drift() -> DriftField:
    """Rotation by 90 degrees in the plane; purely tangential."""
    d = linear_drift(np.array([[0.0, -1.0], [1.0, 0.0]]))
    d.name = "rotation"
    return d


def _cubic(y):
    return y - np.sum(y * y, axis=1, keepdims=True) * y


def _cubic_jac(y):
    m = y.shape[1]
    r2 = np.sum(y * y, axis=1)[:, None, None]
    return (1.0 - r2) * np.eye(m) - 2.0 * y[:, :, None] * y[:, None, :]


def cubic_inward_drift(m=2) -> DriftField:
    """``b(xi) = xi - |xi|^2 xi``: radial, one-sided growth with ``C1 = 1, C2 = 0``.

    ``C3 = sup_{|xi| <= 6} |b| = 6^3 - 6 = 210``.
    """
    return DriftField(m, _cubic, OneSidedGrowth(1.0, 0.0, 210.0), jac=_cubic_jac,
                      lipschitz=lambda R: 1.0 + 3.0 * R * R, name="cubic_inward")


def bounded_drift(m, scale=1.0) -> DriftField:
    """``b(xi) = -scale tanh(xi)`` componentwise; ``kappa1 = scale sqrt(m)``, ``kappa2 = 0``."""
    scale = float(scale)

    def f(y):
        return -scale * np.tanh(y)

    def j(y):
        k, mm = y.shape
        out = np.zeros((k, mm, mm))
        out[:, np.arange(mm), np.arange(mm)] = -scale / np.cosh(y) ** 2
        return out

    return DriftField(m, f, LinearGrowth(scale * np.sqrt(m), 0.0), jac=j, lipschitz=lambda R: scale, name="bounded")


def drift_preset(name, m=2, **params) -> DriftField:
    """Named drifts: ``zero``, ``linear`` (``matrix=``), ``neg_identity``, ``rotation``, ``cubic_inward``, ``bounded``."""
    if name == "zero":
        return zero_drift(m)
    if name == "linear":
        if "matrix" not in params:
            raise ConfigurationError("linear drift needs a 'matrix' parameter")
        return linear_drift(params["matrix"])
    if name == "neg_identity":
        return neg_identity_drift(m)
    if name == "rotation":
        if m != 2:
            raise ConfigurationError("rotation drift needs m = 2")
        return rotation_drift()
    if name == "cubic_inward":
        return cubic_inward_drift(m)
    if name == "bounded":
        return bounded_drift(m, params.get("scale", 1.0))
    raise ConfigurationError(f"unknown drift preset {name!r}")


def radial_decompose(b, xi):
    """Split ``b(xi)`` into its radial size ``<b, xi>/|xi|`` and the tangential remainder."""
    xi = np.asarray(xi, dtype=float)
    r2 = float(xi @ xi)
    if r2 == 0.0:
        raise DomainError("radial decomposition undefined at xi = 0")
    bx = b(xi) if callable(b) else np.asarray(b, dtype=float)
    inner = float(bx @ xi)
    return inner / np.sqrt(r2), bx - (inner / r2) * xi


@dataclass
class GrowthEstimate:
    c1: float
    c2: float
    kappa1: float
    kappa2: float
    linear_ratio: float
    c3: float
    violations: list = field(default_factory=list)

    def as_tuple(self):
        return self.c1, self.c2, self.kappa1, self.kappa2


def estimate_growth_constants(b: DriftField, R=10.0, n=1000) -> GrowthEstimate:
    """Empirical growth constants of ``b`` on ``n`` quasi-uniform points of ``B(0, R)``.

    ``c1 = max <b, xi>/(1 + |xi|^2)``, ``c2 = max |tangential|/(1 + |xi|)``,
    ``kappa1 = |b(0)|``, ``kappa2 = max (|b(xi)| - kappa1)/|xi|``,
    ``linear_ratio = max |b|/(1 + |xi|)`` and ``c3 = max_{|xi| <= 6} |b|``.
    Any estimate exceeding a declared constant is listed in ``violations``.
    """
    if not R > 0 or n < 100:
        raise DomainError("need R > 0 and n >= 100")
    pts = _ball_points(b.m, float(R), int(n), inner=1e-8)
    vals = b._eval(pts)
    r = np.linalg.norm(pts, axis=1)
    inner = np.sum(vals * pts, axis=1)
    tang = vals - (inner / r**2)[:, None] * pts
    bn = np.linalg.norm(vals, axis=1)
    k1 = float(np.linalg.norm(b._eval(np.zeros((1, b.m)))[0]))
    est = GrowthEstimate(
        c1=float(max(0.0, np.max(inner / (1 + r**2)))),
        c2=float(np.max(np.linalg.norm(tang, axis=1) / (1 + r))),
        kappa1=k1,
        kappa2=float(max(0.0, np.max((bn - k1) / r))),
        linear_ratio=float(np.max(bn / (1 + r))),
        c3=float(np.max(np.linalg.norm(b._eval(_ball_points(b.m, 6.0, 2048)), axis=1))),
    )
    g = b.growth
    tol = 1e-9
    if isinstance(g, LinearGrowth):
        excess = bn - (g.kappa1 + g.kappa2 * r)
        if np.max(excess) > tol * (1 + np.max(bn)):
            i = int(np.argmax(excess))
            est.violations.append(f"|b| = {bn[i]:.6g} exceeds kappa1 + kappa2 |xi| = {g.kappa1 + g.kappa2 * r[i]:.6g} at |xi| = {r[i]:.4g}")
    else:
        if est.c1 > g.c1 * (1 + tol) + tol:
            est.violations.append(f"radial growth {est.c1:.6g} exceeds declared c1 = {g.c1}")
        if est.c2 > g.c2 * (1 + tol) + tol:
            est.violations.append(f"tangential growth {est.c2:.6g} exceeds declared c2 = {g.c2}")
        if est.c3 > g.c3 * (1 + 1e-6) + tol:
            est.violations.append(f"sup of |b| on B(0, 6) = {est.c3:.6g} exceeds declared c3 = {g.c3}")
    return est


# -- the transformed ODE -------------------------------------------------------

class RDESystem:
    """``(psi, J)`` of an anchored driftless flow, as needed by the chi equation."""

    def __init__(self, flow: RDEFlow, s, t):
        self.anchored = flow.anchored(s, t)
        self.n_calls = 0

    def velocity(self, b, u, z):
        self.n_calls += 1
        y, M = self.anchored.evaluate(u, z[None], tangent=True)
        bz = b._eval(y)[0]
        if not np.all(np.isfinite(bz)):
            raise ExplosionError("drift evaluated to a non-finite value", float(u))
        return np.linalg.solve(M[0], bz)

    def psi(self, us, zs):
        return self.anchored.evaluate_many(us, zs)[0]

    def inverse_jacobians(self, us, zs):
        _, Ms = self.anchored.evaluate_many(us, zs, tangent=True)
        return np.linalg.inv(Ms)


class FunctionSystem:
    """``(psi, J)`` given directly as callables ``psi(u, z) -> (m,)`` and ``J(u, z) -> (m, m)``."""

    def __init__(self, psi: Callable, J: Callable):
        self._psi, self._J = psi, J
        self.n_calls = 0

    def velocity(self, b, u, z):
        self.n_calls += 1
        return self._J(u, z) @ b(self._psi(u, z))

    def psi(self, us, zs):
        return np.array([self._psi(u, z) for u, z in zip(us, zs)])

    def inverse_jacobians(self, us, zs):
        return np.array([self._J(u, z) for u, z in zip(us, zs)])


@dataclass(frozen=True, eq=False)
class ChiResult:
    times: np.ndarray
    values: np.ndarray
    n_rhs: int
    dense: Callable | None = None

    @property
    def endpoint(self):
        return self.values[-1]

    @property
    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    @property
    def one_variation(self):
        return float(np.sum(np.linalg.norm(np.diff(self.values, axis=0), axis=1)))


def _solve_ivp(fun, s, t, y0, rtol, atol, dense=False):
    if t == s:
        return np.array([s]), np.asarray(y0, float)[None], None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = solve_ivp(fun, (s, t), np.asarray(y0, float), method="RK45", rtol=rtol, atol=atol, dense_output=dense)
    if sol.status != 0:
        tt = float(sol.t[-1]) if len(sol.t) else s
        if not np.all(np.isfinite(sol.y)):
            raise ExplosionError("ODE solution became non-finite", tt)
        raise StiffnessError(f"ODE integrator stopped: {sol.message}", tt)
    return sol.t, sol.y.T, sol.sol


def _piecewise_dense(knots, sols):
    """Join per-segment dense outputs; ``knots`` run in the integration direction."""
    lo = np.minimum(knots[:-1], knots[1:])
    order = np.argsort(lo)
    lo_sorted = lo[order]

    def dense(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        j = order[np.clip(np.searchsorted(lo_sorted, u, side="right") - 1, 0, len(order) - 1)]
        out = np.empty((sols[0](knots[0]).shape[0], len(u)))
        for k in np.unique(j):
            sel = j == k
            out[:, sel] = sols[k](u[sel])
        return out
    return dense


def integrate_chi(b: DriftField, system, s, t, xi, rtol=CHI_RTOL, atol=CHI_ATOL, dense=False,
                  breaks=None) -> ChiResult:
    """Integrate ``dz/du = J(u, z) b(psi(u, z))`` from ``z_s = xi`` to ``t`` (either direction).

    ``breaks`` are times where the velocity has kinks (driver grid points);
    the integrator restarts there so its error control is not misled.
    """
    xi = np.asarray(xi, dtype=float)
    if b.is_zero:
        return ChiResult(np.array([s, t]), np.array([xi, xi]), 0, (lambda u: np.repeat(xi[:, None], np.size(u), 1)) if dense else None)

    def fun(u, z):
        if not np.all(np.isfinite(z)):
            raise ExplosionError("ODE solution became non-finite", float(u))
        return system.velocity(b, u, z)

    s, t = float(s), float(t)
    inner = np.zeros(0) if breaks is None else np.asarray(breaks, dtype=float)
    inner = np.unique(inner[(inner > min(s, t)) & (inner < max(s, t))])
    if t < s:
        inner = inner[::-1]
    knots = np.concatenate([[s], inner, [t]])
    all_t, all_z, sols = [np.array([s])], [xi[None]], []
    z = xi
    for a, c in zip(knots[:-1], knots[1:]):
        ts, zs, sol = _solve_ivp(fun, a, c, z, rtol, atol, dense)
        all_t.append(ts[1:])
        all_z.append(zs[1:])
        sols.append(sol)
        z = zs[-1]
    dense_sol = None
    if dense and t != s:
        dense_sol = sols[0] if len(sols) == 1 else _piecewise_dense(knots, sols)
    return ChiResult(np.concatenate(all_t), np.vstack(all_z), getattr(system, "n_calls", 0), dense_sol)


def chi_solve(b: DriftField, vf: VectorFields, x: SampledRoughPath, s, t, xi, options=None,
              rtol=CHI_RTOL, atol=CHI_ATOL, mode=None) -> ChiResult:
    """``u -> chi_s(u, xi)`` on ``[s, t]`` (solver steps).  Backward only for linear-growth drifts."""
    mode = mode or b.mode
    if t < s and mode == "one_sided":
        raise DomainError("one-sided drifts only define a forward semiflow")
    return integrate_chi(b, RDESystem(get_flow(vf, x, options), s, t), s, t, xi, rtol, atol, breaks=x.times)


# -- delta selection -----------------------------------------------------------

def _probe_interval(flow: RDEFlow, s, t, probes, pairs, one_sided):
    """Largest violations of the smallness conditions along ``[s, t]`` for the probe batch."""
    pcs = flow.pieces(s, t)
    k, m = probes.shape
    y = probes.copy()
    M = np.broadcast_to(np.eye(m), (k, m, m)).copy()
    worst = {"disp": 0.0, "jinv": 0.0, "pair": 0.0}
    for j in range(len(pcs)):
        y, M = flow.run(y, M, pcs, j, j + 1)
        worst["disp"] = max(worst["disp"], float(np.max(np.linalg.norm(y - probes, axis=1))))
        J = np.linalg.inv(M)
        worst["jinv"] = max(worst["jinv"], float(np.max(np.linalg.norm(J - np.eye(m), ord=2, axis=(1, 2)))))
        if one_sided:
            i0, i1 = pairs
            h = y - probes
            num = np.linalg.norm(h[i0] - h[i1], axis=1)
            den = np.linalg.norm(probes[i0] - probes[i1], axis=1)
            worst["pair"] = max(worst["pair"], float(np.max(num / den)))
    return worst


def select_delta(vf: VectorFields, x: SampledRoughPath, drift: DriftField | None = None, mode=None, p=None,
                 options=None, n_probes=16, probe_radius=4.0, delta_min=1e-6, return_report=False):
    """Largest ``delta = 2^-k`` (``k = 0, 1, ...``) passing the smallness checks.

    Every interval of the greedy partition of ``omega + |t - s|`` at level
    ``delta`` is probed with quasi-random starting points: along it
    ``|psi - xi| <= 1`` and ``|J - I| <= 1/2``; in one-sided mode also
    ``|psi(xi) - xi - psi(zeta) + zeta| <= |xi - zeta|/4`` on probe pairs.
    In linear mode ``2 (kappa1 + kappa2) delta <= 1`` is imposed analytically.
    """
    mode = mode or (drift.mode if drift is not None else "linear")
    if mode not in ("linear", "one_sided"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    x = get_flow(vf, x, options).refined_path
    flow = get_flow(vf, x, options)
    omega = tilde_control(x, p)
    m = vf.m
    probes = probe_radius * (2.0 * qmc.Sobol(m, scramble=True, seed=2024).random(n_probes) - 1.0)
    i0 = np.arange(n_probes)
    i1 = (i0 + 1) % n_probes
    pairs = (i0, i1)
    kappa = 0.0
    if mode == "linear" and drift is not None:
        if not isinstance(drift.growth, LinearGrowth):
            raise ConfigurationError("linear mode needs a drift with linear growth constants")
        kappa = drift.growth.kappa1 + drift.growth.kappa2
    report = []
    delta = 1.0
    while delta >= delta_min:
        entry = {"delta": delta}
        ok = 2.0 * kappa * delta <= 1.0
        entry["analytic"] = ok
        if ok and not vf.is_zero:
            part = greedy_partition(omega, delta, x.T, x.times)
            worst = {"disp": 0.0, "jinv": 0.0, "pair": 0.0}
            for a, c in part.intervals:
                w = _probe_interval(flow, a, c, probes, pairs, mode == "one_sided")
                worst = {key: max(worst[key], w[key]) for key in worst}
                if worst["disp"] > 1.0 or worst["jinv"] > 0.5 or worst["pair"] > 0.25:
                    break
            entry.update(worst)
            ok = worst["disp"] <= 1.0 and worst["jinv"] <= 0.5 and worst["pair"] <= 0.25
        entry["ok"] = ok
        report.append(entry)
        if ok:
            return (delta, report) if return_report else delta
        delta *= 0.5
    raise ConfigurationError(f"no delta >= {delta_min} satisfies the smallness conditions; "
                             f"path too rough for nu = {vf.nu}")


# -- composed flow ------------------------------------------------------------

@dataclass(eq=False)
class FlowResult:
    """``u -> phi(s, u, xi)`` reported at ``s``, the grid and partition times between, and ``t``."""

    s: float
    t: float
    xi: np.ndarray
    mode: str
    delta: float
    p: float
    partition: GreedyPartition
    times: np.ndarray
    values: np.ndarray
    intervals: list

    @property
    def endpoint(self) -> np.ndarray:
        return self.values[-1]

    @cached_property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    @cached_property
    def pvar_norm(self) -> float:
        return pvar_norm(self.values, self.p)

    def diagnostics(self) -> dict:
        return {
            "s": self.s, "t": self.t, "xi": self.xi, "mode": self.mode, "delta": self.delta, "p": self.p,
            "partition_times": self.partition.times, "n_delta": self.partition.n_delta,
            "sup_norm": self.sup_norm, "pvar_norm": self.pvar_norm, "endpoint": self.endpoint,
            "intervals": self.intervals,
        }

    def write(self, directory, stem="flow"):
        directory = Path(directory)
        csv = write_trajectory_csv(directory / f"{stem}.csv", self.times, self.values)
        js = write_json(directory / f"{stem}.json", self.diagnostics())
        return csv, js


class DriftFlow:
    """``phi(s, t, xi)`` for one drift, one set of diffusion fields and one driver.

    Parameters
    ----------
    delta : float, optional
        Partition level; chosen by :func:`select_delta` when omitted.
    max_cells : int, optional
        Split greedy intervals so none spans more than this many grid cells.
        Finer partitions give the same flow and keep each anchored solve short.
    refine : int
        Split every interval into this many equal pieces (partition-independence checks).
    """

    def __init__(self, drift: DriftField, vf: VectorFields, path: SampledRoughPath, mode=None, p=None,
                 delta=None, options: SolverOptions | None = None, rtol=CHI_RTOL, atol=CHI_ATOL,
                 max_cells: int | None = 4, refine: int = 1):
        if drift.m != vf.m:
            raise DomainError(f"drift acts on R^{drift.m}, fields on R^{vf.m}")
        self.mode = mode or drift.mode
        if self.mode == "linear" and not isinstance(drift.growth, LinearGrowth):
            raise ConfigurationError("linear mode needs a drift with linear growth constants")
        if self.mode not in ("linear", "one_sided"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        self.drift, self.vf, self.base_path = drift, vf, path
        self.p = float(p or path.p_hint)
        self.options = options
        # work on the driver sampled at the solver's sub-steps, so partition
        # points can fall inside coarse cells
        self.path = get_flow(vf, path, options).refined_path
        self.flow = get_flow(vf, self.path, options)
        self.omega = tilde_control(self.path, self.p)
        self.rtol, self.atol = rtol, atol
        self.max_cells, self.refine = max_cells, int(refine)
        self.delta = float(delta) if delta is not None else select_delta(vf, self.path, drift, self.mode, self.p, options)

    def partition(self, s, t) -> GreedyPartition:
        """Greedy partition of ``[min(s,t), max(s,t)]`` at level ``delta``."""
        lo, hi = min(s, t), max(s, t)
        ts = self.path.times
        grid = np.concatenate([[lo], ts[(ts > lo) & (ts < hi)], [hi]])
        if hi == lo:
            return GreedyPartition(self.delta, np.array([lo, hi]), 0)
        return greedy_partition(self.omega, self.delta, hi, grid)

    def _pieces(self, part: GreedyPartition):
        ts = self.path.times
        out = []
        for a, c in part.intervals:
            cuts = [a]
            if self.max_cells:
                inner = ts[(ts > a) & (ts < c)]
                cuts += list(inner[self.max_cells - 1::self.max_cells])
            cuts.append(c)
            for u, v in zip(cuts[:-1], cuts[1:]):
                sub = np.linspace(u, v, self.refine + 1)
                out += list(zip(sub[:-1], sub[1:]))
        return out

    def __call__(self, s, t, xi) -> FlowResult:
        return self.solve(s, t, xi)

    def solve(self, s, t, xi) -> FlowResult:
        s, t = float(s), float(t)
        xi = np.asarray(xi, dtype=float).reshape(-1)
        if xi.shape[0] != self.drift.m:
            raise DomainError(f"initial value must lie in R^{self.drift.m}")
        if t < s and self.mode == "one_sided":
            raise DomainError("one-sided drifts only define a forward semiflow; backward query refused")
        part = self.partition(s, t)
        pieces = self._pieces(part)
        if t < s:
            pieces = [(c, a) for a, c in reversed(pieces)]
        ts = self.path.times
        times, values, intervals = [s], [xi.copy()], []
        z = xi.copy()
        for a, c in pieces:
            lo, hi = min(a, c), max(a, c)
            us = ts[(ts > lo) & (ts < hi)]
            if c < a:
                us = us[::-1]
            us = np.append(us, c)
            system = RDESystem(self.flow, a, c)
            chi = integrate_chi(self.drift, system, a, c, z, self.rtol, self.atol, dense=True, breaks=ts)
            zs = chi.dense(us).T
            zs[-1] = chi.endpoint
            ys = system.psi(us, zs)
            J = system.inverse_jacobians(np.append(chi.times, us), np.vstack([chi.values, zs]))
            jdev = float(np.max(np.linalg.norm(J - np.eye(self.vf.m), ord=2, axis=(1, 2))))
            intervals.append({
                "t0": a, "t1": c, "omega_tilde": self.omega(lo, hi), "delta": self.delta,
                "jac_dev_max": jdev, "chi_one_var": chi.one_variation, "chi_sup": chi.sup_norm,
                "n_rhs": chi.n_rhs,
            })
            times += list(us)
            values += list(ys)
            z = ys[-1]
        return FlowResult(s, t, xi, self.mode, self.delta, self.p, part, np.asarray(times), np.asarray(values), intervals)


def flow_phi(b: DriftField, vf: VectorFields, x: SampledRoughPath, s, t, xi, mode=None, **kw) -> FlowResult:
    """``phi(s, t, xi)`` with its trajectory and diagnostics (see :class:`DriftFlow`)."""
    return DriftFlow(b, vf, x, mode=mode, **kw).solve(s, t, xi)


# -- stability of the chi equation -------------------------------------------

def perturbation_gap(b: DriftField, system1, system2, xi1, xi2, horizon, s=0.0, rtol=1e-11, atol=1e-13) -> float:
    """``sup_u |z1_u - z2_u|`` for the chi equations of two ``(psi, J)`` systems.

    Both equations are integrated as one stacked system, so they share
    steps and identical inputs give a gap of exactly zero.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    m = xi1.shape[0]

    def fun(u, w):
        if not np.all(np.isfinite(w)):
            raise ExplosionError("ODE solution became non-finite", float(u))
        return np.concatenate([system1.velocity(b, u, w[:m]), system2.velocity(b, u, w[m:])])

    _, ws, _ = _solve_ivp(fun, float(s), float(s) + float(horizon), np.concatenate([xi1, xi2]), rtol, atol)
    return float(np.max(np.linalg.norm(ws[:, :m] - ws[:, m:], axis=1)))


# -- direct batched solver ----------------------------------------------------

def solve_direct_batch(drift: DriftField, vf: VectorFields, times, increments, xi, max_step=0.1,
                       stiffness=0.25, record=False):
    """Solve ``dy = b(y) dt + sigma(y) dx`` for many polyline drivers at once.

    ``increments`` has shape ``(R, n, d)``: the level-1 increments of ``R``
    drivers on the common grid ``times``.  Each cell is integrated by RK4 on
    the autonomous field ``b(y) dt + sigma(y) a`` with a number of sub-steps
    chosen so that ``nu |a| <= max_step`` and ``Lip(b) dt <= stiffness``.

    Returns ``(sup_norms, endpoints, trajectory)``; ``trajectory`` has shape
    ``(R, n + 1, m)`` when ``record`` is set, else ``None``.
    """
    times = np.asarray(times, dtype=float)
    inc = np.asarray(increments, dtype=float)
    R, n, d = inc.shape
    if d != vf.d or n != len(times) - 1:
        raise DomainError("increments must have shape (R, len(times) - 1, d)")
    y = np.broadcast_to(np.asarray(xi, dtype=float), (R, vf.m)).copy()
    sup = np.linalg.norm(y, axis=1)
    traj = np.empty((R, n + 1, vf.m)) if record else None
    if record:
        traj[:, 0] = y
    anorm = np.linalg.norm(inc, axis=2)
    for k in range(n):
        dt = times[k + 1] - times[k]
        a = inc[:, k]
        radius = float(np.max(np.linalg.norm(y, axis=1))) + 1.0 + vf.nu * float(np.max(anorm[:, k]))
        lip = 0.0 if drift.is_zero else drift.local_lipschitz(radius)
        nsub = int(max(1, np.ceil(vf.nu * np.max(anorm[:, k]) / max_step), np.ceil(lip * dt / stiffness)))
        h, ah = dt / nsub, a / nsub

        def F(v):
            out = np.einsum("kmd,kd->km", vf._sig(v), ah)
            if not drift.is_zero:
                out += h * drift._eval(v)
            return out

        for _ in range(nsub):
            k1 = F(y)
            k2 = F(y + 0.5 * k1)
            k3 = F(y + 0.5 * k2)
            k4 = F(y + k3)
            y = y + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            if not np.all(np.isfinite(y)):
                raise ExplosionError("direct solve became non-finite", float(times[k + 1]))
            sup = np.maximum(sup, np.linalg.norm(y, axis=1))
        if record:
            traj[:, k + 1] = y
    return sup, y, traj


def solve_direct(drift: DriftField, vf: VectorFields, x: SampledRoughPath, xi, **kw):
    """Single-path :func:`solve_direct_batch` on the level-1 increments of ``x``.

    Ignores Levy area, so it is meant for polyline lifts.
    """
    inc = np.diff(x.level1, axis=0)[None]
    sup, end, traj = solve_direct_batch(drift, vf, x.times, inc, xi, record=True, **kw)
    return traj[0]
