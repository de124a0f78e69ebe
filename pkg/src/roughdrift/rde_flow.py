"""Driftless rough differential equations ``dy = sigma(y) dx`` and their flows.

The solver walks the grid cells of a :class:`SampledRoughPath`.  Every cell is
split into uniform sub-steps so that each sub-step satisfies

    nu * N(piece) <= max_step   and   nu^p * N(piece)^p <= step_budget,

with ``N`` the homogeneous norm.  Two one-step maps are available:

``"log_ode"`` (default)
    Classical RK4 on the autonomous vector field
    ``F(y) = sigma(y) a + L(y) : A`` over unit time, where ``(a, A)`` is the
    level-1 increment and Levy area of the piece and
    ``L[alpha, i, j] = sum_beta d_beta sigma^alpha_j sigma^beta_i``.  For
    polyline drivers ``A = 0`` and this is RK4 on the classical ODE.
``"davie"``
    The explicit step-2 Euler step ``y + sigma(y) a + L(y) : B`` with ``B`` the
    full second level.

The tangent flow ``D_xi psi`` is propagated with the exact derivative of the
chosen one-step map, so it agrees with finite differences of ``flow_psi`` up to
round-off.

Shapes: ``sigma(y)`` is ``(m, d)``, ``jac(y)[alpha, i, beta] = d sigma^alpha_i / d y_beta``
is ``(m, d, m)`` and ``hess(y)`` is ``(m, d, m, m)``.  All callables act on a
leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .controls import pvar_norm
from .drivers import SampledRoughPath, refine_path
from .errors import ConfigurationError, DomainError, ExplosionError, SingularJacobianError

FD_STEP = 1e-6
# Constant in |J - I| <= C nu w^{1/p} exp(C nu^p w); about twice the largest value fitted on the presets,
# see tests/test_rde_flow.py::test_jacobian_bound_constant_is_stable.
JACOBIAN_BOUND_C = 1.0
_BLOWUP = 1e150


# -- vector fields -----------------------------------------------------------

@dataclass(eq=False)
class VectorFields:
    """Diffusion coefficients ``sigma = (sigma_1, ..., sigma_d)`` on R^m.

    Parameters
    ----------
    m, d : int
        State and driver dimension.
    field : callable
        ``(k, m) -> (k, m, d)``.
    jac, hess : callable, optional
        First and second derivatives, batched.  Missing ``jac`` is replaced by
        central differences; missing ``hess`` makes the level-2 tangent term use
        finite differences of the level-2 coefficient.
    nu : float
        Declared bound on ``sigma`` and its derivatives.  At construction the
        Frobenius norms of ``sigma`` and ``jac`` are checked against ``nu`` on
        ``n_probes`` quasi-random points of ``[-probe_radius, probe_radius]^m``.
    """

    m: int
    d: int
    field: Callable
    jac: Callable | None = None
    hess: Callable | None = None
    nu: float = 1.0
    gamma_hint: float = 3.0
    name: str = "custom"
    probe_radius: float = 5.0
    n_probes: int = 1000
    validate: bool = True
    is_zero: bool = False
    is_constant: bool = False
    probe_max: dict = field(default_factory=dict, init=False)

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ConfigurationError("m and d must be positive")
        if not (np.isfinite(self.nu) and self.nu >= 0):
            raise ConfigurationError(f"nu must be a finite nonnegative bound, got {self.nu}")
        if self.validate:
            self._probe()

    def _probe(self):
        pts = qmc.Sobol(self.m, scramble=True, seed=12345).random(1024)[: self.n_probes]
        pts = self.probe_radius * (2.0 * pts - 1.0)
        sig = self._sig(pts)
        if sig.shape != (len(pts), self.m, self.d):
            raise ConfigurationError(f"field returned shape {sig.shape[1:]}, expected {(self.m, self.d)}")
        jac = self._jac(pts)
        if jac.shape != (len(pts), self.m, self.d, self.m):
            raise ConfigurationError(f"jac returned shape {jac.shape[1:]}, expected {(self.m, self.d, self.m)}")
        s_max = float(np.max(np.sqrt(np.sum(sig**2, axis=(1, 2)))))
        j_max = float(np.max(np.sqrt(np.sum(jac**2, axis=(1, 2, 3)))))
        self.probe_max = {"sigma": s_max, "jac": j_max}
        slack = self.nu * (1 + 1e-9) + 1e-12
        if s_max > slack:
            raise ConfigurationError(f"nu={self.nu} below sampled sup |sigma| = {s_max:.6g}")
        if j_max > slack:
            raise ConfigurationError(f"nu={self.nu} below sampled sup |D sigma| = {j_max:.6g}")

    # batched evaluations (k, m) -> ...
    def _sig(self, y):
        return np.asarray(self.field(y), dtype=float)

    def _jac(self, y):
        if self.jac is not None:
            return np.asarray(self.jac(y), dtype=float)
        k = y.shape[0]
        out = np.empty((k, self.m, self.d, self.m))
        for b in range(self.m):
            e = np.zeros(self.m)
            e[b] = FD_STEP
            out[..., b] = (self._sig(y + e) - self._sig(y - e)) / (2 * FD_STEP)
        return out

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return self._sig(y[None])[0]
        return self._sig(y)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return self._jac(y[None])[0]
        return self._jac(y)

    def level2_coefficient(self, y):
        """``L[alpha, i, j] = sum_beta d_beta sigma^alpha_j sigma^beta_i``."""
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        Y = y[None] if single else y
        L = np.einsum("kajb,kbi->kaij", self._jac(Y), self._sig(Y))
        return L[0] if single else L


def _sin_field(y):
    return (2.0 + np.sin(y[:, 0]))[:, None, None]


def _sin_jac(y):
    return np.cos(y[:, 0])[:, None, None, None]


def _sin_hess(y):
    return (-np.sin(y[:, 0]))[:, None, None, None, None]


def scalar_sin_field(**kw) -> VectorFields:
    """``sigma(y) = 2 + sin(y)`` on R with a one-dimensional driver; ``nu = 3``."""
    return VectorFields(1, 1, _sin_field, _sin_jac, _sin_hess, nu=3.0, name="scalar-sin", **kw)


@dataclass(eq=False)
class _Trig:
    m: int
    d: int
    amp: float
    freq: float

    def __post_init__(self):
        a, i = np.meshgrid(np.arange(self.m), np.arange(self.d), indexing="ij")
        self.coord = (a + i + 1) % self.m
        self.phase = 0.7 * (a * self.d + i)
        onehot = (self.coord[..., None] == np.arange(self.m)).astype(float)
        self.e1 = onehot
        self.e2 = onehot[..., :, None] * onehot[..., None, :]

    def _arg(self, y):
        return self.freq * y[:, self.coord] + self.phase

    def field(self, y):
        return self.amp * np.sin(self._arg(y))

    def jac(self, y):
        return (self.amp * self.freq * np.cos(self._arg(y)))[..., None] * self.e1

    def hess(self, y):
        return (-self.amp * self.freq**2 * np.sin(self._arg(y)))[..., None, None] * self.e2


def trig_field(m=2, d=2, amp=1.0, freq=1.0, **kw) -> VectorFields:
    """Componentwise trigonometric field ``sigma^alpha_i(y) = amp sin(freq y_c + phase)``.

    Each entry depends on the single coordinate ``c = (alpha + i + 1) mod m``,
    so the field and all its derivatives are bounded;
    ``nu = sqrt(m d) amp max(1, freq, freq^2)``.
    """
    t = _Trig(m, d, float(amp), float(freq))
    nu = np.sqrt(m * d) * amp * max(1.0, freq, freq**2)
    return VectorFields(m, d, t.field, t.jac, t.hess, nu=float(nu), name="sin-rotation", **kw)


def constant_field(M, **kw) -> VectorFields:
    """``sigma(y) = M``; the flow is the translation by ``M x_{s,t}``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m, d = M.shape

    def f(y):
        return np.broadcast_to(M, (y.shape[0], m, d)).copy()

    def j(y):
        return np.zeros((y.shape[0], m, d, m))

    def h(y):
        return np.zeros((y.shape[0], m, d, m, m))

    nu = float(np.sqrt(np.sum(M**2)))
    return VectorFields(m, d, f, j, h, nu=nu, name="constant", is_constant=True, **kw)


def zero_field(m, d, **kw) -> VectorFields:
    vf = constant_field(np.zeros((m, d)), **kw)
    vf.name = "zero"
    vf.is_zero = True
    return vf


def sigma_preset(name, m=None, d=None, **params) -> VectorFields:
    """Named diffusion presets: ``scalar-sin``, ``sin-rotation``, ``constant``, ``zero``."""
    if name == "scalar-sin":
        return scalar_sin_field()
    if name == "sin-rotation":
        return trig_field(m or 2, d or 2, **params)
    if name == "constant":
        M = params.get("matrix")
        if M is None:
            M = params.get("scale", 1.0) * np.eye(m or 1, d or 1)
        return constant_field(M)
    if name == "zero":
        return zero_field(m or 1, d or 1)
    raise ConfigurationError(f"unknown sigma preset {name!r}")


# -- one-step maps -----------------------------------------------------------

def _lev2_apply(vf, y, sig, jac, B):
    """``L(y) : B`` batched."""
    sB = np.einsum("kbi,ij->kbj", sig, B)
    return np.einsum("kajb,kbj->ka", jac, sB), sB


def _lev2_derivative(vf, y, sig, jac, sB, B):
    """``D(L : B)`` at ``y``, shape ``(k, m, m)``."""
    if vf.hess is not None:
        hess = np.asarray(vf.hess(y), dtype=float)
        jB = np.einsum("kbig,ij->kbjg", jac, B)
        return np.einsum("kajbg,kbj->kag", hess, sB) + np.einsum("kajb,kbjg->kag", jac, jB)
    out = np.empty(y.shape + (vf.m,))
    for g in range(vf.m):
        e = np.zeros(vf.m)
        e[g] = FD_STEP
        hi = _lev2_apply(vf, y + e, vf._sig(y + e), vf._jac(y + e), B)[0]
        lo = _lev2_apply(vf, y - e, vf._sig(y - e), vf._jac(y - e), B)[0]
        out[..., g] = (hi - lo) / (2 * FD_STEP)
    return out


def _rhs(vf, y, a, A, area, tangent):
    sig = vf._sig(y)
    F = sig @ a
    if not (tangent or area):
        return F, None
    jac = vf._jac(y)
    DF = np.einsum("kaig,i->kag", jac, a) if tangent else None
    if area:
        LA, sA = _lev2_apply(vf, y, sig, jac, A)
        F = F + LA
        if tangent:
            DF = DF + _lev2_derivative(vf, y, sig, jac, sA, A)
    return F, DF


def _step_log_ode(vf, y, M, a, A, area):
    tangent = M is not None
    k1, K1 = _rhs(vf, y, a, A, area, tangent)
    y2 = y + 0.5 * k1
    k2, K2 = _rhs(vf, y2, a, A, area, tangent)
    y3 = y + 0.5 * k2
    k3, K3 = _rhs(vf, y3, a, A, area, tangent)
    y4 = y + k3
    k4, K4 = _rhs(vf, y4, a, A, area, tangent)
    y_new = y + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    if not tangent:
        return y_new, None
    # chain rule through the stages
    M1 = K1 @ M
    M2 = K2 @ (M + 0.5 * M1)
    M3 = K3 @ (M + 0.5 * M2)
    M4 = K4 @ (M + M3)
    return y_new, M + (M1 + 2 * M2 + 2 * M3 + M4) / 6.0


def _step_davie(vf, y, M, a, A, area):
    B = 0.5 * np.outer(a, a) + A
    sig = vf._sig(y)
    jac = vf._jac(y)
    LB, sB = _lev2_apply(vf, y, sig, jac, B)
    y_new = y + sig @ a + LB
    if M is None:
        return y_new, None
    DF = np.einsum("kaig,i->kag", jac, a) + _lev2_derivative(vf, y, sig, jac, sB, B)
    return y_new, M + DF @ M


_SCHEMES = {"log_ode": _step_log_ode, "davie": _step_davie}


# -- solver ------------------------------------------------------------------

@dataclass(frozen=True)
class SolverOptions:
    """Sub-stepping and scheme choice.

    ``max_step`` bounds ``nu * N(piece)``; ``step_budget`` bounds
    ``nu^p * N(piece)^p`` (``p`` defaults to the path's ``p_hint``).
    """

    scheme: str = "log_ode"
    max_step: float = 0.1
    step_budget: float = 0.1
    p: float | None = None

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from {sorted(_SCHEMES)}")
        if not (self.max_step > 0 and self.step_budget > 0):
            raise ConfigurationError("max_step and step_budget must be positive")


@dataclass(frozen=True, eq=False)
class Pieces:
    """Sub-steps covering ``[s, t]``: increments, areas, start and end times."""

    a: np.ndarray
    A: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    area: np.ndarray
    cell_end: np.ndarray

    def __len__(self):
        return self.t1.shape[0]


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    values: np.ndarray

    @property
    def endpoint(self):
        return self.values[-1]


class RDEFlow:
    """The flow ``psi(s, t, xi)`` of ``dy = sigma(y) dx`` along one sampled path.

    Holds the per-cell sub-step counts so repeated queries share one
    discretisation; queries with ``t < s`` run on the reversed path.
    """

    def __init__(self, vf: VectorFields, path: SampledRoughPath, options: SolverOptions | None = None):
        if vf.d != path.dim:
            raise DomainError(f"vector fields expect a {vf.d}-dimensional driver, path has d={path.dim}")
        self.vf = vf
        self.path = path
        self.options = options or SolverOptions()
        self.p = float(self.options.p or path.p_hint)
        self._step = _SCHEMES[self.options.scheme]
        self._reverse = None
        a, A = path.cells
        h = min(self.options.max_step, self.options.step_budget ** (1.0 / self.p))
        if vf.nu == 0 or vf.is_zero:
            n = np.ones(len(a), dtype=int)
        else:
            h = h / vf.nu
            la = np.sqrt(np.sum(a * a, axis=1))
            lA = np.sqrt(np.sum(A * A, axis=(1, 2)))
            n = np.maximum(1, np.ceil(np.maximum(la / h, 2.0 * lA / h**2) - 1e-9)).astype(int)
        self.substeps = n
        self.cell_area = np.sqrt(np.sum(A * A, axis=(1, 2))) > 1e-14 * np.maximum(1.0, np.sum(a * a, axis=1))

    @property
    def refined_path(self) -> SampledRoughPath:
        """The driver sampled at every sub-step boundary (same rough path, finer grid)."""
        if getattr(self, "_refined", None) is None:
            self._refined = self.path if np.all(self.substeps == 1) else refine_path(self.path, self.substeps)
        return self._refined

    @property
    def reverse(self) -> "RDEFlow":
        if self._reverse is None:
            self._reverse = RDEFlow(self.vf, self.path.reversed_path, self.options)
            self._reverse._reverse = self
        return self._reverse

    def _check_time(self, t):
        ts = self.path.times
        tol = 1e-12 * max(1.0, abs(ts[-1]))
        if t < ts[0] - tol or t > ts[-1] + tol:
            raise DomainError(f"time {t} outside the path span [{ts[0]}, {ts[-1]}]")
        return min(max(float(t), ts[0]), ts[-1])

    def pieces(self, s, t) -> Pieces:
        """Sub-steps covering ``[s, t]`` for ``s <= t``."""
        s, t = self._check_time(s), self._check_time(t)
        if t < s:
            raise DomainError("pieces() needs s <= t; use propagate for backward queries")
        if t == s:
            d = self.path.dim
            e = np.zeros(0)
            return Pieces(np.zeros((0, d)), np.zeros((0, d, d)), e, e, np.zeros(0, bool), np.zeros(0, bool))
        path = self.path
        ts = path.times
        ks, ths = path.locate(s)
        kt, tht = path.locate(t)
        if tht == 0.0 and kt > ks:
            kt, tht = kt - 1, 1.0
        ca, cA = path.cells
        fr_lo, fr_hi, cells = [], [], []
        for k in range(ks, kt + 1):
            lo = ths if k == ks else 0.0
            hi = tht if k == kt else 1.0
            n = self.substeps[k]
            grid = np.arange(1, n) / n
            cuts = np.concatenate([[lo], grid[(grid > lo + 1e-13) & (grid < hi - 1e-13)], [hi]])
            if hi - lo <= 1e-15:
                continue
            fr_lo.append(cuts[:-1])
            fr_hi.append(cuts[1:])
            cells.append(np.full(len(cuts) - 1, k))
        if not cells:
            # interval below fraction resolution: one piece of cell ks
            width = (t - s) / (ts[ks + 1] - ts[ks])
            fr_lo, fr_hi, cells = [np.array([ths])], [np.array([ths + width])], [np.array([ks])]
        lo = np.concatenate(fr_lo)
        hi = np.concatenate(fr_hi)
        cell = np.concatenate(cells)
        w = hi - lo
        dt = ts[cell + 1] - ts[cell]
        t0 = ts[cell] + lo * dt
        t1 = ts[cell] + hi * dt
        t0[0], t1[-1] = s, t
        cell_end = hi >= 1.0 - 1e-13
        cell_end[-1] = True
        return Pieces(w[:, None] * ca[cell], w[:, None, None] * cA[cell], t0, t1, self.cell_area[cell], cell_end)

    def run(self, y, M, pcs: Pieces, j0=0, j1=None, record=None):
        """Apply pieces ``j0:j1`` to a batch ``y`` (and tangent ``M``)."""
        j1 = len(pcs) if j1 is None else j1
        for j in range(j0, j1):
            y, M = self._step(self.vf, y, M, pcs.a[j], pcs.A[j], bool(pcs.area[j]) or self.options.scheme == "davie")
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > _BLOWUP:
                raise ExplosionError("RDE solution left every bounded set", float(pcs.t1[j]))
            if record is not None and pcs.cell_end[j]:
                record.append((pcs.t1[j], y))
        return y, M

    def partial(self, y, M, pcs: Pieces, j, frac):
        """Apply the first fraction ``frac`` of piece ``j``."""
        if frac <= 0.0:
            return y, M
        area = bool(pcs.area[j]) or self.options.scheme == "davie"
        return self._step(self.vf, y, M, frac * pcs.a[j], frac * pcs.A[j], area)

    def propagate(self, y0, s, t, tangent=False, record=False):
        """Solve from ``s`` to ``t`` for a batch ``y0`` of shape ``(k, m)``.

        Returns ``(y, M, trajectory)``; ``M`` is the Jacobian batch when
        ``tangent`` is set, ``trajectory`` lists ``(time, y)`` at ``s``, every
        grid time strictly between, and ``t`` when ``record`` is set.
        """
        y = np.array(y0, dtype=float)
        if y.ndim != 2 or y.shape[1] != self.vf.m:
            raise DomainError(f"initial batch must have shape (k, {self.vf.m})")
        if t < s:
            Tend = self.path.T
            y, M, rec = self.reverse.propagate(y, Tend - s, Tend - t, tangent, record)
            if rec is not None:
                rec = [(Tend - u, v) for u, v in rec]
            return y, M, rec
        s, t = self._check_time(s), self._check_time(t)
        M = np.broadcast_to(np.eye(self.vf.m), (y.shape[0], self.vf.m, self.vf.m)).copy() if tangent else None
        rec = [(s, y.copy())] if record else None
        if t > s and not self.vf.is_zero:
            y, M = self.run(y, M, self.pieces(s, t), record=rec)
        elif record and t > s:
            rec.append((t, y.copy()))
        return y, M, rec

    def anchored(self, s, t) -> "AnchoredFlow":
        return AnchoredFlow(self, s, t)


class AnchoredFlow:
    """``u -> (psi(s, u, z), D psi(s, u, z))`` for ``u`` between a fixed anchor ``s`` and ``t``.

    Uses the sub-steps of the full solve on ``[s, t]`` and cuts the last one,
    so values agree with direct solves on the same discretisation.  Works in
    both time directions.
    """

    def __init__(self, flow: RDEFlow, s, t):
        self.s, self.t = float(s), float(t)
        self.backward = t < s
        if self.backward:
            Tend = flow.path.T
            self.flow = flow.reverse
            self._map = lambda u: Tend - u
        else:
            self.flow = flow
            self._map = lambda u: u
        self.pcs = self.flow.pieces(self._map(self.s), self._map(self.t))

    def _locate(self, u):
        v = self._map(float(u))
        pcs = self.pcs
        if len(pcs) == 0:
            return 0, 0.0
        j = int(np.searchsorted(pcs.t1, v, side="right"))
        if j >= len(pcs):
            return len(pcs), 0.0
        frac = (v - pcs.t0[j]) / (pcs.t1[j] - pcs.t0[j])
        return j, min(max(frac, 0.0), 1.0)

    def evaluate(self, u, z, tangent=True):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        m = z.shape[1]
        M = np.broadcast_to(np.eye(m), (z.shape[0], m, m)).copy() if tangent else None
        if self.flow.vf.is_zero:
            return z.copy(), M
        j, frac = self._locate(u)
        y, M = self.flow.run(z, M, self.pcs, 0, j)
        if j < len(self.pcs):
            y, M = self.flow.partial(y, M, self.pcs, j, frac)
        return y, M

    def evaluate_many(self, us, zs, tangent=False):
        """Values at increasing (in the flow direction) times ``us``, with ``zs[i]`` started at the anchor.

        ``zs`` has shape ``(len(us), m)``; one pass over the pieces.
        """
        us = np.asarray(us, dtype=float)
        zs = np.asarray(zs, dtype=float)
        n, m = zs.shape
        out = np.empty_like(zs)
        Ms = np.empty((n, m, m)) if tangent else None
        if self.flow.vf.is_zero:
            out[:] = zs
            if tangent:
                Ms[:] = np.eye(m)
            return out, Ms
        locs = [self._locate(u) for u in us]
        order = np.argsort([j + f for j, f in locs], kind="stable")
        y = zs.copy()
        M = np.broadcast_to(np.eye(m), (n, m, m)).copy() if tangent else None
        done = 0
        for idx in order:
            j, frac = locs[idx]
            if j > done:
                y, M = self.flow.run(y, M, self.pcs, done, j)
                done = j
            yi, Mi = y[idx:idx + 1], (M[idx:idx + 1] if tangent else None)
            if j < len(self.pcs):
                yi, Mi = self.flow.partial(yi, Mi, self.pcs, j, frac)
            out[idx] = yi[0]
            if tangent:
                Ms[idx] = Mi[0]
        return out, Ms


@lru_cache(maxsize=32)
def get_flow(vf: VectorFields, path: SampledRoughPath, options: SolverOptions | None = None) -> RDEFlow:
    """Shared :class:`RDEFlow` for a (fields, path, options) triple."""
    return RDEFlow(vf, path, options)


def _span(path, s, t):
    return path.start if s is None else float(s), path.T if t is None else float(t)


def solve_rde(vf, x: SampledRoughPath, xi, s=None, t=None, options=None) -> Trajectory:
    """Solve ``dy = sigma(y) dx`` from ``y_s = xi`` to time ``t`` (``t < s`` solves backwards).

    The trajectory is reported at ``s``, at every grid time strictly between
    ``s`` and ``t`` and at ``t``.
    """
    s, t = _span(x, s, t)
    xi = np.asarray(xi, dtype=float).reshape(1, -1)
    _, _, rec = get_flow(vf, x, options).propagate(xi, s, t, record=True)
    return Trajectory(np.array([r[0] for r in rec]), np.array([r[1][0] for r in rec]))


def flow_psi(vf, x: SampledRoughPath, s, t, xi, options=None) -> np.ndarray:
    """``psi(s, t, xi)``; ``xi`` may be a single point ``(m,)`` or a batch ``(k, m)``."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    y, _, _ = get_flow(vf, x, options).propagate(np.atleast_2d(xi), float(s), float(t))
    return y[0] if single else y


def jacobian_flow(vf, x: SampledRoughPath, s, t, xi, options=None) -> np.ndarray:
    """``D_xi psi(s, t, xi)``, shape ``(m, m)`` (or ``(k, m, m)`` for a batch)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    _, M, _ = get_flow(vf, x, options).propagate(np.atleast_2d(xi), float(s), float(t), tangent=True)
    return M[0] if single else M


def inverse_jacobian(vf, x: SampledRoughPath, s, t, xi, options=None) -> np.ndarray:
    """``J(s, t, xi) = (D_xi psi(s, t, xi))^{-1}``."""
    M = jacobian_flow(vf, x, s, t, xi, options)
    try:
        J = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobianError(f"flow Jacobian singular on [{s}, {t}]") from exc
    if not np.all(np.isfinite(J)):
        raise SingularJacobianError(f"flow Jacobian singular on [{s}, {t}]")
    return J


def jacobian_bound_check(vf, x: SampledRoughPath, s, t, xi, C=JACOBIAN_BOUND_C, p=None, options=None) -> dict:
    """Compare ``|J - I|`` with ``C nu w^{1/p} exp(C nu^p w)``, ``w = ||x||^p_{p-var;[s,t]}``."""
    p = float(p or x.p_hint)
    lo, hi = min(s, t), max(s, t)
    w = pvar_norm(x, p, lo, hi) ** p if hi > lo else 0.0
    J = inverse_jacobian(vf, x, s, t, xi, options)
    lhs = float(np.linalg.norm(J - np.eye(J.shape[0]), 2))
    rhs = float(C * vf.nu * w ** (1.0 / p) * np.exp(C * vf.nu**p * w))
    return {"deviation": lhs, "bound": rhs, "omega": w, "ok": lhs <= rhs + 1e-12}
