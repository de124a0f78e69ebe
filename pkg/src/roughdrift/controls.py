"""Control functions, p-variation and Hoelder norms, and greedy partitions.

All suprema are taken over partitions made of grid points of the sampled
path.  The p-variation is the exact value for the grid skeleton, computed by
the O(n^2) dynamic programme

    V[j] = max_{k < j} V[k] + d(x_{t_k}, x_{t_j})^p,

which is what ``omega(s, t) = ||x||_{p-var;[s,t]}^p`` means on a grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drivers import SampledRoughPath
from .errors import DomainError
from .tensor_core import _norm


# -- distances between grid points ---------------------------------------

def _group_dist_fn(path: SampledRoughPath):
    a, A = path.level1, path.area

    def dist(i, j):
        ak = a[i:j]
        da = a[j] - ak
        cross = ak[:, :, None] * a[j][None, None, :]
        dA = A[j] - A[i:j] - 0.5 * (cross - np.swapaxes(cross, 1, 2))
        return _norm(da, dA)

    return dist


def _euclid_dist_fn(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]

    def dist(i, j):
        diff = y[j] - y[i:j]
        return np.sqrt(np.sum(diff * diff, axis=1))

    return dist


def _pair_dist_fn(x: SampledRoughPath, y: SampledRoughPath):
    ax, Ax = x.level1, x.area
    ay, Ay = y.level1, y.area

    def inc(a, A, i, j):
        ak = a[i:j]
        cross = ak[:, :, None] * a[j][None, None, :]
        return a[j] - ak, A[j] - A[i:j] - 0.5 * (cross - np.swapaxes(cross, 1, 2))

    def dist(i, j):
        gx, GX = inc(ax, Ax, i, j)
        gy, GY = inc(ay, Ay, i, j)
        # g^{-1} h for g = (gx, GX + sym), h = (gy, GY + sym)
        cross = gx[:, :, None] * gy[:, None, :]
        return _norm(gy - gx, GY - GX - 0.5 * (cross - np.swapaxes(cross, 1, 2)))

    return dist


def _dp_row(dist, i, n, p, stop=None):
    """``V[j - i] = ||x||^p_{p-var;[t_i, t_j]}`` for ``j = i..n-1``.

    With ``stop`` the row is cut right after the first entry ``>= stop``.
    """
    V = np.zeros(n - i)
    for j in range(i + 1, n):
        V[j - i] = np.max(V[: j - i] + dist(i, j) ** p)
        if stop is not None and V[j - i] >= stop:
            return V[: j - i + 1]
    return V


def _grid_indices(times, s, t):
    times = np.asarray(times)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(times))))
    if s is None:
        s = times[0]
    if t is None:
        t = times[-1]
    if s < times[0] - tol or t > times[-1] + tol or t < s:
        raise DomainError(f"interval [{s}, {t}] not inside grid span [{times[0]}, {times[-1]}]")
    idx = np.nonzero((times >= s - tol) & (times <= t + tol))[0]
    return idx


def _as_points_and_times(path, times):
    if isinstance(path, SampledRoughPath):
        return path, path.times
    y = np.asarray(path, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if times is None:
        times = np.arange(y.shape[0], dtype=float)
    return y, np.asarray(times, dtype=float)


def pvar_norm(path, p, s=None, t=None, times=None) -> float:
    """p-variation of a sampled path on ``[s, t]``.

    ``path`` is either a :class:`SampledRoughPath` (homogeneous-norm distance)
    or an array of points in R^m (Euclidean distance; ``times`` optional).
    For rough paths, off-grid endpoints are included by interpolation.
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    obj, ts = _as_points_and_times(path, times)
    if isinstance(obj, SampledRoughPath):
        s0 = ts[0] if s is None else float(s)
        t0 = ts[-1] if t is None else float(t)
        _grid_indices(ts, s0, t0)
        if t0 == s0:
            return 0.0
        on_grid = np.any(np.isclose(ts, s0, rtol=0, atol=1e-12)) and np.any(np.isclose(ts, t0, rtol=0, atol=1e-12))
        sub = obj if (s0 == ts[0] and t0 == ts[-1]) else (None if on_grid else obj.restrict(s0, t0))
        if sub is None:
            idx = _grid_indices(ts, s0, t0)
            i0, i1 = int(idx[0]), int(idx[-1])
            V = _dp_row(_group_dist_fn(obj), i0, i1 + 1, p)
            return float(V[-1] ** (1.0 / p))
        V = _dp_row(_group_dist_fn(sub), 0, sub.n_points, p)
        return float(V[-1] ** (1.0 / p))
    idx = _grid_indices(ts, s, t)
    if len(idx) < 2:
        return 0.0
    y = obj[idx]
    V = _dp_row(_euclid_dist_fn(y), 0, len(idx), p)
    return float(V[-1] ** (1.0 / p))


def pvar_distance(x: SampledRoughPath, y: SampledRoughPath, p) -> float:
    """Inhomogeneous p-variation distance between two paths on the same grid."""
    if x.dim != y.dim or x.times.shape != y.times.shape or not np.allclose(x.times, y.times, rtol=0, atol=1e-12):
        raise DomainError("paths must share dimension and grid (resample first)")
    V = _dp_row(_pair_dist_fn(x, y), 0, x.n_points, p)
    return float(V[-1] ** (1.0 / p))


def holder_norm(path, p, times=None) -> float:
    """``max_{u < v} d(x_u, x_v) / (v - u)^{1/p}`` over grid pairs."""
    obj, ts = _as_points_and_times(path, times)
    dist = _group_dist_fn(obj) if isinstance(obj, SampledRoughPath) else _euclid_dist_fn(obj)
    n = len(ts)
    best = 0.0
    for j in range(1, n):
        r = dist(0, j) / (ts[j] - ts[:j]) ** (1.0 / p)
        best = max(best, float(np.max(r)))
    return best


def omega_matrix(path, p, times=None) -> np.ndarray:
    """Full table ``W[i, j] = ||x||^p_{p-var;[t_i, t_j]}`` (zero below the diagonal)."""
    obj, ts = _as_points_and_times(path, times)
    dist = _group_dist_fn(obj) if isinstance(obj, SampledRoughPath) else _euclid_dist_fn(obj)
    n = len(ts)
    W = np.zeros((n, n))
    for i in range(n - 1):
        W[i, i:] = _dp_row(dist, i, n, p)
    return W


# -- control functions ---------------------------------------------------

class ControlFunction:
    """Superadditive ``omega(s, t)`` on ``0 <= s <= t <= T``."""

    T: float

    def __call__(self, s, t) -> float:
        raise NotImplementedError

    def row(self, s, us, stop=None) -> np.ndarray:
        """``omega(s, u)`` for increasing ``us``; may stop after the first value ``>= stop``."""
        out = []
        for u in us:
            out.append(self(s, u))
            if stop is not None and out[-1] >= stop:
                break
        return np.asarray(out)

    def __add__(self, other):
        return SumControl([self, other])


@dataclass(eq=False)
class HolderControl(ControlFunction):
    """``omega(s, t) = K^p |t - s|``, the control of a 1/p-Hoelder path with norm K."""

    K: float
    p: float = 1.0
    T: float = 1.0

    def __call__(self, s, t):
        return self.K**self.p * abs(t - s)

    def row(self, s, us, stop=None):
        vals = self.K**self.p * np.abs(np.asarray(us, dtype=float) - s)
        if stop is not None:
            hit = np.nonzero(vals >= stop)[0]
            if hit.size:
                vals = vals[: hit[0] + 1]
        return vals


@dataclass(eq=False)
class PVarControl(ControlFunction):
    """``omega(s, t) = ||x||^p_{p-var;[s,t]}`` of a sampled rough path."""

    path: SampledRoughPath
    p: float

    def __post_init__(self):
        self._dist = _group_dist_fn(self.path)

    @property
    def T(self):
        return self.path.T

    def __call__(self, s, t):
        if t <= s:
            return 0.0
        return pvar_norm(self.path, self.p, s, t) ** self.p

    def row(self, s, us, stop=None):
        ts = self.path.times
        i = int(np.searchsorted(ts, s))
        us = np.asarray(us, dtype=float)
        if i >= len(ts) or abs(ts[i] - s) > 1e-12 * max(1.0, abs(s)):
            return super().row(s, us, stop)
        jdx = np.searchsorted(ts, us)
        if np.any(jdx >= len(ts)) or np.any(np.abs(ts[np.minimum(jdx, len(ts) - 1)] - us) > 1e-12 * max(1.0, abs(ts[-1]))):
            return super().row(s, us, stop)
        n = int(jdx[-1]) + 1 if len(us) else i + 1
        V = self._full_row(i, n, stop)
        m = np.searchsorted(jdx, i + len(V) - 1, side="right")
        return V[jdx[:m] - i]

    def _full_row(self, i, n, stop):
        return _dp_row(self._dist, i, n, self.p, stop)


@dataclass(eq=False)
class SumControl(ControlFunction):
    parts: list

    @property
    def T(self):
        return max(getattr(c, "T", 0.0) for c in self.parts)

    def __call__(self, s, t):
        return float(sum(c(s, t) for c in self.parts))

    def row(self, s, us, stop=None):
        rows = [c.row(s, us, stop) for c in self.parts]
        n = min(len(r) for r in rows)
        total = np.sum([r[:n] for r in rows], axis=0)
        if stop is not None:
            hit = np.nonzero(total >= stop)[0]
            if hit.size:
                total = total[: hit[0] + 1]
        return total


def pvar_control(path: SampledRoughPath, p=None) -> PVarControl:
    return PVarControl(path, float(path.p_hint if p is None else p))


def tilde_control(path: SampledRoughPath, p=None) -> SumControl:
    """``omega(s, t) + |t - s|`` with omega the p-variation control of ``path``."""
    return SumControl([HolderControl(1.0, 1.0, path.T), pvar_control(path, p)])


# -- greedy partitions -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class GreedyPartition:
    delta: float
    times: np.ndarray
    n_delta: int

    @property
    def intervals(self):
        return list(zip(self.times[:-1], self.times[1:]))


def greedy_partition(omega: ControlFunction, delta, T, grid) -> GreedyPartition:
    """Stopping times ``tau_{n+1} = inf{u > tau_n : omega(tau_n, u) >= delta} ^ T`` on a grid.

    ``tau_0 = grid[0]``.  ``n_delta = sup{n : tau_n < T}``, the number of
    stopping times strictly between ``tau_0`` and ``T``.
    """
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    grid = np.asarray(grid, dtype=float)
    T = float(T)
    if np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be increasing")
    grid = grid[grid < T - 1e-14 * max(1.0, abs(T))]
    grid = np.append(grid, T)
    thr = delta * (1.0 - 1e-12)
    taus = [grid[0]]
    i = 0
    while i < len(grid) - 1:
        vals = omega.row(grid[i], grid[i + 1:], stop=thr)
        hit = np.nonzero(vals >= thr)[0]
        if hit.size == 0:
            break
        i = i + 1 + int(hit[0])
        if i == len(grid) - 1:
            break
        taus.append(grid[i])
    taus.append(T)
    times = np.asarray(taus)
    return GreedyPartition(float(delta), times, max(len(times) - 2, 0))


def n_delta(omega: ControlFunction, delta, grid, T=None) -> int:
    grid = np.asarray(grid, dtype=float)
    return greedy_partition(omega, delta, grid[-1] if T is None else T, grid).n_delta
