"""Driving signals: sampled step-2 rough paths, polyline lifts and Gaussian samplers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg

from .errors import DomainError
from .tensor_core import GroupElement, _inv, _mul, _norm, anti


@dataclass(frozen=True, eq=False)
class SampledRoughPath:
    """A G^2(R^d)-valued path sampled on an increasing time grid.

    ``level1[k]`` and ``level2[k]`` are the two levels of ``x_{t_k}``; the path
    starts at the identity.  Between grid points the path is extended by the
    log-linear interpolation ``x_{t_k} (x) exp(theta * log x_{t_k, t_{k+1}})``,
    which is the exact lift for polylines and keeps Chen's relation exact for
    any split of a cell.
    """

    times: np.ndarray
    level1: np.ndarray
    level2: np.ndarray
    p_hint: float = 2.5

    def __post_init__(self):
        t = np.array(self.times, dtype=float).reshape(-1)
        a = np.array(self.level1, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        n, d = a.shape
        B = np.array(self.level2, dtype=float).reshape(n, d, d)
        if t.shape[0] != n:
            raise DomainError(f"{t.shape[0]} times for {n} path values")
        if n < 2:
            raise DomainError("a sampled path needs at least two grid points")
        if np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(B)) and np.all(np.isfinite(t))):
            raise DomainError("path has non-finite entries")
        if np.max(np.abs(a[0])) > 1e-12 or np.max(np.abs(B[0])) > 1e-12:
            raise DomainError("path must start at the identity")
        if self.p_hint < 1:
            raise DomainError("p_hint must be >= 1")
        for arr in (t, a, B):
            arr.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "level1", a)
        object.__setattr__(self, "level2", B)

    # -- basic accessors ---------------------------------------------------
    @property
    def dim(self) -> int:
        return self.level1.shape[1]

    @property
    def n_points(self) -> int:
        return self.times.shape[0]

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def value(self, k) -> GroupElement:
        return GroupElement(self.level1[k], self.level2[k])

    @property
    def values(self):
        return [self.value(k) for k in range(self.n_points)]

    def increment(self, k, l) -> GroupElement:
        """``x_{t_k}^{-1} (x) x_{t_l}``."""
        return GroupElement(*_mul(*_inv(self.level1[k], self.level2[k]), self.level1[l], self.level2[l]))

    @cached_property
    def area(self) -> np.ndarray:
        return anti(self.level2)

    @cached_property
    def cells(self):
        """Level-1 increments and Levy areas of the grid cells, shapes ``(n-1, d)`` and ``(n-1, d, d)``."""
        a, B = _mul(*_inv(self.level1[:-1], self.level2[:-1]), self.level1[1:], self.level2[1:])
        return a, anti(B)

    @cached_property
    def cell_norms(self) -> np.ndarray:
        a, A = self.cells
        return _norm(a, A)

    @cached_property
    def has_area(self) -> bool:
        """Whether any cell carries Levy area (false for polyline lifts)."""
        a, A = self.cells
        scale = max(1.0, float(np.max(np.abs(a))) ** 2)
        return bool(np.max(np.abs(A)) > 1e-14 * scale)

    def geometric_defect(self) -> float:
        B = self.level2
        sym = B + np.swapaxes(B, 1, 2) - self.level1[:, :, None] * self.level1[:, None, :]
        return float(np.max(np.abs(sym)))

    # -- evaluation off the grid ------------------------------------------
    def locate(self, t):
        """Cell index ``k`` and fraction ``theta`` with ``t = t_k + theta (t_{k+1} - t_k)``."""
        t = float(t)
        ts = self.times
        if t < ts[0] - 1e-12 * max(1.0, abs(ts[0])) or t > ts[-1] + 1e-12 * max(1.0, abs(ts[-1])):
            raise DomainError(f"time {t} outside [{ts[0]}, {ts[-1]}]")
        k = int(np.searchsorted(ts, t, side="right")) - 1
        k = min(max(k, 0), len(ts) - 2)
        theta = (t - ts[k]) / (ts[k + 1] - ts[k])
        return k, min(max(theta, 0.0), 1.0)

    def value_at(self, t):
        """Arrays ``(level1, level2)`` of ``x_t``."""
        k, theta = self.locate(t)
        if theta == 0.0:
            return self.level1[k].copy(), self.level2[k].copy()
        a, A = self.cells
        v = theta * a[k]
        piece = 0.5 * np.outer(v, v) + theta * A[k]
        return _mul(self.level1[k], self.level2[k], v, piece)

    def restrict(self, s, t) -> "SampledRoughPath":
        """The path on ``[s, t]``, rebased to start at the identity.

        Grid points strictly inside ``(s, t)`` are kept; off-grid endpoints are
        added by interpolation.
        """
        s, t = float(s), float(t)
        if not t > s:
            raise DomainError(f"need s < t, got [{s}, {t}]")
        ts = self.times
        inner = np.nonzero((ts > s) & (ts < t))[0]
        a0, B0 = self.value_at(s)
        a1, B1 = self.value_at(t)
        l1 = np.concatenate([a0[None], self.level1[inner], a1[None]])
        l2 = np.concatenate([B0[None], self.level2[inner], B1[None]])
        ia, iB = _inv(a0, B0)
        l1, l2 = _mul(ia, iB, l1, l2)
        l1[0] = 0.0
        l2[0] = 0.0
        times = np.concatenate([[s], ts[inner], [t]])
        return SampledRoughPath(times, l1, l2, self.p_hint)

    def reversed(self) -> "SampledRoughPath":
        """Time reversal on ``[0, T - t_0]``: increments run backwards and are inverted."""
        ts = self.times
        times = ts[-1] - ts[::-1]
        ia, iB = _inv(self.level1[-1], self.level2[-1])
        l1, l2 = _mul(ia, iB, self.level1[::-1], self.level2[::-1])
        l1[0] = 0.0
        l2[0] = 0.0
        return SampledRoughPath(times, l1, l2, self.p_hint)

    @cached_property
    def reversed_path(self) -> "SampledRoughPath":
        """Cached :meth:`reversed`."""
        return self.reversed()

    def with_p(self, p) -> "SampledRoughPath":
        return SampledRoughPath(self.times, self.level1, self.level2, float(p))


def lift_piecewise_linear(points, times=None, p_hint=2.5) -> SampledRoughPath:
    """Exact step-2 signature path of the polyline through ``points``.

    ``points`` has shape ``(n, d)`` (or ``(n,)`` for d=1); ``times`` defaults to
    ``linspace(0, 1, n)``.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DomainError("need at least two points to lift a polyline")
    n, d = x.shape
    if times is None:
        times = np.linspace(0.0, 1.0, n)
    times = np.asarray(times, dtype=float)
    if times.shape != (n,):
        raise DomainError(f"expected {n} times, got shape {times.shape}")
    level1 = x - x[0]
    v = np.diff(x, axis=0)
    contrib = level1[:-1, :, None] * v[:, None, :] + 0.5 * v[:, :, None] * v[:, None, :]
    level2 = np.zeros((n, d, d))
    np.cumsum(contrib, axis=0, out=level2[1:])
    return SampledRoughPath(times, level1, level2, p_hint)


def refine_path(path: SampledRoughPath, counts) -> SampledRoughPath:
    """Insert ``counts[k] - 1`` equally spaced points into cell ``k``.

    New values come from the log-linear interpolation, so the refined path is
    the same rough path sampled on a finer grid.
    """
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (path.n_points - 1,))
    if np.any(counts < 1):
        raise DomainError("refinement counts must be >= 1")
    a, A = path.cells
    cell = np.repeat(np.arange(path.n_points - 1), counts)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    theta = (np.arange(cell.shape[0]) - start[cell]) / counts[cell]
    v = theta[:, None] * a[cell]
    piece = 0.5 * v[:, :, None] * v[:, None, :] + theta[:, None, None] * A[cell]
    l1, l2 = _mul(path.level1[cell], path.level2[cell], v, piece)
    ts = path.times
    times = ts[cell] + theta * (ts[cell + 1] - ts[cell])
    l1 = np.concatenate([l1, path.level1[-1:]])
    l2 = np.concatenate([l2, path.level2[-1:]])
    return SampledRoughPath(np.append(times, ts[-1]), l1, l2, path.p_hint)


def dilate(path: SampledRoughPath, eps: float) -> SampledRoughPath:
    """Scale the driver by ``eps``: level 1 by ``eps``, level 2 by ``eps**2``."""
    eps = float(eps)
    if not np.isfinite(eps):
        raise DomainError("dilation factor must be finite")
    return SampledRoughPath(path.times, eps * path.level1, eps * eps * path.level2, path.p_hint)


def constant_path(times, d, p_hint=2.5) -> SampledRoughPath:
    times = np.asarray(times, dtype=float)
    n = times.shape[0]
    return SampledRoughPath(times, np.zeros((n, d)), np.zeros((n, d, d)), p_hint)


# -- Gaussian drivers --------------------------------------------------------

@dataclass(frozen=True)
class GaussianDriverSpec:
    """Fractional Brownian motion on a uniform grid of ``n`` steps over ``[0, T]``."""

    H: float
    d: int = 1
    n: int = 256
    T: float = 1.0
    seed: int = 0
    p: float | None = field(default=None)

    def __post_init__(self):
        if not (1.0 / 3.0 < self.H <= 1.0):
            raise DomainError(f"Hurst parameter must lie in (1/3, 1], got {self.H}")
        if self.d < 1 or self.n < 1:
            raise DomainError("d and n must be positive")
        if self.n > 4096:
            raise DomainError("n > 4096 is too large for the dense Cholesky sampler")
        if not self.T > 0:
            raise DomainError("T must be positive")

    @property
    def rho(self) -> float:
        return 1.0 / (2.0 * self.H)

    @property
    def p_hint(self) -> float:
        if self.p is not None:
            return float(self.p)
        # strictly above 1/H, strictly below 3
        return float(min(1.0 / self.H + 0.1, 0.5 * (1.0 / self.H + 3.0)))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)


@lru_cache(maxsize=16)
def _fgn_cholesky(H, n, T):
    dt = T / n
    k = np.arange(n, dtype=float)
    two_h = 2.0 * H
    gamma = 0.5 * dt**two_h * (np.abs(k + 1) ** two_h - 2.0 * k**two_h + np.abs(k - 1) ** two_h)
    cov = scipy.linalg.toeplitz(gamma)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = cov + 1e-12 * np.diag(np.diag(cov))
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"fGn covariance not positive definite for H={H}, n={n}") from exc
    L.flags.writeable = False
    return L


def sample_fbm(spec: GaussianDriverSpec) -> np.ndarray:
    """``d`` independent fBm coordinates at ``spec.times``; shape ``(n + 1, d)``.

    Exact finite-dimensional law via Cholesky of the increment covariance.
    Deterministic given ``spec.seed``.
    """
    L = _fgn_cholesky(float(spec.H), int(spec.n), float(spec.T))
    z = np.random.default_rng(spec.seed).standard_normal((spec.n, spec.d))
    out = np.zeros((spec.n + 1, spec.d))
    np.cumsum(L @ z, axis=0, out=out[1:])
    return out


def sample_fbm_batch(spec: GaussianDriverSpec, seeds) -> np.ndarray:
    """Stack of ``sample_fbm`` draws, one per seed, shape ``(len(seeds), n + 1, d)``.

    Each replicate uses its own generator, so a replicate does not depend on
    which other seeds share the batch.
    """
    L = _fgn_cholesky(float(spec.H), int(spec.n), float(spec.T))
    z = np.stack([np.random.default_rng(s).standard_normal((spec.n, spec.d)) for s in seeds])
    out = np.zeros((len(z), spec.n + 1, spec.d))
    np.cumsum(np.einsum("ij,rjd->rid", L, z), axis=1, out=out[:, 1:])
    return out


def fbm_path(spec: GaussianDriverSpec) -> SampledRoughPath:
    """Polyline lift of one fBm sample."""
    return lift_piecewise_linear(sample_fbm(spec), spec.times, spec.p_hint)
