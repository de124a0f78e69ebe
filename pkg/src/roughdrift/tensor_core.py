"""Step-2 truncated tensor algebra over R^d.

A group element of G^2(R^d) is stored as a pair ``(level1, level2)`` with
``level1`` of shape ``(d,)`` and ``level2`` of shape ``(d, d)``; the scalar
level is always 1 and is not stored.  Weakly geometric elements satisfy
``level2 + level2.T == outer(level1, level1)``.

Most functions come in two flavours: the public ones act on
:class:`GroupElement`, the underscored array versions broadcast over leading
axes and are what the path and p-variation code use internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Point of G^2(R^d)."""

    level1: np.ndarray
    level2: np.ndarray

    def __post_init__(self):
        a = np.array(self.level1, dtype=float).reshape(-1)
        B = np.array(self.level2, dtype=float)
        d = a.shape[0]
        if d < 1:
            raise DomainError("dimension must be at least 1")
        if B.shape != (d, d):
            raise DomainError(f"level2 must have shape {(d, d)}, got {B.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(B))):
            raise DomainError("group element has non-finite entries")
        a.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "level1", a)
        object.__setattr__(self, "level2", B)

    @property
    def dim(self) -> int:
        return self.level1.shape[0]

    @property
    def area(self) -> np.ndarray:
        """Antisymmetric part of the second level (Levy area matrix)."""
        return anti(self.level2)

    def geometric_defect(self) -> float:
        """Max entry of ``level2 + level2.T - level1 (x) level1``."""
        a, B = self.level1, self.level2
        return float(np.max(np.abs(B + B.T - np.outer(a, a))))

    def is_geometric(self, rtol=1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.level2))), float(np.max(np.abs(self.level1))) ** 2)
        return self.geometric_defect() <= rtol * scale

    def __matmul__(self, other):
        return chen_mul(self, other)

    def __repr__(self):
        return f"GroupElement(level1={self.level1.tolist()}, level2={self.level2.tolist()})"


def identity(d: int) -> GroupElement:
    return GroupElement(np.zeros(d), np.zeros((d, d)))


def anti(B):
    """Antisymmetric part of the last two axes."""
    B = np.asarray(B)
    return 0.5 * (B - np.swapaxes(B, -1, -2))


def segment(v, area=None) -> GroupElement:
    """Signature of the straight line with increment ``v``, optionally with extra area.

    ``area`` must be antisymmetric; the result is ``exp(v + area)`` truncated at level 2.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    B = 0.5 * np.outer(v, v)
    if area is not None:
        B = B + np.asarray(area, dtype=float)
    return GroupElement(v, B)


def _check_dims(g: GroupElement, h: GroupElement):
    if g.dim != h.dim:
        raise DomainError(f"dimension mismatch: {g.dim} vs {h.dim}")


# -- array kernels ---------------------------------------------------------

def _mul(a1, B1, a2, B2):
    return a1 + a2, B1 + B2 + a1[..., :, None] * a2[..., None, :]


def _inv(a, B):
    return -a, -B + a[..., :, None] * a[..., None, :]


def _norm(a, A):
    """Homogeneous norm from level 1 and the antisymmetric part of level 2."""
    # rescale before squaring so tiny increments do not underflow
    s1 = np.max(np.abs(a), axis=-1)
    w1 = np.where(s1 > 0, s1, 1.0)
    l1 = s1 * np.sqrt(np.sum((a / w1[..., None]) ** 2, axis=-1))
    s2 = np.max(np.abs(A), axis=(-2, -1))
    w2 = np.where(s2 > 0, s2, 1.0)
    l2 = np.sqrt(2.0 * s2 * np.sqrt(np.sum((A / w2[..., None, None]) ** 2, axis=(-2, -1))))
    return np.maximum(l1, l2)


def _dilate(a, B, eps):
    return eps * a, (eps * eps) * B


# -- public operations -----------------------------------------------------

def chen_mul(g: GroupElement, h: GroupElement) -> GroupElement:
    """Group product ``g (x) h`` truncated at level 2."""
    _check_dims(g, h)
    return GroupElement(*_mul(g.level1, g.level2, h.level1, h.level2))


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(*_inv(g.level1, g.level2))


def homogeneous_norm(g: GroupElement) -> float:
    """``max(|level1|, sqrt(2 ||Anti(level2)||_F))``.

    Homogeneous of degree one under dilation and equivalent to the
    Carnot-Caratheodory norm.  It is symmetric under inversion and
    subadditive, ``N(gh) <= N(g) + N(h)``, so the induced distance is a metric.
    """
    return float(_norm(g.level1, anti(g.level2)))


def distance(g: GroupElement, h: GroupElement) -> float:
    _check_dims(g, h)
    a, B = _mul(*_inv(g.level1, g.level2), h.level1, h.level2)
    return float(_norm(a, anti(B)))


def dilate_element(g: GroupElement, eps: float) -> GroupElement:
    """Dilation ``delta_eps``: level 1 scaled by ``eps``, level 2 by ``eps**2``."""
    return GroupElement(*_dilate(g.level1, g.level2, float(eps)))
